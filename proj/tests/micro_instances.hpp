#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "relfuse/dataset.hpp"
#include "relfuse/metrics.hpp"

namespace relfuse::testing {

// Tiny evaluation instance: at most 5 images, 4 objects, 3 predicates.
struct MicroInstance {
  int num_predicates = 3;
  std::vector<ImageRecord> images;
  std::vector<ImagePredictions> predictions;
};

// Boxes live on a coarse integer grid so exact-threshold overlaps and
// repeated localizations happen often.
inline Box grid_box(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> c(0, 4);
  std::uniform_int_distribution<int> s(1, 3);
  const double x = 2 * c(rng), y = 2 * c(rng);
  return {x, y, x + 2 * s(rng), y + 2 * s(rng)};
}

inline MicroInstance make_micro_instance(std::mt19937_64& rng) {
  MicroInstance inst;
  std::uniform_int_distribution<int> num_pred_dist(1, 3);
  inst.num_predicates = num_pred_dist(rng);
  const int num_classes = 3;
  std::uniform_int_distribution<int> images(1, 5);
  std::uniform_int_distribution<int> objects(0, 4);
  std::uniform_int_distribution<int> cls(0, num_classes - 1);
  std::uniform_int_distribution<int> pred(1, inst.num_predicates);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int n_img = images(rng);
  for (int i = 0; i < n_img; ++i) {
    ImageRecord rec;
    rec.image_id = "img" + std::to_string(i);
    rec.width = rec.height = 20;
    const int n_obj = objects(rng);
    for (int k = 0; k < n_obj; ++k) rec.gt_boxes.push_back({cls(rng), grid_box(rng), {}});
    for (int s = 0; s < n_obj; ++s)
      for (int o = 0; o < n_obj; ++o)
        if (s != o && unit(rng) < 0.4) rec.gt_triplets.push_back({s, pred(rng), o});

    ImagePredictions ip;
    ip.image_id = rec.image_id;
    // Candidate localizations: gt boxes (perhaps perturbed) plus random ones.
    std::vector<std::pair<GtBox, GtBox>> locs;
    for (const auto& t : rec.gt_triplets) {
      GtBox s = rec.gt_boxes[t.sub], o = rec.gt_boxes[t.obj];
      if (unit(rng) < 0.3) s.box = grid_box(rng);
      if (unit(rng) < 0.2) o.label = cls(rng);
      locs.emplace_back(s, o);
    }
    const int extra = std::uniform_int_distribution<int>(0, 3)(rng);
    for (int e = 0; e < extra; ++e)
      locs.emplace_back(GtBox{cls(rng), grid_box(rng), {}}, GtBox{cls(rng), grid_box(rng), {}});
    for (const auto& [s, o] : locs) {
      for (int p = 1; p <= inst.num_predicates; ++p) {
        if (unit(rng) < 0.5) continue;
        // Quantized scores produce ties now and then.
        const double score = std::floor(unit(rng) * 20.0) / 20.0;
        ip.triplets.push_back({s.box, s.label, p, o.box, o.label, score});
      }
    }
    std::stable_sort(ip.triplets.begin(), ip.triplets.end(),
                     [](const auto& a, const auto& b) { return a.score > b.score; });
    inst.images.push_back(std::move(rec));
    inst.predictions.push_back(std::move(ip));
  }
  return inst;
}

inline std::vector<std::vector<PredictedTriplet>> triplets_of(const MicroInstance& inst) {
  std::vector<std::vector<PredictedTriplet>> out;
  for (const auto& p : inst.predictions) out.push_back(p.triplets);
  return out;
}

inline std::vector<std::vector<GtRelation>> relations_of(const MicroInstance& inst) {
  std::vector<std::vector<GtRelation>> out;
  for (const auto& r : inst.images) out.push_back(gt_relations(r));
  return out;
}

}  // namespace relfuse::testing
