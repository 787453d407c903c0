#pragma once

// Brute-force reference evaluator, written independently of the library's
// metric code and used as an oracle in tests.

#include <algorithm>
#include <numeric>
#include <optional>
#include <vector>

#include "relfuse/dataset.hpp"
#include "relfuse/metrics.hpp"

namespace relfuse::reference {

inline double ref_iou(const Box& a, const Box& b) {
  const double aa = (a.xmax - a.xmin) * (a.ymax - a.ymin);
  const double ab = (b.xmax - b.xmin) * (b.ymax - b.ymin);
  if (aa <= 0 || ab <= 0) return 0.0;
  const double x0 = a.xmin > b.xmin ? a.xmin : b.xmin;
  const double y0 = a.ymin > b.ymin ? a.ymin : b.ymin;
  const double x1 = a.xmax < b.xmax ? a.xmax : b.xmax;
  const double y1 = a.ymax < b.ymax ? a.ymax : b.ymax;
  if (x1 <= x0 || y1 <= y0) return 0.0;
  const double inter = (x1 - x0) * (y1 - y0);
  return inter / (aa + ab - inter);
}

inline Box ref_union(const Box& a, const Box& b) {
  Box u = a;
  if (b.xmin < u.xmin) u.xmin = b.xmin;
  if (b.ymin < u.ymin) u.ymin = b.ymin;
  if (b.xmax > u.xmax) u.xmax = b.xmax;
  if (b.ymax > u.ymax) u.ymax = b.ymax;
  return u;
}

inline bool labels_agree(const PredictedTriplet& p, const GtRelation& g) {
  return p.sub_label == g.sub_label && p.obj_label == g.obj_label &&
         p.predicate == g.predicate;
}

inline bool rel_hit(const PredictedTriplet& p, const GtRelation& g, double thr) {
  return labels_agree(p, g) && !(ref_iou(p.sub_box, g.sub_box) < thr) &&
         !(ref_iou(p.obj_box, g.obj_box) < thr);
}

inline bool phr_hit(const PredictedTriplet& p, const GtRelation& g, double thr) {
  return labels_agree(p, g) &&
         !(ref_iou(ref_union(p.sub_box, p.obj_box), ref_union(g.sub_box, g.obj_box)) < thr);
}

// Score-descending order of prediction indices; equal scores keep input order.
inline std::vector<std::size_t> rank_order(const std::vector<PredictedTriplet>& preds) {
  std::vector<std::size_t> idx(preds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  // Insertion sort: stable and obviously correct.
  for (std::size_t i = 1; i < idx.size(); ++i) {
    std::size_t j = i;
    while (j > 0 && preds[idx[j - 1]].score < preds[idx[j]].score) {
      std::swap(idx[j - 1], idx[j]);
      --j;
    }
  }
  return idx;
}

// Recall for one image with at most `per_pair` candidates per localization.
inline double ref_image_recall(const std::vector<PredictedTriplet>& preds,
                               const std::vector<GtRelation>& gt, int k,
                               std::optional<int> per_pair, double thr) {
  const auto order = rank_order(preds);
  std::vector<std::size_t> kept;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto& p = preds[order[r]];
    int earlier = 0;
    for (std::size_t q = 0; q < r; ++q) {
      const auto& e = preds[order[q]];
      if (e.sub_box == p.sub_box && e.obj_box == p.obj_box &&
          e.sub_label == p.sub_label && e.obj_label == p.obj_label)
        ++earlier;
    }
    if (!per_pair || earlier < *per_pair) kept.push_back(order[r]);
  }
  if (kept.size() > static_cast<std::size_t>(k)) kept.resize(k);
  std::vector<int> owner(gt.size(), -1);
  for (std::size_t r = 0; r < kept.size(); ++r) {
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (owner[g] < 0 && rel_hit(preds[kept[r]], gt[g], thr)) {
        owner[g] = static_cast<int>(r);
        break;
      }
    }
  }
  const auto hits = std::count_if(owner.begin(), owner.end(), [](int o) { return o >= 0; });
  return static_cast<double>(hits) / static_cast<double>(gt.size());
}

inline double ref_recall(const std::vector<std::vector<PredictedTriplet>>& preds,
                         const std::vector<std::vector<GtRelation>>& gt, int k,
                         std::optional<int> per_pair, double thr = 0.5) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i].empty()) continue;
    sum += ref_image_recall(preds[i], gt[i], k, per_pair, thr);
    ++n;
  }
  return n == 0 ? 0.0 : sum / n;
}

inline double ref_free_k(const std::vector<std::vector<PredictedTriplet>>& preds,
                         const std::vector<std::vector<GtRelation>>& gt, int k,
                         int num_predicates, double thr = 0.5) {
  double best = 0.0;
  for (int kp = 1; kp <= num_predicates; ++kp)
    best = std::max(best, ref_recall(preds, gt, k, kp, thr));
  return best;
}

// AP as the mean, over gt instances, of the best precision reached at or
// after the rank where that instance was recalled (0 if never recalled).
inline double ref_ap(const std::vector<std::vector<PredictedTriplet>>& preds,
                     const std::vector<std::vector<GtRelation>>& gt, int predicate,
                     bool phrase, double thr = 0.5) {
  struct Item {
    double score;
    std::size_t image;
    std::size_t index;
  };
  std::vector<Item> items;
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (std::size_t j = 0; j < preds[i].size(); ++j)
      if (preds[i][j].predicate == predicate) items.push_back({preds[i][j].score, i, j});
  for (std::size_t a = 1; a < items.size(); ++a)
    for (std::size_t b = a; b > 0 && items[b - 1].score < items[b].score; --b)
      std::swap(items[b - 1], items[b]);

  int total_gt = 0;
  for (const auto& img : gt)
    for (const auto& g : img)
      if (g.predicate == predicate) ++total_gt;
  if (total_gt == 0) return 0.0;

  std::vector<std::vector<bool>> taken;
  for (const auto& img : gt) taken.emplace_back(img.size(), false);
  std::vector<bool> is_tp(items.size(), false);
  for (std::size_t r = 0; r < items.size(); ++r) {
    const auto& p = preds[items[r].image][items[r].index];
    const auto& img = gt[items[r].image];
    for (std::size_t g = 0; g < img.size(); ++g) {
      if (taken[items[r].image][g]) continue;
      if (phrase ? phr_hit(p, img[g], thr) : rel_hit(p, img[g], thr)) {
        taken[items[r].image][g] = true;
        is_tp[r] = true;
        break;
      }
    }
  }
  std::vector<double> prec(items.size());
  int tp = 0;
  for (std::size_t r = 0; r < items.size(); ++r) {
    if (is_tp[r]) ++tp;
    prec[r] = static_cast<double>(tp) / static_cast<double>(r + 1);
  }
  double sum = 0.0;
  for (std::size_t r = 0; r < items.size(); ++r) {
    if (!is_tp[r]) continue;
    double best = 0.0;
    for (std::size_t q = r; q < items.size(); ++q) best = std::max(best, prec[q]);
    sum += best;
  }
  return sum / total_gt;
}

inline double ref_map(const std::vector<std::vector<PredictedTriplet>>& preds,
                      const std::vector<std::vector<GtRelation>>& gt,
                      int num_predicates, bool phrase, double thr = 0.5) {
  double sum = 0.0;
  int n = 0;
  for (int p = 1; p <= num_predicates; ++p) {
    bool present = false;
    for (const auto& img : gt)
      for (const auto& g : img) present = present || g.predicate == p;
    if (!present) continue;
    sum += ref_ap(preds, gt, p, phrase, thr);
    ++n;
  }
  return n == 0 ? 0.0 : sum / n;
}

}  // namespace relfuse::reference
