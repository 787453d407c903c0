#include "relfuse/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"
#include "relfuse/errors.hpp"

namespace relfuse {

void validate(const MatchSpec& spec) {
  if (!(spec.iou_threshold > 0.0 && spec.iou_threshold <= 1.0))
    throw std::invalid_argument("iou threshold must lie in (0, 1]");
  if (spec.k_per_pair && *spec.k_per_pair < 1)
    throw std::invalid_argument("k per pair must be positive");
}

std::vector<GtRelation> gt_relations(const ImageRecord& record) {
  std::vector<GtRelation> out;
  out.reserve(record.gt_triplets.size());
  for (const auto& t : record.gt_triplets) {
    const auto& s = record.gt_boxes.at(t.sub);
    const auto& o = record.gt_boxes.at(t.obj);
    out.push_back({s.box, s.label, t.predicate, o.box, o.label});
  }
  return out;
}

bool triplet_match(const PredictedTriplet& pred, const GtRelation& gt,
                   const MatchSpec& spec) {
  return pred.sub_label == gt.sub_label && pred.predicate == gt.predicate &&
         pred.obj_label == gt.obj_label &&
         iou(pred.sub_box, gt.sub_box) >= spec.iou_threshold &&
         iou(pred.obj_box, gt.obj_box) >= spec.iou_threshold;
}

bool phrase_match(const PredictedTriplet& pred, const GtRelation& gt,
                  const MatchSpec& spec) {
  return pred.sub_label == gt.sub_label && pred.predicate == gt.predicate &&
         pred.obj_label == gt.obj_label &&
         iou(union_box(pred.sub_box, pred.obj_box),
             union_box(gt.sub_box, gt.obj_box)) >= spec.iou_threshold;
}

namespace {

ImageTriplets sorted_by_score(std::span<const PredictedTriplet> preds) {
  ImageTriplets out(preds.begin(), preds.end());
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });
  return out;
}

bool same_localization(const PredictedTriplet& a, const PredictedTriplet& b) {
  return a.sub_box == b.sub_box && a.obj_box == b.obj_box &&
         a.sub_label == b.sub_label && a.obj_label == b.obj_label;
}

double image_recall(std::span<const PredictedTriplet> sorted_preds,
                    const ImageRelations& gt, int k, std::optional<int> limit,
                    const MatchSpec& spec) {
  ImageTriplets kept = limit_per_pair(sorted_preds, limit);
  if (kept.size() > static_cast<std::size_t>(k)) kept.resize(k);
  std::vector<bool> used(gt.size(), false);
  std::size_t hits = 0;
  for (const auto& p : kept) {
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (!used[g] && triplet_match(p, gt[g], spec)) {
        used[g] = true;
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(gt.size());
}

double mean_recall(std::span<const ImageTriplets> predictions,
                   std::span<const ImageRelations> gt, int k,
                   std::optional<int> limit, const MatchSpec& spec) {
  if (k <= 0) throw std::invalid_argument("K must be positive");
  if (predictions.size() != gt.size())
    throw std::invalid_argument("predictions and gt differ in image count");
  double total = 0.0;
  std::size_t images = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i].empty()) continue;
    total += image_recall(sorted_by_score(predictions[i]), gt[i], k, limit, spec);
    ++images;
  }
  return images == 0 ? 0.0 : total / static_cast<double>(images);
}

}  // namespace

ImageTriplets limit_per_pair(std::span<const PredictedTriplet> preds,
                             std::optional<int> k) {
  if (!k) return ImageTriplets(preds.begin(), preds.end());
  ImageTriplets out;
  std::vector<std::pair<const PredictedTriplet*, int>> seen;
  for (const auto& p : preds) {
    auto it = std::find_if(seen.begin(), seen.end(), [&](const auto& s) {
      return same_localization(*s.first, p);
    });
    if (it == seen.end()) {
      seen.emplace_back(&p, 1);
      out.push_back(p);
    } else if (it->second < *k) {
      ++it->second;
      out.push_back(p);
    }
  }
  return out;
}

double recall_at_k(std::span<const ImageTriplets> predictions,
                   std::span<const ImageRelations> gt, int k,
                   const MatchSpec& spec) {
  const std::optional<int> limit =
      spec.graph_constraint ? std::optional<int>(1) : std::nullopt;
  return mean_recall(predictions, gt, k, limit, spec);
}

double vrd_recall(std::span<const ImageTriplets> predictions,
                  std::span<const ImageRelations> gt, int k,
                  std::optional<int> k_per_pair, int num_predicates,
                  const MatchSpec& spec) {
  if (k_per_pair) {
    if (*k_per_pair < 1) throw std::invalid_argument("k per pair must be positive");
    return mean_recall(predictions, gt, k, k_per_pair, spec);
  }
  double best = 0.0;
  for (int kp = 1; kp <= std::max(1, num_predicates); ++kp)
    best = std::max(best, mean_recall(predictions, gt, k, kp, spec));
  return best;
}

double average_precision(std::span<const ImageTriplets> predictions,
                         std::span<const ImageRelations> gt, int predicate,
                         BoxMode mode, const MatchSpec& spec) {
  if (predictions.size() != gt.size())
    throw std::invalid_argument("predictions and gt differ in image count");
  std::size_t num_gt = 0;
  for (const auto& img : gt)
    for (const auto& g : img)
      if (g.predicate == predicate) ++num_gt;
  if (num_gt == 0) return 0.0;

  struct Pooled {
    double score;
    std::size_t image;
    const PredictedTriplet* pred;
  };
  std::vector<Pooled> pool;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    for (const auto& p : predictions[i])
      if (p.predicate == predicate) pool.push_back({p.score, i, &p});
  std::stable_sort(pool.begin(), pool.end(),
                   [](const Pooled& a, const Pooled& b) { return a.score > b.score; });

  std::vector<std::vector<bool>> used(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) used[i].assign(gt[i].size(), false);

  std::vector<double> precision;
  std::vector<double> recall;
  precision.reserve(pool.size());
  recall.reserve(pool.size());
  std::size_t tp = 0;
  for (std::size_t r = 0; r < pool.size(); ++r) {
    const auto& img_gt = gt[pool[r].image];
    auto& img_used = used[pool[r].image];
    for (std::size_t g = 0; g < img_gt.size(); ++g) {
      if (img_used[g]) continue;
      const bool hit = mode == BoxMode::kRelationship
                           ? triplet_match(*pool[r].pred, img_gt[g], spec)
                           : phrase_match(*pool[r].pred, img_gt[g], spec);
      if (hit) {
        img_used[g] = true;
        ++tp;
        break;
      }
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(r + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
  }
  // Precision envelope, then sum over recall steps.
  for (std::size_t r = precision.size(); r-- > 1;)
    precision[r - 1] = std::max(precision[r - 1], precision[r]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t r = 0; r < precision.size(); ++r) {
    ap += (recall[r] - prev_recall) * precision[r];
    prev_recall = recall[r];
  }
  return ap;
}

double oi_score(double r50, double map_rel, double map_phr) {
  return 0.2 * r50 + 0.4 * map_rel + 0.4 * map_phr;
}

EvalReport evaluate(std::span<const ImagePredictions> predictions,
                    std::span<const ImageRecord> dataset, int num_predicates,
                    EvalMode mode, const MatchSpec& spec,
                    const std::vector<int>& ks) {
  validate(spec);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (!index.emplace(dataset[i].image_id, i).second)
      throw DataError("duplicate image_id " + dataset[i].image_id + " in dataset");

  std::vector<ImageTriplets> preds(dataset.size());
  std::vector<bool> seen(dataset.size(), false);
  for (const auto& img : predictions) {
    auto it = index.find(img.image_id);
    if (it == index.end())
      throw DataError("prediction for unknown image_id " + img.image_id);
    if (seen[it->second])
      throw DataError("duplicate predictions for image_id " + img.image_id);
    seen[it->second] = true;
    preds[it->second] = img.triplets;
  }
  std::vector<ImageRelations> gt;
  gt.reserve(dataset.size());
  for (const auto& rec : dataset) gt.push_back(gt_relations(rec));

  auto recall = [&](int k) {
    if (spec.free_k) return vrd_recall(preds, gt, k, std::nullopt, num_predicates, spec);
    if (spec.k_per_pair)
      return vrd_recall(preds, gt, k, spec.k_per_pair, num_predicates, spec);
    return recall_at_k(preds, gt, k, spec);
  };

  EvalReport report;
  report.mode = mode_name(mode);
  for (int k : ks) report.recall_at[k] = recall(k);
  const double r50 = report.recall_at.count(50) ? report.recall_at[50] : recall(50);

  double sum_rel = 0.0;
  double sum_phr = 0.0;
  std::size_t counted = 0;
  for (int p = 1; p <= num_predicates; ++p) {
    PredicateAp row;
    row.predicate = p;
    for (const auto& img : gt)
      for (const auto& g : img)
        if (g.predicate == p) ++row.num_gt;
    if (row.num_gt > 0) {
      row.ap_rel = average_precision(preds, gt, p, BoxMode::kRelationship, spec);
      row.ap_phr = average_precision(preds, gt, p, BoxMode::kPhrase, spec);
      sum_rel += row.ap_rel;
      sum_phr += row.ap_phr;
      ++counted;
    }
    report.per_predicate.push_back(row);
  }
  if (counted > 0) {
    report.map_rel = sum_rel / static_cast<double>(counted);
    report.map_phr = sum_phr / static_cast<double>(counted);
  }
  report.oi_score =
      oi_score(100.0 * r50, 100.0 * report.map_rel, 100.0 * report.map_phr) / 100.0;
  return report;
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["mode"] = report.mode;
  j["recall_at"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.recall_at) j["recall_at"][std::to_string(k)] = v;
  j["map_rel"] = report.map_rel;
  j["map_phr"] = report.map_phr;
  j["oi_score"] = report.oi_score;
  j["per_predicate"] = nlohmann::ordered_json::array();
  for (const auto& row : report.per_predicate) {
    nlohmann::ordered_json r;
    r["predicate"] = row.predicate;
    r["num_gt"] = row.num_gt;
    r["ap_rel"] = row.ap_rel;
    r["ap_phr"] = row.ap_phr;
    j["per_predicate"].push_back(std::move(r));
  }
  return j.dump(2) + "\n";
}

std::string report_table(const EvalReport& report) {
  std::ostringstream out;
  char buf[128];
  out << "mode: " << report.mode << "\n";
  for (const auto& [k, v] : report.recall_at) {
    std::snprintf(buf, sizeof buf, "  R@%-4d %7.2f\n", k, 100.0 * v);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "  mAP_rel %6.2f\n  mAP_phr %6.2f\n  score   %6.2f\n",
                100.0 * report.map_rel, 100.0 * report.map_phr,
                100.0 * report.oi_score);
  out << buf;
  out << "  predicate  num_gt  AP_rel  AP_phr\n";
  for (const auto& row : report.per_predicate) {
    std::snprintf(buf, sizeof buf, "  %9d  %6zu  %6.2f  %6.2f\n", row.predicate,
                  row.num_gt, 100.0 * row.ap_rel, 100.0 * row.ap_phr);
    out << buf;
  }
  return out.str();
}

}  // namespace relfuse
