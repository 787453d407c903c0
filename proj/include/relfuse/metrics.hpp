#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relfuse/dataset.hpp"
#include "relfuse/fusion.hpp"

namespace relfuse {

struct MatchSpec {
  double iou_threshold = 0.5;  // inclusive
  bool graph_constraint = true;
  // Per-pair candidate budget for the VRD protocol; overrides the graph
  // constraint when set.
  std::optional<int> k_per_pair;
  // VRD "free k": best recall over every k in 1..P.
  bool free_k = false;
};

void validate(const MatchSpec& spec);

// Ground-truth triplet with its boxes resolved.
struct GtRelation {
  Box sub_box;
  int sub_label = 0;
  int predicate = 1;
  Box obj_box;
  int obj_label = 0;
};

std::vector<GtRelation> gt_relations(const ImageRecord& record);

bool triplet_match(const PredictedTriplet& pred, const GtRelation& gt,
                   const MatchSpec& spec);

// Phrase match: same labels and the union boxes overlap enough.
bool phrase_match(const PredictedTriplet& pred, const GtRelation& gt,
                  const MatchSpec& spec);

using ImageTriplets = std::vector<PredictedTriplet>;
using ImageRelations = std::vector<GtRelation>;

// Keeps at most `k` predictions per (sub box, obj box, sub label, obj label)
// identity, preserving order. nullopt keeps everything.
ImageTriplets limit_per_pair(std::span<const PredictedTriplet> preds,
                             std::optional<int> k);

// Mean per-image recall of the top-K predictions, over images with at least
// one gt triplet. Greedy matching in score order; each gt matched once.
double recall_at_k(std::span<const ImageTriplets> predictions,
                   std::span<const ImageRelations> gt, int k,
                   const MatchSpec& spec);

// k_per_pair == nullopt means free k: the best over 1..num_predicates.
double vrd_recall(std::span<const ImageTriplets> predictions,
                  std::span<const ImageRelations> gt, int k,
                  std::optional<int> k_per_pair, int num_predicates,
                  const MatchSpec& spec);

enum class BoxMode { kRelationship, kPhrase };

// All-points interpolated AP for one predicate, pooled over images.
// Returns 0 when the predicate has no gt instance.
double average_precision(std::span<const ImageTriplets> predictions,
                         std::span<const ImageRelations> gt, int predicate,
                         BoxMode mode, const MatchSpec& spec);

// Percent-scale weighted score: 0.2 R@50 + 0.4 mAP_rel + 0.4 mAP_phr.
double oi_score(double r50, double map_rel, double map_phr);

struct PredicateAp {
  int predicate = 1;
  std::size_t num_gt = 0;
  double ap_rel = 0.0;
  double ap_phr = 0.0;
};

struct EvalReport {
  std::string mode;
  std::map<int, double> recall_at;
  double map_rel = 0.0;
  double map_phr = 0.0;
  double oi_score = 0.0;
  std::vector<PredicateAp> per_predicate;
};

// Predictions are matched to dataset records by image_id; records without
// a prediction entry count as empty. All values are fractions in [0,1].
EvalReport evaluate(std::span<const ImagePredictions> predictions,
                    std::span<const ImageRecord> dataset, int num_predicates,
                    EvalMode mode, const MatchSpec& spec,
                    const std::vector<int>& ks = {20, 50, 100});

std::string report_json(const EvalReport& report);
std::string report_table(const EvalReport& report);

}  // namespace relfuse
