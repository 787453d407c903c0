#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relfuse/dataset.hpp"
#include "relfuse/numcore.hpp"
#include "relfuse/semantic.hpp"
#include "relfuse/spatial.hpp"
#include "relfuse/visual.hpp"

namespace relfuse {

struct BranchMask {
  bool semantic = true;
  bool spatial = true;
  bool visual_spo = true;
  bool visual_subobj = true;

  bool any() const { return semantic || any_trainable(); }
  bool any_trainable() const { return spatial || visual_spo || visual_subobj; }

  // Comma list over {s, p, v, so}: semantic, spatial (position), visual
  // <S,P,O> head, standalone subject/object heads.
  static BranchMask parse(const std::string& spec);
  std::string to_string() const;

  friend bool operator==(const BranchMask&, const BranchMask&) = default;
};

struct ModelConfig {
  std::vector<std::size_t> spatial_hidden{64, 64};
  std::vector<std::size_t> spo_hidden{256, 256};
  // Start every trainable head's output layer at zero so the untrained
  // model reproduces the frequency prior.
  bool zero_init_outputs = true;
};

struct FusionModel {
  FrequencyTable freq;
  Mlp spatial_mlp;
  VisualBranch visual;
  BranchMask mask;
  std::size_t feature_dim = 0;
  int num_predicates = 0;

  friend bool operator==(const FusionModel&, const FusionModel&) = default;
};

// Trainable parameters only; the frequency table is frozen.
struct FusionGrads {
  Mlp spatial_mlp;
  VisualBranch visual;
};

FusionModel make_fusion_model(FrequencyTable freq, std::size_t feature_dim,
                              const BranchMask& mask, const ModelConfig& cfg,
                              Rng& rng);

FusionGrads zeros_like(const FusionModel& model);
ParamBlocks trainable_blocks(FusionModel& model);
ParamBlocks gradient_blocks(FusionGrads& grads);

using DetectionPair = std::pair<int, int>;

// Every ordered pair (i, j), i != j, of positive-area detections.
std::vector<DetectionPair> pair_proposals(const ImageRecord& record);

// Per-branch logits for one pair; disabled branches are empty.
struct BranchLogits {
  std::vector<double> semantic;
  std::vector<double> spatial;
  std::vector<double> spo;
  std::vector<double> sub;
  std::vector<double> obj;
};

BranchLogits branch_logits(const FusionModel& model, const ImageRecord& record,
                           DetectionPair pair);
std::vector<double> sum_branches(const BranchLogits& parts, std::size_t width);
std::vector<double> pair_logits(const FusionModel& model,
                                const ImageRecord& record, DetectionPair pair);

// Cross-entropy of the fused logits against `target`. If `grads` is given,
// adds scale * d(loss)/d(params) into it.
double pair_loss(const FusionModel& model, const ImageRecord& record,
                 DetectionPair pair, int target, FusionGrads* grads = nullptr,
                 double scale = 1.0);

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double negative_ratio = 3.0;
  std::uint64_t seed = 0;
  double match_iou = 0.5;
};

struct LabeledPair {
  DetectionPair pair;
  int target = 0;
};

// Detection pairs whose endpoints both match a gt triplet's boxes (same
// label, IoU >= match_iou), labelled with that triplet's predicate.
std::vector<LabeledPair> positive_pairs(const ImageRecord& record,
                                        double match_iou = 0.5);

struct TrainResult {
  FusionModel model;
  std::vector<double> loss_history;
};

TrainResult train(FusionModel model, std::span<const ImageRecord> dataset,
                  const TrainConfig& cfg);

// Accuracy of argmax over real predicates on positive pairs.
double positive_accuracy(const FusionModel& model,
                         std::span<const ImageRecord> dataset,
                         double match_iou = 0.5);

// Triplets scored softmax(pair_logits)[p] * score_S * score_O, sorted by
// score descending with ties broken by (pair index, predicate).
std::vector<PredictedTriplet> predict_image(const FusionModel& model,
                                            const ImageRecord& record,
                                            std::size_t top_n);

enum class EvalMode { kPrdcls, kSgcls, kSgdet };

EvalMode parse_mode(const std::string& name);
std::string mode_name(EvalMode mode);

// Replaces detections according to the evaluation mode: gt boxes and labels
// (prdcls), gt boxes with best-IoU detector labels (sgcls), or unchanged
// (sgdet). Ground truth is kept as is.
ImageRecord gt_substitution(const ImageRecord& record, EvalMode mode,
                            std::size_t feature_dim);

std::vector<ImageRecord> gt_substitution(std::span<const ImageRecord> dataset,
                                         EvalMode mode,
                                         std::size_t feature_dim);

// Trains on the mode's substituted view of the dataset.
TrainResult train_model_for_mode(FusionModel model,
                                 std::span<const ImageRecord> dataset,
                                 const TrainConfig& cfg, EvalMode mode);

std::vector<ImagePredictions> predict_dataset(
    const FusionModel& model, std::span<const ImageRecord> dataset,
    EvalMode mode, std::size_t top_n);

// Highest-probability attribute per detection, scored prob * detector score.
std::vector<AttributePrediction> predict_attributes(const AttributeHead& head,
                                                    const ImageRecord& record);

}  // namespace relfuse
