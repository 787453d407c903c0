#pragma once

#include <span>
#include <string>
#include <vector>

#include "relfuse/fusion.hpp"
#include "relfuse/metrics.hpp"

namespace relfuse {

struct AblationRow {
  std::string name;
  BranchMask mask;
  // Percent scale.
  double r50 = 0.0;
  double map_rel = 0.0;
  double map_phr = 0.0;
  double score = 0.0;
  std::vector<double> loss_history;
};

// The four branch configurations, in order: frequency baseline, + <S,P,O>
// visual head, + subject/object heads, + spatial branch.
std::vector<std::pair<std::string, BranchMask>> ablation_configs();

// Trains and evaluates every configuration with the same seed. The
// frequency table is fitted once on `train` and shared.
std::vector<AblationRow> run_ablation(std::span<const ImageRecord> train,
                                      std::span<const ImageRecord> test,
                                      const Vocabulary& vocab,
                                      const TrainConfig& train_cfg,
                                      const ModelConfig& model_cfg,
                                      EvalMode mode, const MatchSpec& spec);

// Header plus one line per row: name,R@50,mAP_rel,mAP_phr,score.
std::string ablation_csv(std::span<const AblationRow> rows);
std::string ablation_table(std::span<const AblationRow> rows);

// Feature width shared by the dataset's detections (0 when featureless).
std::size_t dataset_feature_dim(std::span<const ImageRecord> dataset);

// Initial model for training: frequency table from `train`, weights from
// Rng(seed).
FusionModel initial_model(std::span<const ImageRecord> train,
                          const Vocabulary& vocab, const BranchMask& mask,
                          const ModelConfig& model_cfg, std::uint64_t seed);

}  // namespace relfuse
