#include "relfuse/ablation.hpp"

#include <cstdio>
#include <sstream>

namespace relfuse {

std::vector<std::pair<std::string, BranchMask>> ablation_configs() {
  return {{"baseline", {true, false, false, false}},
          {"spo", {true, false, true, false}},
          {"spo+s+o", {true, false, true, true}},
          {"spo+s+o+spt", {true, true, true, true}}};
}

std::size_t dataset_feature_dim(std::span<const ImageRecord> dataset) {
  for (const auto& rec : dataset)
    if (!rec.detections.empty()) return rec.detections.front().feature.size();
  return 0;
}

FusionModel initial_model(std::span<const ImageRecord> train,
                          const Vocabulary& vocab, const BranchMask& mask,
                          const ModelConfig& model_cfg, std::uint64_t seed) {
  Rng rng(seed);
  return make_fusion_model(fit_frequency(train, vocab),
                           dataset_feature_dim(train), mask, model_cfg, rng);
}

std::vector<AblationRow> run_ablation(std::span<const ImageRecord> train,
                                      std::span<const ImageRecord> test,
                                      const Vocabulary& vocab,
                                      const TrainConfig& train_cfg,
                                      const ModelConfig& model_cfg,
                                      EvalMode mode, const MatchSpec& spec) {
  std::vector<AblationRow> rows;
  for (const auto& [name, mask] : ablation_configs()) {
    FusionModel model =
        initial_model(train, vocab, mask, model_cfg, train_cfg.seed);
    TrainResult trained = train_model_for_mode(std::move(model), train, train_cfg, mode);
    const auto preds = predict_dataset(trained.model, test, mode, 100);
    const EvalReport report =
        evaluate(preds, test, vocab.num_predicates(), mode, spec);
    AblationRow row;
    row.name = name;
    row.mask = mask;
    row.r50 = 100.0 * report.recall_at.at(50);
    row.map_rel = 100.0 * report.map_rel;
    row.map_phr = 100.0 * report.map_phr;
    row.score = 100.0 * report.oi_score;
    row.loss_history = std::move(trained.loss_history);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::ostringstream out;
  out << "config,R@50,mAP_rel,mAP_phr,score\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.4f,%.4f\n", r.name.c_str(),
                  r.r50, r.map_rel, r.map_phr, r.score);
    out << buf;
  }
  return out.str();
}

std::string ablation_table(std::span<const AblationRow> rows) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s %7s %8s %8s %7s\n", "config", "R@50",
                "mAP_rel", "mAP_phr", "score");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-14s %7.2f %8.2f %8.2f %7.2f\n",
                  r.name.c_str(), r.r50, r.map_rel, r.map_phr, r.score);
    out << buf;
  }
  return out.str();
}

}  // namespace relfuse
