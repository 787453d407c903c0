#include "relfuse/visual.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "relfuse/errors.hpp"

namespace relfuse {

VisualBranch make_visual_branch(std::size_t feature_dim, int num_predicates,
                                std::span<const std::size_t> spo_hidden,
                                Rng& rng) {
  const auto out = static_cast<std::size_t>(num_predicates + 1);
  std::vector<std::size_t> dims{3 * feature_dim};
  dims.insert(dims.end(), spo_hidden.begin(), spo_hidden.end());
  dims.push_back(out);
  VisualBranch branch;
  branch.spo_head = make_mlp(dims, rng);
  branch.sub_head = init_layer(feature_dim, out, rng);
  branch.obj_head = init_layer(feature_dim, out, rng);
  return branch;
}

std::vector<double> concat_features(std::span<const double> v_sub,
                                    std::span<const double> v_pred,
                                    std::span<const double> v_obj) {
  std::vector<double> x;
  x.reserve(v_sub.size() + v_pred.size() + v_obj.size());
  x.insert(x.end(), v_sub.begin(), v_sub.end());
  x.insert(x.end(), v_pred.begin(), v_pred.end());
  x.insert(x.end(), v_obj.begin(), v_obj.end());
  return x;
}

VisualLogits visual_logits(const VisualBranch& branch,
                           std::span<const double> v_sub,
                           std::span<const double> v_pred,
                           std::span<const double> v_obj) {
  const std::size_t d = branch.feature_dim();
  if (v_sub.size() != d || v_pred.size() != d || v_obj.size() != d)
    throw DimensionError("visual features must all have dimension " +
                         std::to_string(d));
  if (branch.spo_head.in_dim() != 3 * d)
    throw DimensionError("spo head input must be three feature widths");
  return {predict(branch.spo_head, concat_features(v_sub, v_pred, v_obj)),
          affine(branch.sub_head, v_sub), affine(branch.obj_head, v_obj)};
}

std::vector<double> predicate_feature(const ImageRecord& record,
                                      std::pair<int, int> pair) {
  if (const auto* f = record.find_pair_feature(pair.first, pair.second))
    return *f;
  const auto& a = record.detections.at(pair.first).feature;
  const auto& b = record.detections.at(pair.second).feature;
  if (a.size() != b.size()) throw DimensionError("endpoint features differ in size");
  std::vector<double> mean(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) mean[i] = 0.5 * (a[i] + b[i]);
  return mean;
}

AttributeHead make_attribute_head(std::size_t feature_dim,
                                  std::size_t num_attributes,
                                  std::span<const std::size_t> hidden,
                                  Rng& rng) {
  std::vector<std::size_t> dims{feature_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(num_attributes);
  return {make_mlp(dims, rng)};
}

std::vector<double> attribute_logits(const AttributeHead& head,
                                     std::span<const double> v) {
  if (v.size() != head.mlp.in_dim())
    throw DimensionError("attribute head expects dimension " +
                         std::to_string(head.mlp.in_dim()));
  return predict(head.mlp, v);
}

std::vector<AttributeExample> attribute_examples(
    std::span<const ImageRecord> dataset) {
  std::vector<AttributeExample> out;
  for (const auto& rec : dataset) {
    for (const auto& a : rec.gt_attributes) {
      const auto& gt = rec.gt_boxes.at(a.gt_index);
      if (!gt.feature.empty()) {
        out.push_back({gt.feature, a.attribute});
      } else if (auto best = best_iou_detection(rec.detections, gt.box)) {
        out.push_back({rec.detections[*best].feature, a.attribute});
      }
    }
  }
  return out;
}

std::vector<double> train_attribute_head(
    AttributeHead& head, std::span<const AttributeExample> examples,
    const AttributeTrainConfig& cfg) {
  std::vector<double> history;
  if (examples.empty() || cfg.epochs <= 0) return history;
  Rng rng(cfg.seed);
  ParamBlocks params;
  append_blocks(head.mlp, params);
  OptimizerState opt =
      make_optimizer_state(cfg.learning_rate, cfg.momentum, params);
  Mlp grads = zeros_like(head.mlp);
  ParamBlocks grad_blocks;
  append_blocks(grads, grad_blocks);

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = static_cast<std::size_t>(std::max(1, cfg.batch_size));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      for (auto& b : grad_blocks) std::fill(b.begin(), b.end(), 0.0);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const auto& ex = examples[order[k]];
        auto fwd = forward(head.mlp, ex.feature);
        auto xent = softmax_xent(fwd.output, static_cast<std::size_t>(ex.attribute));
        if (!std::isfinite(xent.loss)) throw NumericError("non-finite attribute loss");
        total += xent.loss;
        for (double& g : xent.grad) g *= scale;
        backward_accumulate(head.mlp, fwd.cache, xent.grad, grads);
      }
      sgd_step(params, grad_blocks, opt);
    }
    history.push_back(total / static_cast<double>(order.size()));
  }
  return history;
}

double attribute_accuracy(const AttributeHead& head,
                          std::span<const AttributeExample> examples) {
  if (examples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    const auto logits = attribute_logits(head, ex.feature);
    const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
    if (best == ex.attribute) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

}  // namespace relfuse
