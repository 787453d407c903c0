#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "relfuse/dataset.hpp"
#include "relfuse/numcore.hpp"

namespace relfuse {

// Heads over precomputed ROI features: one over concat(v_S, v_P, v_O) and
// one single layer each over v_S and v_O alone.
struct VisualBranch {
  Mlp spo_head;
  DenseLayer sub_head;
  DenseLayer obj_head;

  std::size_t feature_dim() const { return sub_head.in_dim(); }

  friend bool operator==(const VisualBranch&, const VisualBranch&) = default;
};

struct VisualLogits {
  std::vector<double> spo;
  std::vector<double> sub;
  std::vector<double> obj;
};

// spo_hidden lists the hidden widths between 3*D and P+1.
VisualBranch make_visual_branch(std::size_t feature_dim, int num_predicates,
                                std::span<const std::size_t> spo_hidden,
                                Rng& rng);

VisualLogits visual_logits(const VisualBranch& branch,
                           std::span<const double> v_sub,
                           std::span<const double> v_pred,
                           std::span<const double> v_obj);

std::vector<double> concat_features(std::span<const double> v_sub,
                                    std::span<const double> v_pred,
                                    std::span<const double> v_obj);

// Union-region feature for detection pair (sub, obj): the record's stored
// pair feature when present, otherwise the mean of the two endpoints.
std::vector<double> predicate_feature(const ImageRecord& record,
                                      std::pair<int, int> pair);

// Single-branch attribute classifier over one object's feature.
struct AttributeHead {
  Mlp mlp;

  friend bool operator==(const AttributeHead&, const AttributeHead&) = default;
};

AttributeHead make_attribute_head(std::size_t feature_dim,
                                  std::size_t num_attributes,
                                  std::span<const std::size_t> hidden,
                                  Rng& rng);

std::vector<double> attribute_logits(const AttributeHead& head,
                                     std::span<const double> v);

struct AttributeTrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct AttributeExample {
  std::vector<double> feature;
  int attribute = 0;
};

// Appearance feature for every attributed ground-truth object: the gt box's
// own feature when present, else the best-IoU detection's.
std::vector<AttributeExample> attribute_examples(
    std::span<const ImageRecord> dataset);

// Trains the head on its own, independent of relationship training.
std::vector<double> train_attribute_head(
    AttributeHead& head, std::span<const AttributeExample> examples,
    const AttributeTrainConfig& cfg);

double attribute_accuracy(const AttributeHead& head,
                          std::span<const AttributeExample> examples);

}  // namespace relfuse
