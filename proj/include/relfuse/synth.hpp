#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "relfuse/dataset.hpp"

namespace relfuse {

// Generator settings. Three independent signal sources feed the predicate
// of each related pair: a class-conditional table, a geometric on/under
// rule, and predicate-dependent union-region feature clusters.
struct SynthConfig {
  int num_images = 300;
  int num_test_images = 150;
  int min_objects = 3;
  int max_objects = 6;
  int num_classes = 6;
  int num_predicates = 6;
  int num_attributes = 4;
  std::size_t feature_dim = 16;
  std::uint64_t seed = 7;

  bool semantic_signal = true;
  bool spatial_signal = true;
  bool visual_signal = true;
  // Standard deviation of the union-feature clusters.
  double noise = 2.5;
  // Standard deviation of per-object appearance noise.
  double object_noise = 1.0;
  // Probability that a non-geometric ordered pair is related.
  double relation_rate = 0.25;
  // Probability that the geometric rule decides a qualifying pair.
  double spatial_strength = 1.0;
  // Dirichlet concentration of each row of the conditional table.
  double table_concentration = 0.3;
  // Detection jitter, as a fraction of box size per coordinate.
  double jitter = 0.05;
  int image_size = 1000;
};

void validate(const SynthConfig& cfg);

// The exact generative conditionals.
struct OracleTables {
  int num_classes = 0;
  int num_predicates = 0;
  bool semantic_signal = true;
  bool spatial_signal = true;
  bool visual_signal = true;
  double spatial_strength = 1.0;
  double noise = 1.0;
  int on_predicate = 1;
  int under_predicate = 2;
  // conditional[s * num_classes + o][p - 1] = p(p | s, o) for p in 1..P.
  std::vector<std::vector<double>> conditional;
  // predicate_means[p] for p in 0..P; row 0 is the unrelated cluster.
  std::vector<std::vector<double>> predicate_means;

  const std::vector<double>& row(int sub, int obj) const {
    return conditional.at(static_cast<std::size_t>(sub * num_classes + obj));
  }

  friend bool operator==(const OracleTables&, const OracleTables&) = default;
};

struct SynthData {
  Vocabulary vocab;
  std::vector<ImageRecord> train;
  std::vector<ImageRecord> test;
  OracleTables oracle;
};

SynthData generate(const SynthConfig& cfg);

// on_predicate when the boxes overlap and the subject sits higher,
// under_predicate when it sits lower, 0 otherwise.
int spatial_rule(const Box& sub, const Box& obj, const OracleTables& oracle);

// Unnormalized log posterior over predicates 1..P for one gt pair; index 0
// of the result corresponds to predicate 1.
std::vector<double> bayes_log_posterior(const OracleTables& oracle,
                                        const ImageRecord& record,
                                        const GtTriplet& triplet);

// Accuracy of the true-posterior argmax over every gt triplet.
double bayes_accuracy(const OracleTables& oracle,
                      std::span<const ImageRecord> dataset);

std::string oracle_json(const OracleTables& oracle);
OracleTables parse_oracle(const std::string& text);

}  // namespace relfuse
