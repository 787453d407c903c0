#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "relfuse/dataset.hpp"

namespace relfuse {

// Empirical predicate distribution given (subject class, object class),
// counted over ground-truth triplets only. Slot 0 (no relationship) never
// receives real counts; it is covered by the smoothing pseudo-count.
struct FrequencyTable {
  using ClassPair = std::pair<int, int>;

  int num_predicates = 0;
  double smoothing = 1.0;
  std::map<ClassPair, std::vector<std::int64_t>> counts;

  // Smoothed p(P | sub, obj) over all num_predicates + 1 slots.
  std::vector<double> probabilities(int sub_label, int obj_label) const;

  friend bool operator==(const FrequencyTable&, const FrequencyTable&) = default;
};

FrequencyTable fit_frequency(std::span<const ImageRecord> dataset,
                             const Vocabulary& vocab, double smoothing = 1.0);

// log p(P | sub, obj); uniform log(1/(P+1)) for unseen pairs.
std::vector<double> semantic_logits(const FrequencyTable& table, int sub_label,
                                    int obj_label);

}  // namespace relfuse
