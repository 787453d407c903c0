#include "relfuse/semantic.hpp"

#include <cmath>
#include <string>

#include "relfuse/errors.hpp"

namespace relfuse {

FrequencyTable fit_frequency(std::span<const ImageRecord> dataset,
                             const Vocabulary& vocab, double smoothing) {
  if (!(smoothing > 0.0)) throw std::invalid_argument("smoothing must be positive");
  FrequencyTable table;
  table.num_predicates = vocab.num_predicates();
  table.smoothing = smoothing;
  const auto width = static_cast<std::size_t>(table.num_predicates + 1);
  for (const auto& rec : dataset) {
    for (const auto& t : rec.gt_triplets) {
      if (t.predicate < 1 || t.predicate > table.num_predicates)
        throw DataError("image " + rec.image_id + ": ground-truth predicate " +
                        std::to_string(t.predicate) +
                        " is not a real predicate");
      const int s = rec.gt_boxes.at(t.sub).label;
      const int o = rec.gt_boxes.at(t.obj).label;
      auto& row = table.counts[{s, o}];
      if (row.empty()) row.assign(width, 0);
      ++row[t.predicate];
    }
  }
  return table;
}

std::vector<double> FrequencyTable::probabilities(int sub_label,
                                                  int obj_label) const {
  const auto width = static_cast<std::size_t>(num_predicates + 1);
  std::vector<double> p(width, 1.0 / static_cast<double>(width));
  auto it = counts.find({sub_label, obj_label});
  if (it == counts.end()) return p;
  std::int64_t total = 0;
  for (auto c : it->second) total += c;
  const double denom = static_cast<double>(total) + width * smoothing;
  for (std::size_t k = 0; k < width; ++k)
    p[k] = (static_cast<double>(it->second[k]) + smoothing) / denom;
  return p;
}

std::vector<double> semantic_logits(const FrequencyTable& table, int sub_label,
                                    int obj_label) {
  std::vector<double> logits = table.probabilities(sub_label, obj_label);
  for (double& v : logits) v = std::log(v);
  return logits;
}

}  // namespace relfuse
