#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "relfuse/box.hpp"

namespace relfuse {

struct Detection {
  int label = 0;
  Box box;
  double score = 1.0;
  std::vector<double> feature;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct GtBox {
  int label = 0;
  Box box;
  // Optional appearance feature for the ground-truth region.
  std::vector<double> feature;

  friend bool operator==(const GtBox&, const GtBox&) = default;
};

struct GtTriplet {
  int sub = 0;
  int predicate = 1;
  int obj = 0;

  friend bool operator==(const GtTriplet&, const GtTriplet&) = default;
};

struct GtAttribute {
  int gt_index = 0;
  int attribute = 0;

  friend bool operator==(const GtAttribute&, const GtAttribute&) = default;
};

// Union-region feature for an ordered detection pair.
struct PairFeature {
  int sub = 0;
  int obj = 0;
  std::vector<double> feature;

  friend bool operator==(const PairFeature&, const PairFeature&) = default;
};

struct ImageRecord {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<Detection> detections;
  std::vector<GtBox> gt_boxes;
  std::vector<GtTriplet> gt_triplets;
  std::vector<GtAttribute> gt_attributes;
  std::vector<PairFeature> pair_features;

  // Union feature for detection pair (sub, obj), if the record carries one.
  const std::vector<double>* find_pair_feature(int sub, int obj) const;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

// Index 0 of `predicates` is the no-relationship class.
struct Vocabulary {
  static constexpr const char* kNoRelationship = "__no_rel__";

  std::vector<std::string> objects;
  std::vector<std::string> predicates;
  std::vector<std::string> attributes;

  // Number of real predicates, excluding the no-relationship slot.
  int num_predicates() const {
    return predicates.empty() ? 0 : static_cast<int>(predicates.size()) - 1;
  }

  // Stable 64-bit digest of the vocabulary contents.
  std::uint64_t hash() const;

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;
};

struct PredictedTriplet {
  Box sub_box;
  int sub_label = 0;
  int predicate = 1;
  Box obj_box;
  int obj_label = 0;
  double score = 0.0;

  friend bool operator==(const PredictedTriplet&, const PredictedTriplet&) =
      default;
};

// "<object> is <attribute>" prediction, kept apart from relationship triplets.
struct AttributePrediction {
  Box box;
  int label = 0;
  int attribute = 0;
  double score = 0.0;

  friend bool operator==(const AttributePrediction&,
                         const AttributePrediction&) = default;
};

struct ImagePredictions {
  std::string image_id;
  std::vector<PredictedTriplet> triplets;
  // Only populated in OI output mode.
  std::vector<AttributePrediction> attributes;

  friend bool operator==(const ImagePredictions&, const ImagePredictions&) =
      default;
};

// Index of the detection with the highest IoU against `box` (lowest index
// on ties); nullopt when there are no detections.
std::optional<std::size_t> best_iou_detection(
    const std::vector<Detection>& detections, const Box& box);

// Throws DataError when the vocabulary breaks its invariants.
void validate_vocabulary(const Vocabulary& vocab);
Vocabulary load_vocabulary(const std::string& path);
void save_vocabulary(const Vocabulary& vocab, const std::string& path);

struct LoadResult {
  std::vector<ImageRecord> images;
  // Feature width shared by every detection; nullopt if no features seen.
  std::optional<std::size_t> feature_dim;
  std::vector<std::string> warnings;
};

// Parses one JSON object per line. Errors carry the 1-based line number
// and, once known, the image_id of the offending record.
LoadResult read_dataset(std::istream& in, const Vocabulary& vocab);
LoadResult load_dataset_with_warnings(const std::string& path,
                                      const Vocabulary& vocab);
std::vector<ImageRecord> load_dataset(const std::string& path,
                                      const Vocabulary& vocab);

void write_dataset(std::ostream& out, const std::vector<ImageRecord>& images);
void save_dataset(const std::vector<ImageRecord>& images,
                  const std::string& path);

// Prediction JSONL, one image per line.
void write_predictions(std::ostream& out,
                       const std::vector<ImagePredictions>& predictions);
std::vector<ImagePredictions> read_predictions(std::istream& in);
std::vector<ImagePredictions> load_predictions(const std::string& path);

// Writes `contents` to a sibling temp file, then renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace relfuse
