#include "relfuse/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "relfuse/errors.hpp"

namespace relfuse {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

class RecordParser {
 public:
  RecordParser(const Vocabulary& vocab, std::size_t line,
               std::optional<std::size_t>& feature_dim,
               std::vector<std::string>& warnings)
      : vocab_(vocab),
        line_(line),
        feature_dim_(feature_dim),
        warnings_(warnings) {}

  ImageRecord parse(const json& j) {
    if (!j.is_object()) fail("expected a JSON object");
    ImageRecord rec;
    const json& id = require(j, "image_id");
    if (!id.is_string()) fail("image_id must be a string");
    rec.image_id = id.get<std::string>();
    image_id_ = rec.image_id;

    rec.width = positive_int(require(j, "width"), "width");
    rec.height = positive_int(require(j, "height"), "height");

    for (const json& d : array_or_empty(j, "detections")) {
      Detection det;
      det.label = object_label(require(d, "label"), "detections.label");
      det.box = box(require(d, "box"), "detections.box");
      const json& score = require(d, "score");
      if (!score.is_number()) fail("detections.score must be a number");
      det.score = score.get<double>();
      if (!(det.score >= 0.0 && det.score <= 1.0))
        fail("detections.score outside [0,1]");
      det.feature = feature(require(d, "feature"), "detections.feature");
      rec.detections.push_back(std::move(det));
    }

    for (const json& g : array_or_empty(j, "gt_boxes")) {
      GtBox gt;
      gt.label = object_label(require(g, "label"), "gt_boxes.label");
      gt.box = box(require(g, "box"), "gt_boxes.box");
      if (g.contains("feature"))
        gt.feature = feature(g["feature"], "gt_boxes.feature");
      rec.gt_boxes.push_back(std::move(gt));
    }

    const int num_gt = static_cast<int>(rec.gt_boxes.size());
    for (const json& t : array_or_empty(j, "gt_triplets")) {
      if (!t.is_array() || t.size() != 3) fail("gt_triplets entries must be [sub, pred, obj]");
      GtTriplet trip{integer(t[0], "gt_triplets.sub"),
                     integer(t[1], "gt_triplets.predicate"),
                     integer(t[2], "gt_triplets.obj")};
      if (trip.sub < 0 || trip.sub >= num_gt)
        fail("gt_triplets.sub index " + std::to_string(trip.sub) +
             " out of range for " + std::to_string(num_gt) + " gt boxes");
      if (trip.obj < 0 || trip.obj >= num_gt)
        fail("gt_triplets.obj index " + std::to_string(trip.obj) +
             " out of range for " + std::to_string(num_gt) + " gt boxes");
      if (trip.sub == trip.obj) fail("gt_triplets subject equals object");
      if (trip.predicate < 1 || trip.predicate > vocab_.num_predicates())
        fail("gt_triplets.predicate " + std::to_string(trip.predicate) +
             " is not a real predicate id");
      rec.gt_triplets.push_back(trip);
    }

    for (const json& a : array_or_empty(j, "gt_attributes")) {
      if (!a.is_array() || a.size() != 2) fail("gt_attributes entries must be [gt_idx, attr]");
      GtAttribute attr{integer(a[0], "gt_attributes.gt_idx"),
                       integer(a[1], "gt_attributes.attribute")};
      if (attr.gt_index < 0 || attr.gt_index >= num_gt)
        fail("gt_attributes.gt_idx out of range");
      if (attr.attribute < 0 ||
          attr.attribute >= static_cast<int>(vocab_.attributes.size()))
        fail("gt_attributes.attribute out of range");
      rec.gt_attributes.push_back(attr);
    }

    const int num_det = static_cast<int>(rec.detections.size());
    for (const json& p : array_or_empty(j, "pair_features")) {
      PairFeature pf;
      pf.sub = integer(require(p, "sub"), "pair_features.sub");
      pf.obj = integer(require(p, "obj"), "pair_features.obj");
      if (pf.sub < 0 || pf.sub >= num_det || pf.obj < 0 || pf.obj >= num_det)
        fail("pair_features index out of range");
      if (pf.sub == pf.obj) fail("pair_features subject equals object");
      pf.feature = feature(require(p, "feature"), "pair_features.feature");
      rec.pair_features.push_back(std::move(pf));
    }
    return rec;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    std::string msg = "line " + std::to_string(line_);
    if (!image_id_.empty()) msg += " (image_id " + image_id_ + ")";
    throw DataError(msg + ": " + what);
  }

  const json& require(const json& j, const char* key) const {
    if (!j.is_object()) fail(std::string("expected object holding '") + key + "'");
    auto it = j.find(key);
    if (it == j.end()) fail(std::string("missing field '") + key + "'");
    return *it;
  }

  const json& array_or_empty(const json& j, const char* key) const {
    static const json empty = json::array();
    auto it = j.find(key);
    if (it == j.end()) return empty;
    if (!it->is_array()) fail(std::string(key) + " must be an array");
    return *it;
  }

  int integer(const json& v, const std::string& field) const {
    if (!v.is_number_integer()) fail(field + " must be an integer");
    return v.get<int>();
  }

  int positive_int(const json& v, const std::string& field) const {
    const int value = integer(v, field);
    if (value <= 0) fail(field + " must be positive");
    return value;
  }

  int object_label(const json& v, const std::string& field) const {
    const int label = integer(v, field);
    if (label < 0 || label >= static_cast<int>(vocab_.objects.size()))
      fail(field + " " + std::to_string(label) + " is not an object class");
    return label;
  }

  Box box(const json& v, const std::string& field) {
    if (!v.is_array() || v.size() != 4) fail(field + " must be [xmin,ymin,xmax,ymax]");
    for (const json& c : v)
      if (!c.is_number()) fail(field + " coordinates must be numbers");
    Box b{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(),
          v[3].get<double>()};
    if (!is_valid(b)) fail(field + " is not a valid box");
    if (!b.has_positive_area())
      warnings_.push_back("line " + std::to_string(line_) + " (image_id " +
                          image_id_ + "): zero-area " + field);
    return b;
  }

  std::vector<double> feature(const json& v, const std::string& field) {
    if (!v.is_array()) fail(field + " must be an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const json& x : v) {
      if (!x.is_number()) fail(field + " entries must be numbers");
      const double value = x.get<double>();
      if (!std::isfinite(value)) fail(field + " entries must be finite");
      out.push_back(value);
    }
    if (!feature_dim_) {
      feature_dim_ = out.size();
    } else if (*feature_dim_ != out.size()) {
      fail(field + " has dimension " + std::to_string(out.size()) +
           ", dataset dimension is " + std::to_string(*feature_dim_));
    }
    return out;
  }

  const Vocabulary& vocab_;
  std::size_t line_;
  std::optional<std::size_t>& feature_dim_;
  std::vector<std::string>& warnings_;
  std::string image_id_;
};

ordered_json box_json(const Box& b) {
  return ordered_json::array({b.xmin, b.ymin, b.xmax, b.ymax});
}

Box box_from_json(const json& v) {
  if (!v.is_array() || v.size() != 4) throw DataError("box must have 4 numbers");
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>(),
          v[3].get<double>()};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_unique(const std::vector<std::string>& names, const char* list) {
  std::set<std::string> seen;
  for (const auto& n : names)
    if (!seen.insert(n).second)
      throw DataError(std::string("duplicate name '") + n + "' in " + list);
}

}  // namespace

const std::vector<double>* ImageRecord::find_pair_feature(int sub,
                                                          int obj) const {
  for (const auto& pf : pair_features)
    if (pf.sub == sub && pf.obj == obj) return &pf.feature;
  return nullptr;
}

std::optional<std::size_t> best_iou_detection(
    const std::vector<Detection>& detections, const Box& box) {
  std::optional<std::size_t> best;
  double best_iou = -1.0;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const double v = iou(detections[i].box, box);
    if (v > best_iou) {
      best_iou = v;
      best = i;
    }
  }
  return best;
}

std::uint64_t Vocabulary::hash() const {
  // FNV-1a over the three lists with distinct separators.
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  auto add_list = [&](const std::vector<std::string>& names, unsigned char tag) {
    mix(tag);
    for (const auto& n : names) {
      for (unsigned char c : n) mix(c);
      mix(0);
    }
  };
  add_list(objects, 1);
  add_list(predicates, 2);
  add_list(attributes, 3);
  return h;
}

void validate_vocabulary(const Vocabulary& vocab) {
  if (vocab.predicates.empty() ||
      vocab.predicates.front() != Vocabulary::kNoRelationship)
    throw DataError(std::string("vocabulary predicates[0] must be '") +
                    Vocabulary::kNoRelationship + "'");
  check_unique(vocab.objects, "objects");
  check_unique(vocab.predicates, "predicates");
  check_unique(vocab.attributes, "attributes");
}

Vocabulary load_vocabulary(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  Vocabulary vocab;
  auto names = [&](const char* key) {
    std::vector<std::string> out;
    if (!j.contains(key)) return out;
    if (!j[key].is_array()) throw DataError(path + ": " + key + " must be an array");
    for (const auto& n : j[key]) {
      if (!n.is_string()) throw DataError(path + ": " + key + " entries must be strings");
      out.push_back(n.get<std::string>());
    }
    return out;
  };
  vocab.objects = names("objects");
  vocab.predicates = names("predicates");
  vocab.attributes = names("attributes");
  validate_vocabulary(vocab);
  return vocab;
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  ordered_json j;
  j["objects"] = vocab.objects;
  j["predicates"] = vocab.predicates;
  j["attributes"] = vocab.attributes;
  write_file_atomic(path, j.dump(2) + "\n");
}

LoadResult read_dataset(std::istream& in, const Vocabulary& vocab) {
  LoadResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("line " + std::to_string(line_no) + ": parse error: " +
                      e.what());
    }
    try {
      RecordParser parser(vocab, line_no, result.feature_dim, result.warnings);
      result.images.push_back(parser.parse(j));
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return result;
}

LoadResult load_dataset_with_warnings(const std::string& path,
                                      const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return read_dataset(in, vocab);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::vector<ImageRecord> load_dataset(const std::string& path,
                                      const Vocabulary& vocab) {
  return load_dataset_with_warnings(path, vocab).images;
}

void write_dataset(std::ostream& out, const std::vector<ImageRecord>& images) {
  for (const auto& rec : images) {
    ordered_json j;
    j["image_id"] = rec.image_id;
    j["width"] = rec.width;
    j["height"] = rec.height;
    j["detections"] = ordered_json::array();
    for (const auto& d : rec.detections) {
      ordered_json dj;
      dj["label"] = d.label;
      dj["box"] = box_json(d.box);
      dj["score"] = d.score;
      dj["feature"] = d.feature;
      j["detections"].push_back(std::move(dj));
    }
    j["gt_boxes"] = ordered_json::array();
    for (const auto& g : rec.gt_boxes) {
      ordered_json gj;
      gj["label"] = g.label;
      gj["box"] = box_json(g.box);
      if (!g.feature.empty()) gj["feature"] = g.feature;
      j["gt_boxes"].push_back(std::move(gj));
    }
    j["gt_triplets"] = ordered_json::array();
    for (const auto& t : rec.gt_triplets)
      j["gt_triplets"].push_back({t.sub, t.predicate, t.obj});
    j["gt_attributes"] = ordered_json::array();
    for (const auto& a : rec.gt_attributes)
      j["gt_attributes"].push_back({a.gt_index, a.attribute});
    if (!rec.pair_features.empty()) {
      j["pair_features"] = ordered_json::array();
      for (const auto& p : rec.pair_features) {
        ordered_json pj;
        pj["sub"] = p.sub;
        pj["obj"] = p.obj;
        pj["feature"] = p.feature;
        j["pair_features"].push_back(std::move(pj));
      }
    }
    out << j.dump() << '\n';
  }
}

void save_dataset(const std::vector<ImageRecord>& images,
                  const std::string& path) {
  std::ostringstream ss;
  write_dataset(ss, images);
  write_file_atomic(path, ss.str());
}

void write_predictions(std::ostream& out,
                       const std::vector<ImagePredictions>& predictions) {
  for (const auto& img : predictions) {
    ordered_json j;
    j["image_id"] = img.image_id;
    j["triplets"] = ordered_json::array();
    for (const auto& t : img.triplets) {
      ordered_json tj;
      tj["sub_box"] = box_json(t.sub_box);
      tj["sub_label"] = t.sub_label;
      tj["predicate"] = t.predicate;
      tj["obj_box"] = box_json(t.obj_box);
      tj["obj_label"] = t.obj_label;
      tj["score"] = t.score;
      j["triplets"].push_back(std::move(tj));
    }
    if (!img.attributes.empty()) {
      j["attributes"] = ordered_json::array();
      for (const auto& a : img.attributes) {
        ordered_json aj;
        aj["box"] = box_json(a.box);
        aj["label"] = a.label;
        aj["attribute"] = a.attribute;
        aj["score"] = a.score;
        j["attributes"].push_back(std::move(aj));
      }
    }
    out << j.dump() << '\n';
  }
}

std::vector<ImagePredictions> read_predictions(std::istream& in) {
  std::vector<ImagePredictions> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      ImagePredictions img;
      img.image_id = j.at("image_id").get<std::string>();
      for (const auto& t : j.at("triplets")) {
        PredictedTriplet p;
        p.sub_box = box_from_json(t.at("sub_box"));
        p.sub_label = t.at("sub_label").get<int>();
        p.predicate = t.at("predicate").get<int>();
        p.obj_box = box_from_json(t.at("obj_box"));
        p.obj_label = t.at("obj_label").get<int>();
        p.score = t.at("score").get<double>();
        if (p.predicate < 1)
          throw DataError("predicted triplet uses the no-relationship class");
        if (!std::isfinite(p.score)) throw DataError("non-finite score");
        img.triplets.push_back(p);
      }
      if (j.contains("attributes")) {
        for (const auto& a : j["attributes"]) {
          img.attributes.push_back({box_from_json(a.at("box")),
                                    a.at("label").get<int>(),
                                    a.at("attribute").get<int>(),
                                    a.at("score").get<double>()});
        }
      }
      out.push_back(std::move(img));
    } catch (const json::exception& e) {
      throw DataError("predictions line " + std::to_string(line_no) + ": " +
                      e.what());
    } catch (const DataError& e) {
      throw DataError("predictions line " + std::to_string(line_no) + ": " +
                      e.what());
    }
  }
  return out;
}

std::vector<ImagePredictions> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_predictions(in);
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw DataError("cannot rename " + tmp.string() + ": " + ec.message());
}

}  // namespace relfuse
