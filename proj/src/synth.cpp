#include "relfuse/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "relfuse/errors.hpp"
#include "relfuse/numcore.hpp"

namespace relfuse {

void validate(const SynthConfig& cfg) {
  if (!cfg.semantic_signal && !cfg.spatial_signal && !cfg.visual_signal)
    throw std::invalid_argument("at least one synthetic signal must be enabled");
  if (cfg.num_images < 0 || cfg.num_test_images < 0)
    throw std::invalid_argument("image counts must be non-negative");
  if (cfg.min_objects < 0 || cfg.max_objects < cfg.min_objects)
    throw std::invalid_argument("invalid objects-per-image range");
  if (cfg.num_classes < 1 || cfg.num_attributes < 0)
    throw std::invalid_argument("invalid class or attribute count");
  if (cfg.num_predicates < 2)
    throw std::invalid_argument("need at least the on and under predicates");
  if (cfg.feature_dim == 0) throw std::invalid_argument("feature_dim must be positive");
  if (!(cfg.noise >= 0.0) || !(cfg.object_noise >= 0.0))
    throw std::invalid_argument("noise levels must be non-negative");
  if (!(cfg.relation_rate >= 0.0 && cfg.relation_rate <= 1.0) ||
      !(cfg.spatial_strength >= 0.0 && cfg.spatial_strength <= 1.0))
    throw std::invalid_argument("rates must lie in [0,1]");
  if (!(cfg.table_concentration > 0.0))
    throw std::invalid_argument("table concentration must be positive");
  if (!(cfg.jitter >= 0.0 && cfg.jitter < 0.5))
    throw std::invalid_argument("jitter must lie in [0, 0.5)");
  if (cfg.image_size < 100) throw std::invalid_argument("image_size too small");
}

int spatial_rule(const Box& sub, const Box& obj, const OracleTables& oracle) {
  const double iw = std::min(sub.xmax, obj.xmax) - std::max(sub.xmin, obj.xmin);
  const double ih = std::min(sub.ymax, obj.ymax) - std::max(sub.ymin, obj.ymin);
  if (iw <= 0.0 || ih <= 0.0) return 0;
  // Image y grows downward: "above" means a smaller center y.
  if (sub.center_y() < obj.center_y()) return oracle.on_predicate;
  if (sub.center_y() > obj.center_y()) return oracle.under_predicate;
  return 0;
}

namespace {

std::vector<double> gaussian_vector(std::size_t d, double sigma, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(d);
  for (double& x : v) x = sigma * n(rng);
  return v;
}

int sample_categorical(const std::vector<double>& probs, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (r < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

struct Generator {
  const SynthConfig& cfg;
  const OracleTables& oracle;
  const std::vector<std::vector<double>>& class_means;
  const std::vector<std::vector<double>>& attr_means;
  Rng& rng;

  ImageRecord image(const std::string& id) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double size = cfg.image_size;
    ImageRecord rec;
    rec.image_id = id;
    rec.width = cfg.image_size;
    rec.height = cfg.image_size;
    const int n = std::uniform_int_distribution<int>(cfg.min_objects, cfg.max_objects)(rng);

    std::vector<std::vector<double>> obj_features;
    for (int i = 0; i < n; ++i) {
      GtBox gt;
      gt.label = std::uniform_int_distribution<int>(0, cfg.num_classes - 1)(rng);
      const double w = size * (0.08 + 0.27 * unit(rng));
      const double h = size * (0.08 + 0.27 * unit(rng));
      const double x = (size - w) * unit(rng);
      const double y = (size - h) * unit(rng);
      gt.box = {x, y, x + w, y + h};
      std::vector<double> f = gaussian_vector(cfg.feature_dim, cfg.object_noise, rng);
      for (std::size_t k = 0; k < f.size(); ++k) f[k] += class_means[gt.label][k];
      if (cfg.num_attributes > 0) {
        const int a = std::uniform_int_distribution<int>(0, cfg.num_attributes - 1)(rng);
        rec.gt_attributes.push_back({i, a});
        for (std::size_t k = 0; k < f.size(); ++k) f[k] += attr_means[a][k];
      }
      obj_features.push_back(std::move(f));
      rec.gt_boxes.push_back(std::move(gt));
    }

    const bool rule_only = !cfg.semantic_signal && !cfg.visual_signal;
    std::vector<double> uniform(cfg.num_predicates, 1.0 / cfg.num_predicates);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const auto& s = rec.gt_boxes[i];
        const auto& o = rec.gt_boxes[j];
        const int geom = cfg.spatial_signal ? spatial_rule(s.box, o.box, oracle) : 0;
        bool related = false;
        if (geom != 0) {
          related = true;
        } else if (!rule_only) {
          related = unit(rng) < cfg.relation_rate;
        }
        int predicate = 0;
        if (related) {
          if (geom != 0 && unit(rng) < cfg.spatial_strength) {
            predicate = geom;
          } else {
            const auto& probs = cfg.semantic_signal ? oracle.row(s.label, o.label) : uniform;
            predicate = 1 + sample_categorical(probs, rng);
          }
          rec.gt_triplets.push_back({i, predicate, j});
        }
        std::vector<double> f = gaussian_vector(cfg.feature_dim, cfg.noise, rng);
        if (cfg.visual_signal)
          for (std::size_t k = 0; k < f.size(); ++k)
            f[k] += oracle.predicate_means[predicate][k];
        rec.pair_features.push_back({i, j, std::move(f)});
      }
    }

    for (int i = 0; i < n; ++i) {
      const Box& b = rec.gt_boxes[i].box;
      double worst = 0.0;
      std::array<double, 4> u{};
      for (double& v : u) {
        v = cfg.jitter * (2.0 * unit(rng) - 1.0);
        worst = std::max(worst, std::abs(v));
      }
      Box jittered{b.xmin + u[0] * b.width(), b.ymin + u[1] * b.height(),
                   b.xmax + u[2] * b.width(), b.ymax + u[3] * b.height()};
      jittered.xmin = std::clamp(jittered.xmin, 0.0, size);
      jittered.ymin = std::clamp(jittered.ymin, 0.0, size);
      jittered.xmax = std::clamp(jittered.xmax, jittered.xmin, size);
      jittered.ymax = std::clamp(jittered.ymax, jittered.ymin, size);
      rec.detections.push_back(
          {rec.gt_boxes[i].label, jittered, 1.0 - worst, obj_features[i]});
    }
    return rec;
  }
};

}  // namespace

SynthData generate(const SynthConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  SynthData data;

  for (int c = 0; c < cfg.num_classes; ++c)
    data.vocab.objects.push_back("class_" + std::to_string(c));
  data.vocab.predicates = {Vocabulary::kNoRelationship, "on", "under"};
  for (int p = 3; p <= cfg.num_predicates; ++p)
    data.vocab.predicates.push_back("pred_" + std::to_string(p));
  for (int a = 0; a < cfg.num_attributes; ++a)
    data.vocab.attributes.push_back("attr_" + std::to_string(a));

  OracleTables& oracle = data.oracle;
  oracle.num_classes = cfg.num_classes;
  oracle.num_predicates = cfg.num_predicates;
  oracle.semantic_signal = cfg.semantic_signal;
  oracle.spatial_signal = cfg.spatial_signal;
  oracle.visual_signal = cfg.visual_signal;
  oracle.spatial_strength = cfg.spatial_strength;
  oracle.noise = cfg.noise;

  std::gamma_distribution<double> gamma(cfg.table_concentration, 1.0);
  for (int s = 0; s < cfg.num_classes; ++s) {
    for (int o = 0; o < cfg.num_classes; ++o) {
      std::vector<double> row(cfg.num_predicates);
      double total = 0.0;
      for (double& v : row) {
        v = gamma(rng) + 1e-12;
        total += v;
      }
      for (double& v : row) v /= total;
      oracle.conditional.push_back(std::move(row));
    }
  }
  for (int p = 0; p <= cfg.num_predicates; ++p)
    oracle.predicate_means.push_back(gaussian_vector(cfg.feature_dim, 1.0, rng));

  std::vector<std::vector<double>> class_means;
  for (int c = 0; c < cfg.num_classes; ++c)
    class_means.push_back(gaussian_vector(cfg.feature_dim, 1.0, rng));
  std::vector<std::vector<double>> attr_means;
  for (int a = 0; a < cfg.num_attributes; ++a)
    attr_means.push_back(gaussian_vector(cfg.feature_dim, 1.0, rng));

  Generator gen{cfg, oracle, class_means, attr_means, rng};
  for (int i = 0; i < cfg.num_images; ++i)
    data.train.push_back(gen.image("train_" + std::to_string(i)));
  for (int i = 0; i < cfg.num_test_images; ++i)
    data.test.push_back(gen.image("test_" + std::to_string(i)));
  return data;
}

std::vector<double> bayes_log_posterior(const OracleTables& oracle,
                                        const ImageRecord& record,
                                        const GtTriplet& triplet) {
  const int num_gt = static_cast<int>(record.gt_boxes.size());
  if (triplet.sub < 0 || triplet.sub >= num_gt || triplet.obj < 0 ||
      triplet.obj >= num_gt)
    throw DataError("triplet indices out of range for image " + record.image_id);
  const auto& s = record.gt_boxes[triplet.sub];
  const auto& o = record.gt_boxes[triplet.obj];
  if (s.label < 0 || s.label >= oracle.num_classes || o.label < 0 ||
      o.label >= oracle.num_classes)
    throw DataError("object class outside the oracle table in image " +
                    record.image_id);
  const int P = oracle.num_predicates;
  const auto& base = oracle.semantic_signal
                         ? oracle.row(s.label, o.label)
                         : std::vector<double>(P, 1.0 / P);
  const int geom = oracle.spatial_signal ? spatial_rule(s.box, o.box, oracle) : 0;

  std::vector<double> logp(P);
  for (int p = 1; p <= P; ++p) {
    double prior = base[p - 1];
    if (geom != 0)
      prior = oracle.spatial_strength * (p == geom ? 1.0 : 0.0) +
              (1.0 - oracle.spatial_strength) * prior;
    logp[p - 1] = prior > 0.0 ? std::log(prior)
                              : -std::numeric_limits<double>::infinity();
  }
  if (oracle.visual_signal) {
    const auto* f = record.find_pair_feature(triplet.sub, triplet.obj);
    if (f == nullptr)
      throw DataError("image " + record.image_id +
                      " lacks the union feature the oracle needs");
    const double var = oracle.noise * oracle.noise;
    for (int p = 1; p <= P; ++p) {
      const auto& mean = oracle.predicate_means.at(p);
      if (mean.size() != f->size()) throw DataError("oracle feature width mismatch");
      double sq = 0.0;
      for (std::size_t k = 0; k < mean.size(); ++k) {
        const double d = (*f)[k] - mean[k];
        sq += d * d;
      }
      // Zero noise collapses the likelihood onto the nearest mean.
      logp[p - 1] += var > 0.0 ? -0.5 * sq / var : (sq == 0.0 ? 0.0 : -1e300);
    }
  }
  return logp;
}

double bayes_accuracy(const OracleTables& oracle,
                      std::span<const ImageRecord> dataset) {
  std::size_t total = 0;
  std::size_t correct = 0;
  for (const auto& rec : dataset) {
    for (const auto& t : rec.gt_triplets) {
      const auto logp = bayes_log_posterior(oracle, rec, t);
      const int best =
          1 + static_cast<int>(std::max_element(logp.begin(), logp.end()) - logp.begin());
      ++total;
      if (best == t.predicate) ++correct;
    }
  }
  return total == 0 ? 0.0
                    : static_cast<double>(correct) / static_cast<double>(total);
}

std::string oracle_json(const OracleTables& oracle) {
  nlohmann::ordered_json j;
  j["num_classes"] = oracle.num_classes;
  j["num_predicates"] = oracle.num_predicates;
  j["semantic_signal"] = oracle.semantic_signal;
  j["spatial_signal"] = oracle.spatial_signal;
  j["visual_signal"] = oracle.visual_signal;
  j["spatial_strength"] = oracle.spatial_strength;
  j["noise"] = oracle.noise;
  j["on_predicate"] = oracle.on_predicate;
  j["under_predicate"] = oracle.under_predicate;
  j["conditional"] = oracle.conditional;
  j["predicate_means"] = oracle.predicate_means;
  return j.dump(1) + "\n";
}

OracleTables parse_oracle(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    OracleTables o;
    o.num_classes = j.at("num_classes").get<int>();
    o.num_predicates = j.at("num_predicates").get<int>();
    o.semantic_signal = j.at("semantic_signal").get<bool>();
    o.spatial_signal = j.at("spatial_signal").get<bool>();
    o.visual_signal = j.at("visual_signal").get<bool>();
    o.spatial_strength = j.at("spatial_strength").get<double>();
    o.noise = j.at("noise").get<double>();
    o.on_predicate = j.at("on_predicate").get<int>();
    o.under_predicate = j.at("under_predicate").get<int>();
    o.conditional = j.at("conditional").get<std::vector<std::vector<double>>>();
    o.predicate_means = j.at("predicate_means").get<std::vector<std::vector<double>>>();
    if (o.conditional.size() != static_cast<std::size_t>(o.num_classes * o.num_classes))
      throw DataError("oracle table has the wrong number of rows");
    return o;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed oracle: ") + e.what());
  }
}

}  // namespace relfuse
