#include "relfuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "relfuse/errors.hpp"

namespace relfuse {

BranchMask BranchMask::parse(const std::string& spec) {
  BranchMask mask{false, false, false, false};
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "s") {
      mask.semantic = true;
    } else if (tok == "p") {
      mask.spatial = true;
    } else if (tok == "v") {
      mask.visual_spo = true;
    } else if (tok == "so") {
      mask.visual_subobj = true;
    } else if (!tok.empty()) {
      throw std::invalid_argument("unknown branch '" + tok +
                                  "' (expected s, p, v, so)");
    }
  }
  if (!mask.any()) throw std::invalid_argument("at least one branch must be enabled");
  return mask;
}

std::string BranchMask::to_string() const {
  std::vector<std::string> parts;
  if (semantic) parts.push_back("s");
  if (spatial) parts.push_back("p");
  if (visual_spo) parts.push_back("v");
  if (visual_subobj) parts.push_back("so");
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : ",") + p;
  return out;
}

FusionModel make_fusion_model(FrequencyTable freq, std::size_t feature_dim,
                              const BranchMask& mask, const ModelConfig& cfg,
                              Rng& rng) {
  if (!mask.any()) throw std::invalid_argument("at least one branch must be enabled");
  if (feature_dim == 0 && (mask.visual_spo || mask.visual_subobj))
    throw DimensionError("visual branches need a positive feature dimension");
  FusionModel model;
  model.num_predicates = freq.num_predicates;
  model.freq = std::move(freq);
  model.mask = mask;
  model.feature_dim = feature_dim;
  const auto out = static_cast<std::size_t>(model.num_predicates + 1);

  std::vector<std::size_t> dims{kSpatialFeatureDim};
  dims.insert(dims.end(), cfg.spatial_hidden.begin(), cfg.spatial_hidden.end());
  dims.push_back(out);
  model.spatial_mlp = make_mlp(dims, rng);
  // A featureless dataset still gets well-formed (unused) visual heads.
  const std::size_t d = std::max<std::size_t>(feature_dim, 1);
  model.visual = make_visual_branch(d, model.num_predicates, cfg.spo_hidden, rng);
  if (feature_dim == 0) model.feature_dim = 0;

  if (cfg.zero_init_outputs) {
    model.spatial_mlp.layers.back() = zeros_like(model.spatial_mlp.layers.back());
    model.visual.spo_head.layers.back() =
        zeros_like(model.visual.spo_head.layers.back());
    model.visual.sub_head = zeros_like(model.visual.sub_head);
    model.visual.obj_head = zeros_like(model.visual.obj_head);
  }
  return model;
}

FusionGrads zeros_like(const FusionModel& model) {
  return {zeros_like(model.spatial_mlp),
          VisualBranch{zeros_like(model.visual.spo_head),
                       zeros_like(model.visual.sub_head),
                       zeros_like(model.visual.obj_head)}};
}

ParamBlocks trainable_blocks(FusionModel& model) {
  ParamBlocks blocks;
  append_blocks(model.spatial_mlp, blocks);
  append_blocks(model.visual.spo_head, blocks);
  append_blocks(model.visual.sub_head, blocks);
  append_blocks(model.visual.obj_head, blocks);
  return blocks;
}

ParamBlocks gradient_blocks(FusionGrads& grads) {
  ParamBlocks blocks;
  append_blocks(grads.spatial_mlp, blocks);
  append_blocks(grads.visual.spo_head, blocks);
  append_blocks(grads.visual.sub_head, blocks);
  append_blocks(grads.visual.obj_head, blocks);
  return blocks;
}

std::vector<DetectionPair> pair_proposals(const ImageRecord& record) {
  std::vector<int> usable;
  for (std::size_t i = 0; i < record.detections.size(); ++i)
    if (record.detections[i].box.has_positive_area())
      usable.push_back(static_cast<int>(i));
  std::vector<DetectionPair> pairs;
  pairs.reserve(usable.size() * (usable.size() > 0 ? usable.size() - 1 : 0));
  for (int i : usable)
    for (int j : usable)
      if (i != j) pairs.emplace_back(i, j);
  return pairs;
}

namespace {

void check_pair(const ImageRecord& record, DetectionPair pair) {
  const int n = static_cast<int>(record.detections.size());
  if (pair.first < 0 || pair.first >= n || pair.second < 0 ||
      pair.second >= n || pair.first == pair.second)
    throw std::out_of_range("invalid detection pair");
}

SpatialFeature pair_spatial_feature(const ImageRecord& record,
                                    DetectionPair pair) {
  return spatial_feature(record.detections[pair.first].box,
                         record.detections[pair.second].box, record.width,
                         record.height);
}

}  // namespace

BranchLogits branch_logits(const FusionModel& model, const ImageRecord& record,
                           DetectionPair pair) {
  check_pair(record, pair);
  const auto& sub = record.detections[pair.first];
  const auto& obj = record.detections[pair.second];
  BranchLogits out;
  if (model.mask.semantic)
    out.semantic = semantic_logits(model.freq, sub.label, obj.label);
  if (model.mask.spatial)
    out.spatial = spatial_logits(model.spatial_mlp,
                                 pair_spatial_feature(record, pair));
  if (model.mask.visual_spo || model.mask.visual_subobj) {
    const std::size_t d = model.visual.feature_dim();
    if (sub.feature.size() != d || obj.feature.size() != d)
      throw DimensionError("detection feature width does not match the model");
    if (model.mask.visual_spo) {
      const auto v_pred = predicate_feature(record, pair);
      out.spo = predict(model.visual.spo_head,
                        concat_features(sub.feature, v_pred, obj.feature));
    }
    if (model.mask.visual_subobj) {
      out.sub = affine(model.visual.sub_head, sub.feature);
      out.obj = affine(model.visual.obj_head, obj.feature);
    }
  }
  return out;
}

std::vector<double> sum_branches(const BranchLogits& parts, std::size_t width) {
  std::vector<double> total(width, 0.0);
  for (const auto* part :
       {&parts.semantic, &parts.spatial, &parts.spo, &parts.sub, &parts.obj}) {
    if (part->empty()) continue;
    if (part->size() != width) throw DimensionError("branch logit width mismatch");
    for (std::size_t k = 0; k < width; ++k) total[k] += (*part)[k];
  }
  return total;
}

std::vector<double> pair_logits(const FusionModel& model,
                                const ImageRecord& record, DetectionPair pair) {
  return sum_branches(branch_logits(model, record, pair),
                      static_cast<std::size_t>(model.num_predicates + 1));
}

double pair_loss(const FusionModel& model, const ImageRecord& record,
                 DetectionPair pair, int target, FusionGrads* grads,
                 double scale) {
  check_pair(record, pair);
  const auto width = static_cast<std::size_t>(model.num_predicates + 1);
  const auto& sub = record.detections[pair.first];
  const auto& obj = record.detections[pair.second];
  const BranchMask& mask = model.mask;

  std::vector<double> logits(width, 0.0);
  auto add = [&](const std::vector<double>& part) {
    if (part.size() != width) throw DimensionError("branch logit width mismatch");
    for (std::size_t k = 0; k < width; ++k) logits[k] += part[k];
  };

  if (mask.semantic) add(semantic_logits(model.freq, sub.label, obj.label));

  std::optional<ForwardResult> spatial_fwd;
  if (mask.spatial) {
    const auto f = pair_spatial_feature(record, pair);
    spatial_fwd = forward(model.spatial_mlp, f);
    add(spatial_fwd->output);
  }
  std::optional<ForwardResult> spo_fwd;
  if (mask.visual_spo) {
    const auto v_pred = predicate_feature(record, pair);
    spo_fwd = forward(model.visual.spo_head,
                      concat_features(sub.feature, v_pred, obj.feature));
    add(spo_fwd->output);
  }
  if (mask.visual_subobj) {
    add(affine(model.visual.sub_head, sub.feature));
    add(affine(model.visual.obj_head, obj.feature));
  }

  auto xent = softmax_xent(logits, static_cast<std::size_t>(target));
  if (grads != nullptr) {
    for (double& g : xent.grad) g *= scale;
    if (spatial_fwd)
      backward_accumulate(model.spatial_mlp, spatial_fwd->cache, xent.grad,
                          grads->spatial_mlp);
    if (spo_fwd)
      backward_accumulate(model.visual.spo_head, spo_fwd->cache, xent.grad,
                          grads->visual.spo_head);
    if (mask.visual_subobj) {
      layer_backward_accumulate(model.visual.sub_head, sub.feature, xent.grad,
                                grads->visual.sub_head);
      layer_backward_accumulate(model.visual.obj_head, obj.feature, xent.grad,
                                grads->visual.obj_head);
    }
  }
  return xent.loss;
}

namespace {

bool box_matches(const Detection& det, const GtBox& gt, double match_iou) {
  return det.label == gt.label && iou(det.box, gt.box) >= match_iou;
}

}  // namespace

std::vector<LabeledPair> positive_pairs(const ImageRecord& record,
                                        double match_iou) {
  std::vector<LabeledPair> out;
  const int n = static_cast<int>(record.detections.size());
  for (const auto& t : record.gt_triplets) {
    const auto& gs = record.gt_boxes[t.sub];
    const auto& go = record.gt_boxes[t.obj];
    for (int i = 0; i < n; ++i) {
      if (!record.detections[i].box.has_positive_area() ||
          !box_matches(record.detections[i], gs, match_iou))
        continue;
      for (int j = 0; j < n; ++j) {
        if (j == i || !record.detections[j].box.has_positive_area() ||
            !box_matches(record.detections[j], go, match_iou))
          continue;
        LabeledPair lp{{i, j}, t.predicate};
        const bool dup = std::any_of(out.begin(), out.end(), [&](const auto& o) {
          return o.pair == lp.pair && o.target == lp.target;
        });
        if (!dup) out.push_back(lp);
      }
    }
  }
  return out;
}

TrainResult train(FusionModel model, std::span<const ImageRecord> dataset,
                  const TrainConfig& cfg) {
  TrainResult result;
  if (cfg.epochs <= 0 || !model.mask.any_trainable()) {
    result.model = std::move(model);
    return result;
  }
  if (dataset.empty()) throw DataError("training dataset is empty");
  if (!(cfg.negative_ratio >= 0.0))
    throw std::invalid_argument("negative ratio must be non-negative");

  struct ImagePairs {
    std::vector<LabeledPair> positives;
    std::vector<DetectionPair> negatives;
  };
  std::vector<ImagePairs> per_image(dataset.size());
  std::size_t total_pos = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    auto& ip = per_image[i];
    ip.positives = positive_pairs(dataset[i], cfg.match_iou);
    total_pos += ip.positives.size();
    for (const auto& p : pair_proposals(dataset[i])) {
      const bool is_pos = std::any_of(
          ip.positives.begin(), ip.positives.end(),
          [&](const LabeledPair& lp) { return lp.pair == p; });
      if (!is_pos) ip.negatives.push_back(p);
    }
  }
  if (total_pos == 0) throw DataError("no detection pair matches any ground-truth triplet");

  Rng rng(cfg.seed);
  ParamBlocks params = trainable_blocks(model);
  OptimizerState opt = make_optimizer_state(cfg.learning_rate, cfg.momentum, params);
  FusionGrads grads = zeros_like(model);
  ParamBlocks grad_blocks = gradient_blocks(grads);
  const std::size_t batch = static_cast<std::size_t>(std::max(1, cfg.batch_size));

  struct Example {
    std::size_t image;
    LabeledPair pair;
  };
  std::vector<Example> examples;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    examples.clear();
    for (std::size_t i = 0; i < per_image.size(); ++i) {
      auto& ip = per_image[i];
      for (const auto& lp : ip.positives) examples.push_back({i, lp});
      const auto want = static_cast<std::size_t>(
          std::llround(cfg.negative_ratio * static_cast<double>(ip.positives.size())));
      const std::size_t take = std::min(want, ip.negatives.size());
      // Partial Fisher-Yates: uniform sample without replacement.
      for (std::size_t k = 0; k < take; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, ip.negatives.size() - 1);
        std::swap(ip.negatives[k], ip.negatives[pick(rng)]);
        examples.push_back({i, {ip.negatives[k], 0}});
      }
    }
    std::shuffle(examples.begin(), examples.end(), rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < examples.size(); start += batch) {
      const std::size_t end = std::min(examples.size(), start + batch);
      for (auto& b : grad_blocks) std::fill(b.begin(), b.end(), 0.0);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const auto& ex = examples[k];
        const double loss = pair_loss(model, dataset[ex.image], ex.pair.pair,
                                      ex.pair.target, &grads, scale);
        if (!std::isfinite(loss))
          throw NumericError("non-finite training loss at epoch " +
                             std::to_string(epoch));
        epoch_loss += loss;
      }
      sgd_step(params, grad_blocks, opt);
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(examples.size()));
  }
  result.model = std::move(model);
  return result;
}

double positive_accuracy(const FusionModel& model,
                         std::span<const ImageRecord> dataset,
                         double match_iou) {
  std::size_t total = 0;
  std::size_t correct = 0;
  for (const auto& rec : dataset) {
    for (const auto& lp : positive_pairs(rec, match_iou)) {
      const auto logits = pair_logits(model, rec, lp.pair);
      const auto best = std::max_element(logits.begin() + 1, logits.end()) -
                        logits.begin();
      ++total;
      if (best == lp.target) ++correct;
    }
  }
  return total == 0 ? 0.0
                    : static_cast<double>(correct) / static_cast<double>(total);
}

std::vector<PredictedTriplet> predict_image(const FusionModel& model,
                                            const ImageRecord& record,
                                            std::size_t top_n) {
  struct Candidate {
    double score;
    std::size_t pair_index;
    int predicate;
  };
  const auto pairs = pair_proposals(record);
  std::vector<Candidate> cands;
  cands.reserve(pairs.size() * static_cast<std::size_t>(model.num_predicates));
  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    const auto probs = softmax(pair_logits(model, record, pairs[pi]));
    const double det = record.detections[pairs[pi].first].score *
                       record.detections[pairs[pi].second].score;
    for (int p = 1; p <= model.num_predicates; ++p) {
      const double s = probs[p] * det;
      if (!std::isfinite(s)) throw NumericError("non-finite prediction score");
      cands.push_back({s, pi, p});
    }
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return a.score > b.score;
                   });
  if (cands.size() > top_n) cands.resize(top_n);
  std::vector<PredictedTriplet> out;
  out.reserve(cands.size());
  for (const auto& c : cands) {
    const auto& s = record.detections[pairs[c.pair_index].first];
    const auto& o = record.detections[pairs[c.pair_index].second];
    out.push_back({s.box, s.label, c.predicate, o.box, o.label, c.score});
  }
  return out;
}

EvalMode parse_mode(const std::string& name) {
  if (name == "prdcls") return EvalMode::kPrdcls;
  if (name == "sgcls") return EvalMode::kSgcls;
  if (name == "sgdet") return EvalMode::kSgdet;
  throw std::invalid_argument("unknown mode '" + name +
                              "' (expected prdcls, sgcls, sgdet)");
}

std::string mode_name(EvalMode mode) {
  switch (mode) {
    case EvalMode::kPrdcls:
      return "prdcls";
    case EvalMode::kSgcls:
      return "sgcls";
    case EvalMode::kSgdet:
      return "sgdet";
  }
  return "sgdet";
}

ImageRecord gt_substitution(const ImageRecord& record, EvalMode mode,
                            std::size_t feature_dim) {
  if (mode == EvalMode::kSgdet) return record;
  ImageRecord view = record;
  view.detections.clear();
  view.pair_features.clear();
  std::vector<std::optional<std::size_t>> origin;
  for (const auto& gt : record.gt_boxes) {
    const auto best = best_iou_detection(record.detections, gt.box);
    origin.push_back(best);
    Detection det;
    det.box = gt.box;
    det.label = gt.label;
    det.score = 1.0;
    if (mode == EvalMode::kSgcls && best) {
      det.label = record.detections[*best].label;
      det.score = record.detections[*best].score;
    }
    if (!gt.feature.empty()) {
      det.feature = gt.feature;
    } else if (best) {
      det.feature = record.detections[*best].feature;
    } else {
      det.feature.assign(feature_dim, 0.0);
    }
    view.detections.push_back(std::move(det));
  }
  // Re-key union features onto the substituted detections.
  for (std::size_t i = 0; i < origin.size(); ++i) {
    for (std::size_t j = 0; j < origin.size(); ++j) {
      if (i == j || !origin[i] || !origin[j] || *origin[i] == *origin[j]) continue;
      if (const auto* f = record.find_pair_feature(static_cast<int>(*origin[i]),
                                                   static_cast<int>(*origin[j])))
        view.pair_features.push_back(
            {static_cast<int>(i), static_cast<int>(j), *f});
    }
  }
  return view;
}

std::vector<ImageRecord> gt_substitution(std::span<const ImageRecord> dataset,
                                         EvalMode mode,
                                         std::size_t feature_dim) {
  std::vector<ImageRecord> out;
  out.reserve(dataset.size());
  for (const auto& rec : dataset) out.push_back(gt_substitution(rec, mode, feature_dim));
  return out;
}

TrainResult train_model_for_mode(FusionModel model,
                                 std::span<const ImageRecord> dataset,
                                 const TrainConfig& cfg, EvalMode mode) {
  if (mode == EvalMode::kSgdet) return train(std::move(model), dataset, cfg);
  const auto view = gt_substitution(dataset, mode, model.feature_dim);
  return train(std::move(model), view, cfg);
}

std::vector<ImagePredictions> predict_dataset(
    const FusionModel& model, std::span<const ImageRecord> dataset,
    EvalMode mode, std::size_t top_n) {
  std::vector<ImagePredictions> out;
  out.reserve(dataset.size());
  for (const auto& rec : dataset) {
    const ImageRecord view = gt_substitution(rec, mode, model.feature_dim);
    out.push_back({rec.image_id, predict_image(model, view, top_n), {}});
  }
  return out;
}

std::vector<AttributePrediction> predict_attributes(const AttributeHead& head,
                                                    const ImageRecord& record) {
  std::vector<AttributePrediction> out;
  for (const auto& det : record.detections) {
    const auto probs = softmax(attribute_logits(head, det.feature));
    const auto best = std::max_element(probs.begin(), probs.end()) - probs.begin();
    out.push_back({det.box, det.label, static_cast<int>(best),
                   probs[best] * det.score});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.score > b.score;
  });
  return out;
}

}  // namespace relfuse
