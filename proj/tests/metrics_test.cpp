#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "micro_instances.hpp"
#include "reference_eval.hpp"
#include "relfuse/errors.hpp"
#include "relfuse/metrics.hpp"

namespace relfuse {
namespace {

using testing::make_micro_instance;
using testing::relations_of;
using testing::triplets_of;

GtRelation rel(Box s, int sl, int p, Box o, int ol) { return {s, sl, p, o, ol}; }
PredictedTriplet echo(const GtRelation& g, double score) {
  return {g.sub_box, g.sub_label, g.predicate, g.obj_box, g.obj_label, score};
}

TEST(MatchTest, Basics) {
  const MatchSpec spec;
  const GtRelation g = rel({0, 0, 10, 10}, 0, 1, {5, 5, 20, 20}, 1);
  EXPECT_TRUE(triplet_match(echo(g, 1.0), g, spec));
  auto wrong = echo(g, 1.0);
  wrong.predicate = 2;
  EXPECT_FALSE(triplet_match(wrong, g, spec));
  wrong = echo(g, 1.0);
  wrong.obj_label = 0;
  EXPECT_FALSE(triplet_match(wrong, g, spec));
}

TEST(MatchTest, ThresholdIsInclusive) {
  const MatchSpec spec;
  // Intersection 50, union 100: IoU exactly 0.5.
  const GtRelation g = rel({0, 0, 10, 10}, 0, 1, {20, 20, 30, 30}, 1);
  auto p = echo(g, 1.0);
  p.sub_box = {0, 0, 10, 5};
  ASSERT_EQ(iou(p.sub_box, g.sub_box), 0.5);
  EXPECT_TRUE(triplet_match(p, g, spec));
  EXPECT_EQ(triplet_match(p, g, spec), reference::rel_hit(p, g, 0.5));
  p.sub_box = {0, 0, 10, 4.99};
  EXPECT_FALSE(triplet_match(p, g, spec));
}

TEST(MatchTest, PhraseUsesUnionBox) {
  const MatchSpec spec;
  const GtRelation g = rel({0, 0, 10, 10}, 0, 1, {10, 0, 20, 10}, 1);
  auto p = echo(g, 1.0);
  // Swapping the boxes keeps the union but wrecks both relationship IoUs.
  std::swap(p.sub_box, p.obj_box);
  EXPECT_FALSE(triplet_match(p, g, spec));
  EXPECT_TRUE(phrase_match(p, g, spec));
}

TEST(SpecTest, Validate) {
  MatchSpec s;
  EXPECT_NO_THROW(validate(s));
  s.iou_threshold = 0.0;
  EXPECT_THROW(validate(s), std::invalid_argument);
  s = {};
  s.k_per_pair = 0;
  EXPECT_THROW(validate(s), std::invalid_argument);
}

TEST(RecallTest, EmptyAndEcho) {
  const MatchSpec spec;
  const std::vector<ImageRelations> gt{{rel({0, 0, 4, 4}, 0, 1, {2, 2, 6, 6}, 1),
                                        rel({2, 2, 6, 6}, 1, 2, {0, 0, 4, 4}, 0)}};
  const std::vector<ImageTriplets> none{{}};
  EXPECT_EQ(recall_at_k(none, gt, 50, spec), 0.0);
  const std::vector<ImageTriplets> all{{echo(gt[0][0], 0.9), echo(gt[0][1], 0.8)}};
  EXPECT_EQ(recall_at_k(all, gt, 50, spec), 1.0);
  EXPECT_EQ(recall_at_k(all, gt, 1, spec), 0.5);
  EXPECT_THROW(recall_at_k(all, gt, 0, spec), std::invalid_argument);
}

TEST(RecallTest, DuplicatePredictionsCountOnce) {
  const MatchSpec spec{0.5, false, {}, false};
  const GtRelation g = rel({0, 0, 4, 4}, 0, 1, {2, 2, 6, 6}, 1);
  const std::vector<ImageRelations> gt{{g, g}};
  const std::vector<ImageTriplets> one{{echo(g, 0.9)}};
  EXPECT_EQ(recall_at_k(one, gt, 10, spec), 0.5);
  const std::vector<ImageTriplets> two{{echo(g, 0.9), echo(g, 0.5)}};
  EXPECT_EQ(recall_at_k(two, gt, 10, spec), 1.0);
}

TEST(ApTest, HandComputedCurve) {
  const MatchSpec spec;
  const GtRelation a = rel({0, 0, 4, 4}, 0, 1, {2, 2, 6, 6}, 1);
  const GtRelation b = rel({10, 10, 14, 14}, 0, 1, {12, 12, 16, 16}, 1);
  const std::vector<ImageRelations> gt{{a, b}};
  auto miss = echo(a, 0.8);
  miss.obj_box = {30, 30, 40, 40};
  const std::vector<ImageTriplets> preds{{echo(a, 0.9), miss, echo(b, 0.7)}};
  const double ap = average_precision(preds, gt, 1, BoxMode::kRelationship, spec);
  EXPECT_NEAR(ap, (1.0 + 2.0 / 3.0) / 2.0, 1e-12);
  EXPECT_NEAR(ap, 0.8333, 1e-4);
  EXPECT_EQ(average_precision(preds, gt, 2, BoxMode::kRelationship, spec), 0.0);
  const std::vector<ImageTriplets> none{{}};
  EXPECT_EQ(average_precision(none, gt, 1, BoxMode::kRelationship, spec), 0.0);
  const std::vector<ImageTriplets> single{{echo(a, 0.4)}};
  const std::vector<ImageRelations> single_gt{{a}};
  EXPECT_EQ(average_precision(single, single_gt, 1, BoxMode::kPhrase, spec), 1.0);
}

TEST(OiScoreTest, Values) {
  EXPECT_NEAR(oi_score(74.40, 34.96, 40.70), 45.14, 0.005);
  EXPECT_NEAR(oi_score(72.98, 26.54, 32.77), 38.32, 0.005);
  EXPECT_DOUBLE_EQ(oi_score(100, 100, 100), 100.0);
}

// Library metrics against the brute-force reference on random micro
// instances.
TEST(ReferenceTest, MicroInstancesAgree) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = make_micro_instance(rng);
    const auto preds = triplets_of(inst);
    const auto gt = relations_of(inst);
    const int P = inst.num_predicates;
    for (int k : {1, 5, 10}) {
      MatchSpec gc;
      MatchSpec ngc;
      ngc.graph_constraint = false;
      EXPECT_NEAR(recall_at_k(preds, gt, k, gc), reference::ref_recall(preds, gt, k, 1), 1e-9);
      EXPECT_NEAR(recall_at_k(preds, gt, k, ngc),
                  reference::ref_recall(preds, gt, k, std::nullopt), 1e-9);
      for (int kp : {1, 2, P}) {
        EXPECT_NEAR(vrd_recall(preds, gt, k, kp, P, ngc), reference::ref_recall(preds, gt, k, kp),
                    1e-9);
      }
      EXPECT_NEAR(vrd_recall(preds, gt, k, std::nullopt, P, ngc),
                  reference::ref_free_k(preds, gt, k, P), 1e-9);
    }
    const MatchSpec spec;
    for (int p = 1; p <= P; ++p) {
      EXPECT_NEAR(average_precision(preds, gt, p, BoxMode::kRelationship, spec),
                  reference::ref_ap(preds, gt, p, false), 1e-9);
      EXPECT_NEAR(average_precision(preds, gt, p, BoxMode::kPhrase, spec),
                  reference::ref_ap(preds, gt, p, true), 1e-9);
    }
    MatchSpec ngc;
    ngc.graph_constraint = false;
    const auto report = evaluate(inst.predictions, inst.images, P, EvalMode::kSgdet, ngc, {1, 5, 10});
    EXPECT_NEAR(report.map_rel, reference::ref_map(preds, gt, P, false), 1e-9);
    EXPECT_NEAR(report.map_phr, reference::ref_map(preds, gt, P, true), 1e-9);
    EXPECT_NEAR(report.recall_at.at(5), reference::ref_recall(preds, gt, 5, std::nullopt), 1e-9);
  }
}

TEST(PropertyTest, RecallInvariants) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = make_micro_instance(rng);
    const auto preds = triplets_of(inst);
    const auto gt = relations_of(inst);
    const int P = inst.num_predicates;
    MatchSpec gc, ngc;
    ngc.graph_constraint = false;
    for (const auto& spec : {gc, ngc}) {
      double prev = 0.0;
      for (int k = 1; k <= 30; ++k) {
        const double r = recall_at_k(preds, gt, k, spec);
        EXPECT_GE(r, prev);
        prev = r;
      }
    }
    for (int k : {1, 3, 50}) {
      EXPECT_EQ(vrd_recall(preds, gt, k, 1, P, ngc), recall_at_k(preds, gt, k, gc));
      EXPECT_EQ(vrd_recall(preds, gt, k, P, P, ngc), recall_at_k(preds, gt, k, ngc));
      const double free = vrd_recall(preds, gt, k, std::nullopt, P, ngc);
      for (int kp = 1; kp <= P; ++kp) EXPECT_GE(free, vrd_recall(preds, gt, k, kp, P, ngc));
    }
    // With room for every prediction, dropping candidates can only lose
    // matches.
    EXPECT_LE(recall_at_k(preds, gt, 1000, gc), recall_at_k(preds, gt, 1000, ngc));
    // One predicate per pair: the constraint removes nothing.
    std::vector<ImageTriplets> single;
    for (const auto& img : preds) single.push_back(limit_per_pair(img, 1));
    for (int k : {1, 5, 10})
      EXPECT_EQ(recall_at_k(single, gt, k, gc), recall_at_k(single, gt, k, ngc));
  }
}

TEST(PropertyTest, ScoreTransformsChangeNothing) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = make_micro_instance(rng);
    auto scaled = inst.predictions, warped = inst.predictions;
    for (auto& ip : scaled)
      for (auto& t : ip.triplets) t.score *= 3.7;
    for (auto& ip : warped)
      for (auto& t : ip.triplets) t.score = std::exp(5 * t.score) - 0.5;
    MatchSpec ngc;
    ngc.graph_constraint = false;
    for (const auto& spec : {MatchSpec{}, ngc}) {
      const auto a = evaluate(inst.predictions, inst.images, inst.num_predicates, EvalMode::kSgdet, spec);
      const auto b = evaluate(scaled, inst.images, inst.num_predicates, EvalMode::kSgdet, spec);
      const auto c = evaluate(warped, inst.images, inst.num_predicates, EvalMode::kSgdet, spec);
      EXPECT_EQ(a.recall_at, b.recall_at);
      EXPECT_EQ(a.map_rel, b.map_rel);
      EXPECT_EQ(a.map_phr, b.map_phr);
      EXPECT_EQ(a.map_rel, c.map_rel);
      EXPECT_EQ(a.map_phr, c.map_phr);
      EXPECT_EQ(a.recall_at, c.recall_at);
    }
  }
}

TEST(EvaluateTest, PerfectAndEmpty) {
  std::mt19937_64 rng(5);
  testing::MicroInstance inst;
  do {
    inst = make_micro_instance(rng);
  } while (relations_of(inst).empty() ||
           std::all_of(inst.images.begin(), inst.images.end(),
                       [](const auto& r) { return r.gt_triplets.empty(); }));
  std::vector<ImagePredictions> perfect, empty;
  for (const auto& rec : inst.images) {
    ImagePredictions ip{rec.image_id, {}, {}};
    for (const auto& g : gt_relations(rec)) ip.triplets.push_back(echo(g, 1.0));
    perfect.push_back(ip);
    empty.push_back({rec.image_id, {}, {}});
  }
  MatchSpec ngc;
  ngc.graph_constraint = false;
  const auto r = evaluate(perfect, inst.images, inst.num_predicates, EvalMode::kPrdcls, ngc);
  for (const auto& [k, v] : r.recall_at) EXPECT_EQ(v, 1.0) << k;
  EXPECT_EQ(r.map_rel, 1.0);
  EXPECT_EQ(r.map_phr, 1.0);
  EXPECT_DOUBLE_EQ(r.oi_score * 100.0, 100.0);
  EXPECT_EQ(r.mode, "prdcls");

  const auto z = evaluate(empty, inst.images, inst.num_predicates, EvalMode::kSgdet, ngc);
  for (const auto& [k, v] : z.recall_at) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(z.map_rel, 0.0);
  EXPECT_EQ(z.oi_score, 0.0);
  // Missing prediction entries count as empty.
  const auto m = evaluate({}, inst.images, inst.num_predicates, EvalMode::kSgdet, ngc);
  EXPECT_EQ(m.recall_at, z.recall_at);
}

TEST(EvaluateTest, UnknownImageIsAnError) {
  std::mt19937_64 rng(6);
  const auto inst = make_micro_instance(rng);
  std::vector<ImagePredictions> preds{{"nope", {}, {}}};
  EXPECT_THROW(evaluate(preds, inst.images, inst.num_predicates, EvalMode::kSgdet, {}), DataError);
  std::vector<ImagePredictions> dup{{inst.images[0].image_id, {}, {}},
                                    {inst.images[0].image_id, {}, {}}};
  EXPECT_THROW(evaluate(dup, inst.images, inst.num_predicates, EvalMode::kSgdet, {}), DataError);
}

TEST(EvaluateTest, ReportSerialization) {
  std::mt19937_64 rng(8);
  const auto inst = make_micro_instance(rng);
  const auto r = evaluate(inst.predictions, inst.images, inst.num_predicates, EvalMode::kSgdet, {});
  const std::string js = report_json(r);
  EXPECT_NE(js.find("map_rel"), std::string::npos);
  EXPECT_EQ(js, report_json(r));
  EXPECT_FALSE(report_table(r).empty());
}

}  // namespace
}  // namespace relfuse
