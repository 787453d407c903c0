#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "relfuse/ablation.hpp"
#include "relfuse/checkpoint.hpp"
#include "relfuse/metrics.hpp"

namespace relfuse {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(std::vector<std::string> args, std::string* out_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (out_text) *out_text = out.str();
  return code;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(fs::temp_directory_path() / ("relfuse_cli_test_" + std::to_string(::getpid())));
    fs::remove_all(*dir_);
    ASSERT_EQ(run_cli({"gen-synth", "--out", data().string(), "--num-images", "40",
                       "--num-test-images", "12", "--feature-dim", "6", "--seed", "3"}),
              0);
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete dir_;
  }
  static fs::path data() { return *dir_ / "data"; }
  static std::string file(const std::string& name) { return (*dir_ / name).string(); }
  static std::vector<std::string> train_args(const std::string& ckpt, const std::string& epochs) {
    return {"train", "--train", (data() / "train.jsonl").string(), "--vocab",
            (data() / "vocab.json").string(), "--checkpoint", ckpt, "--epochs", epochs,
            "--spatial-hidden", "16", "16", "--spo-hidden", "24", "24", "--seed", "5"};
  }
  static std::vector<std::string> predict_args(const std::string& ckpt, const std::string& out) {
    return {"predict", "--test", (data() / "test.jsonl").string(), "--vocab",
            (data() / "vocab.json").string(), "--checkpoint", ckpt, "--out", out};
  }
  static fs::path* dir_;
};
fs::path* CliTest::dir_ = nullptr;

TEST_F(CliTest, GenSynthWritesFiles) {
  for (const char* f : {"train.jsonl", "test.jsonl", "vocab.json", "oracle.json"})
    EXPECT_TRUE(fs::exists(data() / f)) << f;
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run_cli({}), 1);
  EXPECT_EQ(run_cli({"bogus"}), 1);
  EXPECT_EQ(run_cli({"train", "--epochs", "x"}), 1);
  EXPECT_EQ(run_cli({"train", "--train", (data() / "train.jsonl").string()}), 1);
  EXPECT_EQ(run_cli({"eval", "--test", (data() / "test.jsonl").string(), "--vocab",
                     (data() / "vocab.json").string(), "--predictions", file("absent.jsonl")}),
            2);
  {
    std::ofstream bad(file("broken.jsonl"));
    bad << "{\"image_id\": 3}\n";
  }
  EXPECT_EQ(run_cli({"train", "--train", file("broken.jsonl"), "--vocab",
                     (data() / "vocab.json").string(), "--checkpoint", file("x.json")}),
            2);
  auto diverge = train_args(file("nan.json"), "3");
  diverge.insert(diverge.end(), {"--lr", "1e12", "--momentum", "0.5"});
  EXPECT_EQ(run_cli(diverge), 3);
  EXPECT_EQ(run_cli({"eval", "--test", (data() / "test.jsonl").string(), "--vocab",
                     (data() / "vocab.json").string(), "--predictions", file("absent.jsonl"),
                     "--k-per-pair", "zero"}),
            1);
}

TEST_F(CliTest, ZeroEpochsWritesInitialization) {
  ASSERT_EQ(run_cli(train_args(file("init.json"), "0")), 0);
  const Vocabulary vocab = load_vocabulary((data() / "vocab.json").string());
  const auto images = load_dataset((data() / "train.jsonl").string(), vocab);
  ModelConfig mc;
  mc.spatial_hidden = {16, 16};
  mc.spo_hidden = {24, 24};
  Checkpoint expect;
  expect.model = initial_model(images, vocab, {}, mc, 5);
  expect.vocab_hash = vocab.hash();
  EXPECT_EQ(load_checkpoint(file("init.json")), expect);
  EXPECT_EQ(slurp(file("init.json")), serialize_checkpoint(expect));
}

TEST_F(CliTest, ByteIdenticalRuns) {
  ASSERT_EQ(run_cli(train_args(file("a.json"), "2")), 0);
  ASSERT_EQ(run_cli(train_args(file("b.json"), "2")), 0);
  EXPECT_EQ(slurp(file("a.json")), slurp(file("b.json")));
  EXPECT_EQ(slurp(file("a.json.loss.csv")), slurp(file("b.json.loss.csv")));
  ASSERT_EQ(run_cli(predict_args(file("a.json"), file("pa.jsonl"))), 0);
  ASSERT_EQ(run_cli(predict_args(file("a.json"), file("pb.jsonl"))), 0);
  EXPECT_EQ(slurp(file("pa.jsonl")), slurp(file("pb.jsonl")));
}

TEST_F(CliTest, EvalMatchesLibrary) {
  ASSERT_EQ(run_cli(train_args(file("m.json"), "2")), 0);
  auto pargs = predict_args(file("m.json"), file("pm.jsonl"));
  pargs.push_back("--oi");
  ASSERT_EQ(run_cli(pargs), 0);
  const Vocabulary vocab = load_vocabulary((data() / "vocab.json").string());
  const auto test = load_dataset((data() / "test.jsonl").string(), vocab);
  const auto ckpt = load_checkpoint(file("m.json"));
  auto lib_preds = predict_dataset(ckpt.model, test, EvalMode::kSgdet, 100);
  auto cli_preds = load_predictions(file("pm.jsonl"));
  ASSERT_EQ(cli_preds.size(), lib_preds.size());
  for (std::size_t i = 0; i < lib_preds.size(); ++i) {
    EXPECT_EQ(cli_preds[i].triplets, lib_preds[i].triplets);
    EXPECT_FALSE(cli_preds[i].attributes.empty());
  }

  for (const std::string gc : {"on", "off"}) {
    ASSERT_EQ(run_cli({"eval", "--test", (data() / "test.jsonl").string(), "--vocab",
                       (data() / "vocab.json").string(), "--predictions", file("pm.jsonl"),
                       "--graph-constraint", gc, "--out", file("report.json")}),
              0);
    MatchSpec spec;
    spec.graph_constraint = gc == "on";
    const auto report = evaluate(cli_preds, test, vocab.num_predicates(), EvalMode::kSgdet, spec);
    EXPECT_EQ(slurp(file("report.json")), report_json(report));
  }

  // Echoing the ground truth scores perfectly.
  std::vector<ImagePredictions> perfect;
  for (const auto& rec : test) {
    ImagePredictions ip{rec.image_id, {}, {}};
    for (const auto& g : gt_relations(rec))
      ip.triplets.push_back({g.sub_box, g.sub_label, g.predicate, g.obj_box, g.obj_label, 1.0});
    perfect.push_back(ip);
  }
  std::ostringstream ss;
  write_predictions(ss, perfect);
  {
    std::ofstream f(file("perfect.jsonl"));
    f << ss.str();
  }
  ASSERT_EQ(run_cli({"eval", "--test", (data() / "test.jsonl").string(), "--vocab",
                     (data() / "vocab.json").string(), "--predictions", file("perfect.jsonl"),
                     "--graph-constraint", "off", "--out", file("perfect_report.json")}),
            0);
  const auto j = slurp(file("perfect_report.json"));
  const auto report = evaluate(perfect, test, vocab.num_predicates(), EvalMode::kSgdet,
                               MatchSpec{0.5, false, {}, false});
  EXPECT_DOUBLE_EQ(report.oi_score * 100, 100.0);
  EXPECT_EQ(j, report_json(report));
}

TEST_F(CliTest, PredictionRoundTripReEvaluates) {
  ASSERT_EQ(run_cli(train_args(file("r.json"), "1")), 0);
  ASSERT_EQ(run_cli(predict_args(file("r.json"), file("pr.jsonl"))), 0);
  const Vocabulary vocab = load_vocabulary((data() / "vocab.json").string());
  const auto test = load_dataset((data() / "test.jsonl").string(), vocab);
  const auto once = load_predictions(file("pr.jsonl"));
  std::ostringstream ss;
  write_predictions(ss, once);
  std::istringstream in(ss.str());
  const auto twice = read_predictions(in);
  EXPECT_EQ(once, twice);
  EXPECT_EQ(report_json(evaluate(once, test, vocab.num_predicates(), EvalMode::kSgdet, {})),
            report_json(evaluate(twice, test, vocab.num_predicates(), EvalMode::kSgdet, {})));
}

TEST_F(CliTest, EmptyDatasetGivesEmptyPredictions) {
  ASSERT_EQ(run_cli(train_args(file("e.json"), "0")), 0);
  { std::ofstream f(file("empty.jsonl")); }
  ASSERT_EQ(run_cli({"predict", "--test", file("empty.jsonl"), "--vocab",
                     (data() / "vocab.json").string(), "--checkpoint", file("e.json"), "--out",
                     file("pe.jsonl")}),
            0);
  EXPECT_EQ(slurp(file("pe.jsonl")), "");
}

TEST_F(CliTest, VocabularyMismatchRejected) {
  ASSERT_EQ(run_cli(train_args(file("v.json"), "0")), 0);
  Vocabulary other = load_vocabulary((data() / "vocab.json").string());
  other.objects.back() += "_renamed";
  save_vocabulary(other, file("other_vocab.json"));
  EXPECT_EQ(run_cli({"predict", "--test", (data() / "test.jsonl").string(), "--vocab",
                     file("other_vocab.json"), "--checkpoint", file("v.json"), "--out",
                     file("pv.jsonl")}),
            2);
}

TEST_F(CliTest, ConfigFileFlagsWin) {
  {
    std::ofstream f(file("cfg.json"));
    f << R"({"epochs": 0, "seed": 5, "spatial-hidden": [16, 16], "spo-hidden": [24, 24]})";
  }
  ASSERT_EQ(run_cli({"train", "--train", (data() / "train.jsonl").string(), "--vocab",
                     (data() / "vocab.json").string(), "--checkpoint", file("c1.json"),
                     "--config", file("cfg.json")}),
            0);
  ASSERT_EQ(run_cli(train_args(file("c2.json"), "0")), 0);
  EXPECT_EQ(slurp(file("c1.json")), slurp(file("c2.json")));
  // The flag overrides the file's epoch count.
  ASSERT_EQ(run_cli({"train", "--train", (data() / "train.jsonl").string(), "--vocab",
                     (data() / "vocab.json").string(), "--checkpoint", file("c3.json"),
                     "--config", file("cfg.json"), "--epochs", "1"}),
            0);
  EXPECT_NE(slurp(file("c1.json")), slurp(file("c3.json")));
}

TEST_F(CliTest, AblateWritesFourRows) {
  std::string printed;
  ASSERT_EQ(run_cli({"ablate", "--train", (data() / "train.jsonl").string(), "--test",
                     (data() / "test.jsonl").string(), "--vocab", (data() / "vocab.json").string(),
                     "--epochs", "1", "--spatial-hidden", "8", "--spo-hidden", "8", "--out",
                     file("abl.csv")},
                    &printed),
            0);
  std::istringstream csv(slurp(file("abl.csv")));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "config,R@50,mAP_rel,mAP_phr,score");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 4);
  EXPECT_FALSE(printed.empty());
}

}  // namespace
}  // namespace relfuse
