#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "relfuse/ablation.hpp"
#include "relfuse/checkpoint.hpp"
#include "relfuse/dataset.hpp"
#include "relfuse/errors.hpp"
#include "relfuse/fusion.hpp"
#include "relfuse/metrics.hpp"
#include "relfuse/synth.hpp"

namespace relfuse::cli {

namespace {

struct RunConfig {
  std::string config_path;
  std::string train_path;
  std::string test_path;
  std::string vocab_path;
  std::string checkpoint_path;
  std::string predictions_path;
  std::string out_path;
  std::string mode = "sgdet";
  std::string graph_constraint = "on";
  std::string k_per_pair;
  std::string branches = "s,p,v,so";
  std::vector<std::size_t> spatial_hidden{64, 64};
  std::vector<std::size_t> spo_hidden{256, 256};
  TrainConfig train;
  std::size_t top_n = 100;
  bool oi_output = false;

  SynthConfig synth;
  std::string signals = "s,p,v";
};

void add_train_flags(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--epochs", cfg.train.epochs, "Training epochs");
  sub->add_option("--batch-size", cfg.train.batch_size, "Minibatch size");
  sub->add_option("--lr", cfg.train.learning_rate, "Learning rate");
  sub->add_option("--momentum", cfg.train.momentum, "SGD momentum");
  sub->add_option("--neg-ratio", cfg.train.negative_ratio,
                  "Sampled negative pairs per positive");
  sub->add_option("--branches", cfg.branches, "Enabled branches from s,p,v,so");
  sub->add_option("--spatial-hidden", cfg.spatial_hidden, "Spatial MLP hidden widths")
      ->delimiter(',');
  sub->add_option("--spo-hidden", cfg.spo_hidden, "Visual <S,P,O> head hidden widths")
      ->delimiter(',');
}

void add_match_flags(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--graph-constraint", cfg.graph_constraint, "on or off")
      ->check(CLI::IsMember({"on", "off"}));
  sub->add_option("--k-per-pair", cfg.k_per_pair,
                  "VRD per-pair candidate budget: a positive integer or 'free'");
}

void add_common(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--config", cfg.config_path, "JSON file of flag defaults");
  sub->add_option("--seed", cfg.train.seed, "Seed for every random choice");
}

// JSON config values fill only the options not given on the command line.
void apply_config_file(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw DataError("config " + path + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr) throw std::invalid_argument("unknown config key '" + key + "'");
    if (opt->count() > 0) continue;
    auto as_text = [](const nlohmann::json& v) {
      return v.is_string() ? v.get<std::string>() : v.dump();
    };
    if (value.is_array()) {
      for (const auto& v : value) opt->add_result(as_text(v));
    } else {
      opt->add_result(as_text(value));
    }
    opt->run_callback();
  }
}

MatchSpec match_spec(const RunConfig& cfg) {
  MatchSpec spec;
  spec.graph_constraint = cfg.graph_constraint == "on";
  if (cfg.k_per_pair == "free") {
    spec.free_k = true;
  } else if (!cfg.k_per_pair.empty()) {
    std::size_t used = 0;
    int k = 0;
    try {
      k = std::stoi(cfg.k_per_pair, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != cfg.k_per_pair.size() || k < 1)
      throw std::invalid_argument("--k-per-pair must be a positive integer or 'free'");
    spec.k_per_pair = k;
  }
  return spec;
}

ModelConfig model_config(const RunConfig& cfg) {
  ModelConfig m;
  m.spatial_hidden = cfg.spatial_hidden;
  m.spo_hidden = cfg.spo_hidden;
  return m;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw std::invalid_argument(std::string(flag) + " is required");
}

std::vector<ImageRecord> load_images(const std::string& path,
                                     const Vocabulary& vocab,
                                     std::ostream& err) {
  auto res = load_dataset_with_warnings(path, vocab);
  for (const auto& w : res.warnings) err << "warning: " << w << "\n";
  return std::move(res.images);
}

int cmd_gen_synth(RunConfig& cfg, std::ostream& out) {
  require(cfg.out_path, "--out");
  SynthConfig sc = cfg.synth;
  sc.seed = cfg.train.seed;
  sc.semantic_signal = sc.spatial_signal = sc.visual_signal = false;
  std::stringstream ss(cfg.signals);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "s") sc.semantic_signal = true;
    else if (tok == "p") sc.spatial_signal = true;
    else if (tok == "v") sc.visual_signal = true;
    else if (!tok.empty()) throw std::invalid_argument("unknown signal '" + tok + "'");
  }
  const SynthData data = generate(sc);
  const std::filesystem::path dir(cfg.out_path);
  std::filesystem::create_directories(dir);
  save_dataset(data.train, (dir / "train.jsonl").string());
  save_dataset(data.test, (dir / "test.jsonl").string());
  save_vocabulary(data.vocab, (dir / "vocab.json").string());
  write_file_atomic((dir / "oracle.json").string(), oracle_json(data.oracle));
  out << "wrote " << data.train.size() << " train and " << data.test.size()
      << " test images to " << dir.string() << "\n";
  out << "bayes accuracy (test): " << bayes_accuracy(data.oracle, data.test) << "\n";
  return kOk;
}

int cmd_train(RunConfig& cfg, std::ostream& out, std::ostream& err) {
  require(cfg.train_path, "--train");
  require(cfg.vocab_path, "--vocab");
  require(cfg.checkpoint_path, "--checkpoint");
  const EvalMode mode = parse_mode(cfg.mode);
  const BranchMask mask = BranchMask::parse(cfg.branches);
  const Vocabulary vocab = load_vocabulary(cfg.vocab_path);
  const auto images = load_images(cfg.train_path, vocab, err);

  Checkpoint ckpt;
  ckpt.vocab_hash = vocab.hash();
  TrainConfig tc = cfg.train;
  tc.seed = cfg.train.seed + 1;
  FusionModel model =
      initial_model(images, vocab, mask, model_config(cfg), cfg.train.seed);
  TrainResult trained = train_model_for_mode(std::move(model), images, tc, mode);
  ckpt.model = std::move(trained.model);

  const auto attr_examples = attribute_examples(images);
  if (!vocab.attributes.empty() && !attr_examples.empty() && cfg.train.epochs > 0) {
    Rng rng(cfg.train.seed + 2);
    const std::vector<std::size_t> hidden{64};
    AttributeHead head = make_attribute_head(attr_examples.front().feature.size(),
                                             vocab.attributes.size(), hidden, rng);
    AttributeTrainConfig ac;
    ac.epochs = cfg.train.epochs;
    ac.seed = cfg.train.seed + 3;
    train_attribute_head(head, attr_examples, ac);
    ckpt.attributes = std::move(head);
  }
  save_checkpoint(ckpt, cfg.checkpoint_path);

  std::ostringstream csv;
  csv << "epoch,loss\n";
  for (std::size_t e = 0; e < trained.loss_history.size(); ++e)
    csv << e + 1 << ',' << nlohmann::json(trained.loss_history[e]).dump() << '\n';
  write_file_atomic(cfg.checkpoint_path + ".loss.csv", csv.str());
  if (trained.loss_history.empty()) {
    out << "no training performed; wrote initial checkpoint\n";
  } else {
    out << "final train loss: " << trained.loss_history.back() << "\n";
  }
  return kOk;
}

int cmd_predict(RunConfig& cfg, std::ostream& out, std::ostream& err) {
  require(cfg.test_path, "--test");
  require(cfg.vocab_path, "--vocab");
  require(cfg.checkpoint_path, "--checkpoint");
  require(cfg.out_path, "--out");
  const EvalMode mode = parse_mode(cfg.mode);
  const Vocabulary vocab = load_vocabulary(cfg.vocab_path);
  const Checkpoint ckpt = load_checkpoint(cfg.checkpoint_path);
  if (ckpt.vocab_hash != vocab.hash())
    throw DataError("checkpoint was trained with a different vocabulary");
  const auto images = load_images(cfg.test_path, vocab, err);
  auto preds = predict_dataset(ckpt.model, images, mode, cfg.top_n);
  if (cfg.oi_output && ckpt.attributes) {
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto view = gt_substitution(images[i], mode, ckpt.model.feature_dim);
      preds[i].attributes = predict_attributes(*ckpt.attributes, view);
    }
  }
  std::ostringstream ss;
  write_predictions(ss, preds);
  write_file_atomic(cfg.out_path, ss.str());
  out << "wrote predictions for " << preds.size() << " images\n";
  return kOk;
}

int cmd_eval(RunConfig& cfg, std::ostream& out, std::ostream& err) {
  require(cfg.test_path, "--test");
  require(cfg.vocab_path, "--vocab");
  require(cfg.predictions_path, "--predictions");
  const MatchSpec spec = match_spec(cfg);
  const EvalMode mode = parse_mode(cfg.mode);
  const Vocabulary vocab = load_vocabulary(cfg.vocab_path);
  const auto images = load_images(cfg.test_path, vocab, err);
  const auto preds = load_predictions(cfg.predictions_path);
  const EvalReport report =
      evaluate(preds, images, vocab.num_predicates(), mode, spec);
  if (!cfg.out_path.empty()) write_file_atomic(cfg.out_path, report_json(report));
  out << report_table(report);
  return kOk;
}

int cmd_ablate(RunConfig& cfg, std::ostream& out, std::ostream& err) {
  require(cfg.train_path, "--train");
  require(cfg.test_path, "--test");
  require(cfg.vocab_path, "--vocab");
  const MatchSpec spec = match_spec(cfg);
  const EvalMode mode = parse_mode(cfg.mode);
  const Vocabulary vocab = load_vocabulary(cfg.vocab_path);
  const auto train_images = load_images(cfg.train_path, vocab, err);
  const auto test_images = load_images(cfg.test_path, vocab, err);
  const auto rows = run_ablation(train_images, test_images, vocab, cfg.train,
                                 model_config(cfg), mode, spec);
  if (!cfg.out_path.empty()) write_file_atomic(cfg.out_path, ablation_csv(rows));
  out << ablation_table(rows);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Late-fusion visual relationship scoring and evaluation"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic dataset");
  add_common(gen, cfg);
  gen->add_option("--out", cfg.out_path, "Output directory");
  gen->add_option("--num-images", cfg.synth.num_images, "Training images");
  gen->add_option("--num-test-images", cfg.synth.num_test_images, "Test images");
  gen->add_option("--feature-dim", cfg.synth.feature_dim, "Feature width");
  gen->add_option("--noise", cfg.synth.noise, "Union-feature cluster std");
  gen->add_option("--signals", cfg.signals, "Signals from s,p,v");

  auto* trn = app.add_subcommand("train", "Train a fusion model");
  add_common(trn, cfg);
  add_train_flags(trn, cfg);
  trn->add_option("--train", cfg.train_path, "Training dataset JSONL");
  trn->add_option("--vocab", cfg.vocab_path, "Vocabulary JSON");
  trn->add_option("--checkpoint", cfg.checkpoint_path, "Checkpoint to write");
  trn->add_option("--mode", cfg.mode, "prdcls, sgcls or sgdet");

  auto* pred = app.add_subcommand("predict", "Write ranked triplets");
  add_common(pred, cfg);
  pred->add_option("--test", cfg.test_path, "Dataset JSONL");
  pred->add_option("--vocab", cfg.vocab_path, "Vocabulary JSON");
  pred->add_option("--checkpoint", cfg.checkpoint_path, "Checkpoint to read");
  pred->add_option("--mode", cfg.mode, "prdcls, sgcls or sgdet");
  pred->add_option("--top-n", cfg.top_n, "Triplets kept per image");
  pred->add_option("--out", cfg.out_path, "Prediction JSONL to write");
  pred->add_flag("--oi", cfg.oi_output, "Append attribute predictions");

  auto* evl = app.add_subcommand("eval", "Score predictions");
  add_common(evl, cfg);
  add_match_flags(evl, cfg);
  evl->add_option("--test", cfg.test_path, "Dataset JSONL");
  evl->add_option("--vocab", cfg.vocab_path, "Vocabulary JSON");
  evl->add_option("--predictions", cfg.predictions_path, "Prediction JSONL");
  evl->add_option("--mode", cfg.mode, "prdcls, sgcls or sgdet");
  evl->add_option("--out", cfg.out_path, "Report JSON to write");

  auto* abl = app.add_subcommand("ablate", "Branch ablation table");
  add_common(abl, cfg);
  add_train_flags(abl, cfg);
  add_match_flags(abl, cfg);
  abl->add_option("--train", cfg.train_path, "Training dataset JSONL");
  abl->add_option("--test", cfg.test_path, "Test dataset JSONL");
  abl->add_option("--vocab", cfg.vocab_path, "Vocabulary JSON");
  abl->add_option("--mode", cfg.mode, "prdcls, sgcls or sgdet");
  abl->add_option("--out", cfg.out_path, "CSV to write");

  std::vector<std::string> argv_store{"relfuse"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    for (auto* sub : app.get_subcommands()) apply_config_file(sub, cfg.config_path);
    if (gen->parsed()) return cmd_gen_synth(cfg, out);
    if (trn->parsed()) return cmd_train(cfg, out, err);
    if (pred->parsed()) return cmd_predict(cfg, out, err);
    if (evl->parsed()) return cmd_eval(cfg, out, err);
    if (abl->parsed()) return cmd_ablate(cfg, out, err);
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumericError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const DimensionError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const CLI::Error& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::domain_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace relfuse::cli
