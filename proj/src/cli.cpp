#include "obfmal/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "obfmal/dataset.hpp"
#include "obfmal/eval.hpp"
#include "obfmal/feature_vocab.hpp"
#include "obfmal/mlp.hpp"
#include "obfmal/obfuscation.hpp"
#include "obfmal/rng.hpp"

namespace obfmal {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// Stream tags deriving per-purpose seeds from the master --seed.
enum CliSeedTag : std::uint64_t {
  kSynthSeed = 11,
  kSplitSeed = 12,
  kInitSeed = 13,
  kTrainSeed = 14,
  kAttackSeed = 15,
};

/// Everything a run can configure; flags override config-file values which
/// override these defaults.
struct RunConfig {
  std::uint64_t seed = 0;
  SyntheticConfig synth;
  VocabConfig vocab;
  TrainConfig train;
  int hardened_epochs = 100;
  std::vector<int> hidden = {128, 128, 128, 128};
  double test_fraction = 0.3;
  std::string attack_pool = "test";
  std::vector<std::string> feature_setups = {"intents", "permissions", "apis", "all"};
  double threshold = 0.5;

  RunConfig() { train.epochs = 50; }
};

IntRange range_from_json(const nlohmann::json& j, const char* key) {
  if (!j.is_array() || j.size() != 2)
    throw std::runtime_error(std::string("config: '") + key + "' must be [lo, hi]");
  return {j[0].get<int>(), j[1].get<int>()};
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& into) {
  if (auto it = j.find(key); it != j.end()) into = it->get<T>();
}

void apply_config_json(RunConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw std::runtime_error("config: top level must be an object");
  maybe(j, "seed", cfg.seed);
  maybe(j, "threshold", cfg.threshold);
  if (auto it = j.find("synthetic"); it != j.end()) {
    const auto& s = *it;
    maybe(s, "n_benign", cfg.synth.n_benign);
    maybe(s, "n_malicious", cfg.synth.n_malicious);
    maybe(s, "n_benign_features", cfg.synth.n_benign_features);
    maybe(s, "n_malware_features", cfg.synth.n_malware_features);
    if (s.contains("benign_draw")) cfg.synth.benign_draw = range_from_json(s["benign_draw"], "benign_draw");
    if (s.contains("mal_indicator"))
      cfg.synth.mal_indicator = range_from_json(s["mal_indicator"], "mal_indicator");
    if (s.contains("mal_benign_draw"))
      cfg.synth.mal_benign_draw = range_from_json(s["mal_benign_draw"], "mal_benign_draw");
  }
  if (auto it = j.find("vocab"); it != j.end()) {
    const auto& v = *it;
    maybe(v, "k_api", cfg.vocab.k_api);
    maybe(v, "min_segments", cfg.vocab.min_segments);
    maybe(v, "use_intents", cfg.vocab.use_intents);
    maybe(v, "use_permissions", cfg.vocab.use_permissions);
    maybe(v, "use_apis", cfg.vocab.use_apis);
  }
  if (auto it = j.find("train"); it != j.end()) {
    const auto& t = *it;
    maybe(t, "lr", cfg.train.learning_rate);
    maybe(t, "momentum", cfg.train.momentum);
    maybe(t, "decay", cfg.train.decay);
    maybe(t, "batch_size", cfg.train.batch_size);
    maybe(t, "epochs", cfg.train.epochs);
    maybe(t, "hidden", cfg.hidden);
  }
  if (auto it = j.find("hardened"); it != j.end()) maybe(*it, "epochs", cfg.hardened_epochs);
  if (auto it = j.find("split"); it != j.end()) maybe(*it, "test_fraction", cfg.test_fraction);
  if (auto it = j.find("attack"); it != j.end()) maybe(*it, "pool", cfg.attack_pool);
  if (auto it = j.find("matrix"); it != j.end()) maybe(*it, "feature_configs", cfg.feature_setups);
}

ordered_json config_to_json(const RunConfig& cfg, const std::string& command) {
  return ordered_json{
      {"command", command},
      {"seed", cfg.seed},
      {"synthetic",
       {{"n_benign", cfg.synth.n_benign},
        {"n_malicious", cfg.synth.n_malicious},
        {"n_benign_features", cfg.synth.n_benign_features},
        {"n_malware_features", cfg.synth.n_malware_features},
        {"benign_draw", {cfg.synth.benign_draw.lo, cfg.synth.benign_draw.hi}},
        {"mal_indicator", {cfg.synth.mal_indicator.lo, cfg.synth.mal_indicator.hi}},
        {"mal_benign_draw", {cfg.synth.mal_benign_draw.lo, cfg.synth.mal_benign_draw.hi}}}},
      {"vocab",
       {{"k_api", cfg.vocab.k_api},
        {"min_segments", cfg.vocab.min_segments},
        {"use_intents", cfg.vocab.use_intents},
        {"use_permissions", cfg.vocab.use_permissions},
        {"use_apis", cfg.vocab.use_apis}}},
      {"train",
       {{"lr", cfg.train.learning_rate},
        {"momentum", cfg.train.momentum},
        {"decay", cfg.train.decay},
        {"batch_size", cfg.train.batch_size},
        {"epochs", cfg.train.epochs},
        {"hidden", cfg.hidden}}},
      {"hardened", {{"epochs", cfg.hardened_epochs}}},
      {"split", {{"test_fraction", cfg.test_fraction}}},
      {"attack", {{"pool", cfg.attack_pool}}},
      {"matrix", {{"feature_configs", cfg.feature_setups}}},
      {"threshold", cfg.threshold},
  };
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Every artifact-producing run records its resolved configuration.
void write_resolved_config(const fs::path& out_dir, const RunConfig& cfg,
                           const std::string& command) {
  write_text(out_dir / "resolved_config.json", config_to_json(cfg, command).dump(2) + "\n");
}

std::optional<std::string> find_config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

PoolSource pool_source_from_name(const std::string& name) {
  if (name == "test") return PoolSource::test_pool;
  if (name == "train") return PoolSource::train_pool;
  throw std::invalid_argument("unknown pool '" + name + "' (expected test|train)");
}

std::string metrics_line(const Metrics& m) {
  char buffer[128];
  std::snprintf(buffer, sizeof(buffer), "accuracy=%.4f fnr=%s fpr=%s", m.accuracy,
                m.fnr ? std::to_string(*m.fnr).c_str() : "n/a",
                m.fpr ? std::to_string(*m.fpr).c_str() : "n/a");
  return buffer;
}

struct CliPaths {
  std::string data;
  std::string val;
  std::string vocab;
  std::string model;
  std::string pool_data;
};

int do_gen_synthetic(RunConfig cfg, const fs::path& out_dir) {
  cfg.synth.seed = derive_seed(cfg.seed, kSynthSeed);
  const auto corpus = generate_synthetic(cfg.synth);
  fs::create_directories(out_dir);
  save_samples(out_dir / "samples.jsonl", corpus.samples);
  write_text(out_dir / "pools.json",
             ordered_json{{"benign", corpus.pools.benign}, {"malware", corpus.pools.malware}}
                     .dump() +
                 "\n");
  write_resolved_config(out_dir, cfg, "gen-synthetic");
  std::cout << "wrote " << corpus.samples.size() << " samples to "
            << (out_dir / "samples.jsonl").string() << "\n";
  return 0;
}

int do_build_vocab(const RunConfig& cfg, const CliPaths& paths, const fs::path& out_dir) {
  const auto samples = load_samples(paths.data);
  const auto vocab = build_vocabulary(samples, cfg.vocab);
  fs::create_directories(out_dir);
  vocab.save(out_dir / "vocab.json");
  write_resolved_config(out_dir, cfg, "build-vocab");
  std::cout << "vocabulary dimension " << vocab.dimension() << " -> "
            << (out_dir / "vocab.json").string() << "\n";
  return 0;
}

int do_vectorize(const RunConfig& cfg, const CliPaths& paths, const fs::path& out_dir,
                 bool split) {
  const auto samples = load_samples(paths.data);
  const auto vocab = FeatureVocabulary::load(paths.vocab);
  std::int64_t dropped = 0;
  const auto data = vectorize_corpus(samples, vocab, vocab.min_segments(), &dropped);
  fs::create_directories(out_dir);
  if (split) {
    const auto [train_ds, test_ds] =
        shuffle_split(data, cfg.test_fraction, derive_seed(cfg.seed, kSplitSeed));
    save_vectorized(out_dir / "train.jsonl", train_ds);
    save_vectorized(out_dir / "test.jsonl", test_ds);
    std::cout << "vectorized " << data.size() << " samples (dropped " << dropped
              << " empty), split " << train_ds.size() << "/" << test_ds.size() << "\n";
  } else {
    save_vectorized(out_dir / "dataset.jsonl", data);
    std::cout << "vectorized " << data.size() << " samples (dropped " << dropped
              << " empty)\n";
  }
  write_resolved_config(out_dir, cfg, "vectorize");
  return 0;
}

int do_train(const RunConfig& cfg, const CliPaths& paths, const fs::path& out_dir,
             bool hardened) {
  const auto train_ds = load_vectorized(paths.data);
  const Dataset validation = paths.val.empty() ? train_ds : load_vectorized(paths.val);

  TrainConfig train_config = cfg.train;
  if (hardened) train_config.epochs = cfg.hardened_epochs;
  train_config.seed = derive_seed(cfg.seed, kTrainSeed);

  auto model =
      init_model<float>(train_ds.dimension, cfg.hidden, derive_seed(cfg.seed, kInitSeed));
  std::vector<EpochStats> history;
  if (hardened) {
    const auto pool = benign_pool_from(train_ds, PoolSource::train_pool);
    HardenedBatchSource stream(train_ds, pool, train_config.batch_size, train_config.seed);
    history = train(model, train_config, validation, stream);
  } else {
    history = train(model, train_ds, train_config, validation);
  }

  fs::create_directories(out_dir);
  save_checkpoint(out_dir / "model.ckpt", model);
  write_text(out_dir / "curves.csv",
             curve_csv({hardened ? "hardened" : "baseline", history}));
  write_resolved_config(out_dir, cfg, hardened ? "harden" : "train");
  for (const auto& stats : history) {
    std::printf("epoch %d val_accuracy=%.4f val_loss=%.6f\n", stats.epoch, stats.val_accuracy,
                stats.val_loss);
  }
  std::cout << "saved " << (out_dir / "model.ckpt").string() << "\n";
  return 0;
}

int do_attack(const RunConfig& cfg, const CliPaths& paths, const fs::path& out_dir) {
  const auto test_ds = load_vectorized(paths.data);
  const auto source = pool_source_from_name(cfg.attack_pool);
  BenignPool pool;
  if (source == PoolSource::test_pool) {
    pool = benign_pool_from(test_ds, PoolSource::test_pool);
  } else {
    if (paths.pool_data.empty())
      throw std::invalid_argument("attack: --pool train requires --pool-data");
    pool = benign_pool_from(load_vectorized(paths.pool_data), PoolSource::train_pool);
  }
  const auto obfuscated =
      build_obfuscated_test_set(test_ds, pool, derive_seed(cfg.seed, kAttackSeed));
  fs::create_directories(out_dir);
  save_vectorized(out_dir / "obfuscated.jsonl", obfuscated);
  write_resolved_config(out_dir, cfg, "attack");
  std::cout << "obfuscated " << obfuscated.size() << " samples -> "
            << (out_dir / "obfuscated.jsonl").string() << "\n";
  return 0;
}

int do_evaluate(const RunConfig& cfg, const CliPaths& paths, const fs::path& out_dir) {
  const auto model = load_checkpoint<float>(paths.model);
  const auto data = load_vectorized(paths.data);
  const auto metrics = compute_metrics(predict(model, data, cfg.threshold), data.labels);
  fs::create_directories(out_dir);
  char buffer[128];
  std::string csv = "accuracy,fnr,fpr\n";
  std::snprintf(buffer, sizeof(buffer), "%.4f,", metrics.accuracy);
  csv += buffer;
  if (metrics.fnr) {
    std::snprintf(buffer, sizeof(buffer), "%.4f", *metrics.fnr);
    csv += buffer;
  }
  csv += ',';
  if (metrics.fpr) {
    std::snprintf(buffer, sizeof(buffer), "%.4f", *metrics.fpr);
    csv += buffer;
  }
  csv += '\n';
  write_text(out_dir / "metrics.csv", csv);
  write_resolved_config(out_dir, cfg, "evaluate");
  std::cout << metrics_line(metrics) << "\n";
  return 0;
}

int do_matrix(RunConfig cfg, const CliPaths& paths, const fs::path& out_dir) {
  std::vector<RawSample> corpus;
  if (paths.data.empty()) {
    cfg.synth.seed = derive_seed(cfg.seed, kSynthSeed);
    corpus = generate_synthetic(cfg.synth).samples;
  } else {
    corpus = load_samples(paths.data);
  }
  const auto [train_raw, test_raw] =
      split_corpus(corpus, cfg.test_fraction, derive_seed(cfg.seed, kSplitSeed));

  MatrixOptions options;
  options.vocab = cfg.vocab;
  options.baseline_train = cfg.train;
  options.hardened_train = cfg.train;
  options.hardened_train.epochs = cfg.hardened_epochs;
  options.hidden = cfg.hidden;
  options.attack_pool = pool_source_from_name(cfg.attack_pool);
  options.feature_setups.clear();
  for (const auto& name : cfg.feature_setups)
    options.feature_setups.push_back(feature_setup_from_name(name));
  options.master_seed = cfg.seed;

  const auto report = run_matrix(train_raw, test_raw, options);
  emit_report(report, out_dir);
  write_resolved_config(out_dir, cfg, "matrix");
  for (const auto& cell : report.cells) {
    std::cout << cell.feature_setup << "/" << cell.scenario << ": "
              << metrics_line(cell.metrics) << "\n";
  }
  std::cout << "report written to " << out_dir.string() << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

int run_cli(const std::vector<std::string>& args) {
  RunConfig cfg;
  if (const auto config_path = find_config_path(args)) {
    try {
      std::ifstream in(*config_path);
      if (!in) throw std::runtime_error("cannot open " + *config_path);
      nlohmann::json doc;
      in >> doc;
      apply_config_json(cfg, doc);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }

  CLI::App app{"static-feature malware classifier: synthetic data, training, "
               "obfuscation attack and hardening"};
  app.require_subcommand(1);

  std::string out_dir = "out";
  std::string config_flag;
  CliPaths paths;
  bool split = false;
  std::vector<int> hidden_opt;
  std::vector<int> benign_draw_opt, mal_indicator_opt, mal_benign_draw_opt;
  std::vector<std::string> feature_setups_opt;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "master seed");
    sub->add_option("--config", config_flag, "JSON config file (explicit flags win)");
    sub->add_option("--out", out_dir, "output directory");
  };
  const auto add_synth = [&](CLI::App* sub) {
    sub->add_option("--n-benign", cfg.synth.n_benign, "benign sample count");
    sub->add_option("--n-malicious", cfg.synth.n_malicious, "malicious sample count");
    sub->add_option("--n-benign-features", cfg.synth.n_benign_features, "benign pool size");
    sub->add_option("--n-malware-features", cfg.synth.n_malware_features, "indicator pool size");
    sub->add_option("--benign-draw", benign_draw_opt, "lo,hi benign features per benign sample")
        ->delimiter(',');
    sub->add_option("--mal-indicator", mal_indicator_opt, "lo,hi indicators per malicious sample")
        ->delimiter(',');
    sub->add_option("--mal-benign-draw", mal_benign_draw_opt,
                    "lo,hi benign features per malicious sample")
        ->delimiter(',');
  };
  const auto add_vocab = [&](CLI::App* sub) {
    sub->add_option("--k-api", cfg.vocab.k_api, "api block size cap");
    sub->add_option("--min-segments", cfg.vocab.min_segments, "shortest api prefix kept");
    sub->add_flag("--use-intents,!--no-intents", cfg.vocab.use_intents, "intent block");
    sub->add_flag("--use-permissions,!--no-permissions", cfg.vocab.use_permissions,
                  "permission block");
    sub->add_flag("--use-apis,!--no-apis", cfg.vocab.use_apis, "api block");
  };
  const auto add_train = [&](CLI::App* sub, int& epochs_target) {
    sub->add_option("--epochs", epochs_target, "training epochs");
    sub->add_option("--batch-size", cfg.train.batch_size, "batch size");
    sub->add_option("--lr", cfg.train.learning_rate, "learning rate");
    sub->add_option("--momentum", cfg.train.momentum, "Nesterov momentum");
    sub->add_option("--decay", cfg.train.decay, "per-update rate decay");
    sub->add_option("--hidden", hidden_opt, "hidden layer widths, e.g. 128,128,128,128")
        ->delimiter(',');
  };

  auto* gen = app.add_subcommand("gen-synthetic", "generate a synthetic labeled corpus");
  add_common(gen);
  add_synth(gen);

  auto* vocab_cmd = app.add_subcommand("build-vocab", "build a feature vocabulary");
  add_common(vocab_cmd);
  add_vocab(vocab_cmd);
  vocab_cmd->add_option("--data", paths.data, "samples.jsonl")->required();

  auto* vec = app.add_subcommand("vectorize", "vectorize samples against a vocabulary");
  add_common(vec);
  vec->add_option("--data", paths.data, "samples.jsonl")->required();
  vec->add_option("--vocab", paths.vocab, "vocab.json")->required();
  vec->add_flag("--split", split, "emit a train/test split instead of one file");
  vec->add_option("--test-fraction", cfg.test_fraction, "test fraction for --split");

  auto* train_cmd = app.add_subcommand("train", "train a clean baseline model");
  add_common(train_cmd);
  add_train(train_cmd, cfg.train.epochs);
  train_cmd->add_option("--data", paths.data, "vectorized training set")->required();
  train_cmd->add_option("--val", paths.val, "vectorized validation set (default: training set)");

  auto* harden_cmd =
      app.add_subcommand("harden", "train with per-epoch obfuscation augmentation");
  add_common(harden_cmd);
  add_train(harden_cmd, cfg.hardened_epochs);
  harden_cmd->add_option("--data", paths.data, "vectorized training set")->required();
  harden_cmd->add_option("--val", paths.val, "vectorized validation set (default: training set)");

  auto* attack_cmd = app.add_subcommand("attack", "obfuscate the malicious rows of a test set");
  add_common(attack_cmd);
  attack_cmd->add_option("--data", paths.data, "vectorized test set")->required();
  attack_cmd->add_option("--pool", cfg.attack_pool, "donor source: test|train");
  attack_cmd->add_option("--pool-data", paths.pool_data,
                         "vectorized dataset supplying donors for --pool train");

  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset");
  add_common(eval_cmd);
  eval_cmd->add_option("--model", paths.model, "model checkpoint")->required();
  eval_cmd->add_option("--data", paths.data, "vectorized dataset")->required();
  eval_cmd->add_option("--threshold", cfg.threshold, "malicious decision threshold");

  auto* matrix_cmd = app.add_subcommand(
      "matrix", "full experiment: baseline + hardened models across feature configs");
  add_common(matrix_cmd);
  add_synth(matrix_cmd);
  matrix_cmd->add_option("--data", paths.data,
                         "samples.jsonl (default: generate synthetic corpus)");
  matrix_cmd->add_option("--baseline-epochs", cfg.train.epochs, "baseline training epochs");
  matrix_cmd->add_option("--hardened-epochs", cfg.hardened_epochs, "hardened training epochs");
  matrix_cmd->add_option("--batch-size", cfg.train.batch_size, "batch size");
  matrix_cmd->add_option("--lr", cfg.train.learning_rate, "learning rate");
  matrix_cmd->add_option("--hidden", hidden_opt, "hidden layer widths")->delimiter(',');
  matrix_cmd->add_option("--test-fraction", cfg.test_fraction, "test split fraction");
  matrix_cmd->add_option("--pool", cfg.attack_pool, "attack donor source: test|train");
  matrix_cmd
      ->add_option("--feature-configs", feature_setups_opt,
                   "subset of intents,permissions,apis,all")
      ->delimiter(',');
  matrix_cmd->add_option("--k-api", cfg.vocab.k_api, "api block size cap");
  matrix_cmd->add_option("--min-segments", cfg.vocab.min_segments, "shortest api prefix kept");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const auto apply_range = [](const std::vector<int>& opt, IntRange& into, const char* name) {
    if (opt.empty()) return;
    if (opt.size() != 2)
      throw std::invalid_argument(std::string(name) + " expects exactly lo,hi");
    into = {opt[0], opt[1]};
  };

  try {
    apply_range(benign_draw_opt, cfg.synth.benign_draw, "--benign-draw");
    apply_range(mal_indicator_opt, cfg.synth.mal_indicator, "--mal-indicator");
    apply_range(mal_benign_draw_opt, cfg.synth.mal_benign_draw, "--mal-benign-draw");
    if (!hidden_opt.empty()) cfg.hidden = hidden_opt;
    if (!feature_setups_opt.empty()) cfg.feature_setups = feature_setups_opt;

    const fs::path out(out_dir);
    if (app.got_subcommand(gen)) return do_gen_synthetic(cfg, out);
    if (app.got_subcommand(vocab_cmd)) return do_build_vocab(cfg, paths, out);
    if (app.got_subcommand(vec)) return do_vectorize(cfg, paths, out, split);
    if (app.got_subcommand(train_cmd)) return do_train(cfg, paths, out, false);
    if (app.got_subcommand(harden_cmd)) return do_train(cfg, paths, out, true);
    if (app.got_subcommand(attack_cmd)) return do_attack(cfg, paths, out);
    if (app.got_subcommand(eval_cmd)) return do_evaluate(cfg, paths, out);
    if (app.got_subcommand(matrix_cmd)) return do_matrix(cfg, paths, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace obfmal
