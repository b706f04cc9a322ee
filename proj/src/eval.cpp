#include "obfmal/eval.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "obfmal/rng.hpp"

namespace obfmal {

namespace {

// Stream tags for per-cell seed derivation.
enum SeedTag : std::uint64_t {
  kInitBaseline = 1,
  kTrainBaseline = 2,
  kInitHardened = 3,
  kStreamHardened = 4,
  kAttack = 5,
};

std::uint64_t cell_seed(std::uint64_t master, std::size_t setup_index, SeedTag tag) {
  return derive_seed(derive_seed(master, setup_index), tag);
}

std::string format_percent(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.4f", value);
  return buffer;
}

std::string format_rate(const std::optional<double>& value) {
  return value ? format_percent(*value) : std::string();
}

}  // namespace

ConfusionCounts count_confusion(std::span<const Label> predictions,
                                std::span<const Label> truth) {
  if (predictions.size() != truth.size())
    throw std::invalid_argument("compute_metrics: length mismatch");
  if (predictions.empty()) throw std::invalid_argument("compute_metrics: empty input");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool positive = truth[i] == Label::malicious;
    const bool predicted = predictions[i] == Label::malicious;
    if (positive) {
      predicted ? ++c.tp : ++c.fn;
    } else {
      predicted ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

Metrics metrics_from_counts(const ConfusionCounts& c) {
  if (c.total() == 0) throw std::invalid_argument("compute_metrics: empty input");
  Metrics m;
  m.accuracy = 100.0 * static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  if (c.fn + c.tp > 0)
    m.fnr = 100.0 * static_cast<double>(c.fn) / static_cast<double>(c.fn + c.tp);
  if (c.fp + c.tn > 0)
    m.fpr = 100.0 * static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
  return m;
}

Metrics compute_metrics(std::span<const Label> predictions, std::span<const Label> truth) {
  return metrics_from_counts(count_confusion(predictions, truth));
}

std::vector<FeatureSetup> default_feature_setups() {
  return {{"intents", true, false, false},
          {"permissions", false, true, false},
          {"apis", false, false, true},
          {"all", true, true, true}};
}

FeatureSetup feature_setup_from_name(const std::string& name) {
  for (auto& setup : default_feature_setups()) {
    if (setup.name == name) return setup;
  }
  throw std::invalid_argument("unknown feature setup '" + name +
                              "' (expected intents|permissions|apis|all)");
}

ExperimentReport run_matrix(std::span<const RawSample> train_raw,
                            std::span<const RawSample> test_raw, const MatrixOptions& options) {
  if (train_raw.empty() || test_raw.empty())
    throw std::invalid_argument("run_matrix: empty train or test corpus");
  if (options.feature_setups.empty())
    throw std::invalid_argument("run_matrix: no feature setups");
  options.baseline_train.validate();
  options.hardened_train.validate();

  // Feature selection happens over the full corpus, so both splits share one
  // vocabulary per setup.
  std::vector<RawSample> all;
  all.reserve(train_raw.size() + test_raw.size());
  all.insert(all.end(), train_raw.begin(), train_raw.end());
  all.insert(all.end(), test_raw.begin(), test_raw.end());

  ExperimentReport report;
  for (std::size_t si = 0; si < options.feature_setups.size(); ++si) {
    const auto& setup = options.feature_setups[si];
    VocabConfig vocab_config = options.vocab;
    vocab_config.use_intents = setup.use_intents;
    vocab_config.use_permissions = setup.use_permissions;
    vocab_config.use_apis = setup.use_apis;

    const auto vocab = build_vocabulary(all, vocab_config);
    if (vocab.dimension() == 0)
      throw std::runtime_error("run_matrix: empty vocabulary for setup '" + setup.name + "'");
    const auto train_ds = vectorize_corpus(train_raw, vocab, vocab_config.min_segments);
    const auto test_ds = vectorize_corpus(test_raw, vocab, vocab_config.min_segments);
    if (train_ds.size() == 0 || test_ds.size() == 0)
      throw std::runtime_error("run_matrix: no usable samples for setup '" + setup.name + "'");

    // Baseline: clean training.
    TrainConfig baseline_config = options.baseline_train;
    baseline_config.seed = cell_seed(options.master_seed, si, kTrainBaseline);
    auto baseline = init_model<float>(vocab.dimension(), options.hidden,
                                      cell_seed(options.master_seed, si, kInitBaseline));
    auto baseline_history = train(baseline, train_ds, baseline_config, test_ds);

    // Hardened: per-epoch obfuscation of malicious training samples with
    // donors from training benign vectors only.
    TrainConfig hardened_config = options.hardened_train;
    hardened_config.seed = cell_seed(options.master_seed, si, kStreamHardened);
    auto hardened = init_model<float>(vocab.dimension(), options.hidden,
                                      cell_seed(options.master_seed, si, kInitHardened));
    const auto hardening_pool = benign_pool_from(train_ds, PoolSource::train_pool);
    HardenedBatchSource stream(train_ds, hardening_pool, hardened_config.batch_size,
                               hardened_config.seed);
    auto hardened_history = train(hardened, hardened_config, test_ds, stream);

    const auto attack_pool =
        options.attack_pool == PoolSource::test_pool
            ? benign_pool_from(test_ds, PoolSource::test_pool)
            : benign_pool_from(train_ds, PoolSource::train_pool);
    const auto obf_test = build_obfuscated_test_set(
        test_ds, attack_pool, cell_seed(options.master_seed, si, kAttack));

    const auto evaluate = [](const auto& model, const Dataset& data) {
      return compute_metrics(predict(model, data), data.labels);
    };
    report.cells.push_back({setup.name, "baseline_clean", evaluate(baseline, test_ds)});
    report.cells.push_back({setup.name, "baseline_obf", evaluate(baseline, obf_test)});
    report.cells.push_back({setup.name, "hardened_obf", evaluate(hardened, obf_test)});
    report.cells.push_back({setup.name, "hardened_clean", evaluate(hardened, test_ds)});
    report.curves.push_back({setup.name + "_baseline", std::move(baseline_history)});
    report.curves.push_back({setup.name + "_hardened", std::move(hardened_history)});
  }
  return report;
}

std::string metrics_csv(const ExperimentReport& report) {
  std::string out = "feature_config,scenario,accuracy,fnr,fpr\n";
  for (const auto& cell : report.cells) {
    out += cell.feature_setup;
    out += ',';
    out += cell.scenario;
    out += ',';
    out += format_percent(cell.metrics.accuracy);
    out += ',';
    out += format_rate(cell.metrics.fnr);
    out += ',';
    out += format_rate(cell.metrics.fpr);
    out += '\n';
  }
  return out;
}

std::string curve_csv(const ExperimentReport::Curve& curve) {
  std::string out = "epoch,val_accuracy,val_loss\n";
  for (const auto& stats : curve.history) {
    char buffer[96];
    std::snprintf(buffer, sizeof(buffer), "%d,%.4f,%.6f\n", stats.epoch, stats.val_accuracy,
                  stats.val_loss);
    out += buffer;
  }
  return out;
}

void emit_report(const ExperimentReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto write = [](const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path.string());
  };
  write(out_dir / "metrics.csv", metrics_csv(report));
  for (const auto& curve : report.curves) {
    write(out_dir / ("curves_" + curve.model_name + ".csv"), curve_csv(curve));
  }
}

}  // namespace obfmal
