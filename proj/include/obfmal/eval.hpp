#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "obfmal/dataset.hpp"
#include "obfmal/feature_vocab.hpp"
#include "obfmal/mlp.hpp"
#include "obfmal/obfuscation.hpp"

namespace obfmal {

/// Positive class = malicious.
struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
};

/// Percentages. A rate whose class is absent from the truth is reported as
/// absent, not zero.
struct Metrics {
  double accuracy = 0;
  std::optional<double> fnr;
  std::optional<double> fpr;
};

ConfusionCounts count_confusion(std::span<const Label> predictions, std::span<const Label> truth);
Metrics metrics_from_counts(const ConfusionCounts& counts);
Metrics compute_metrics(std::span<const Label> predictions, std::span<const Label> truth);

/// Which feature blocks a matrix cell trains on.
struct FeatureSetup {
  std::string name;
  bool use_intents = false;
  bool use_permissions = false;
  bool use_apis = false;
};

/// intents, permissions, apis, all.
std::vector<FeatureSetup> default_feature_setups();
FeatureSetup feature_setup_from_name(const std::string& name);

struct MatrixOptions {
  VocabConfig vocab;                       // use_* fields overridden per feature setup
  TrainConfig baseline_train;
  TrainConfig hardened_train;
  std::vector<int> hidden = {128, 128, 128, 128};
  PoolSource attack_pool = PoolSource::test_pool;
  std::vector<FeatureSetup> feature_setups = default_feature_setups();
  std::uint64_t master_seed = 0;
};

struct ExperimentReport {
  struct Cell {
    std::string feature_setup;
    std::string scenario;  // baseline_clean | baseline_obf | hardened_obf | hardened_clean
    Metrics metrics;
  };
  struct Curve {
    std::string model_name;  // <setup>_baseline | <setup>_hardened
    std::vector<EpochStats> history;
  };
  std::vector<Cell> cells;
  std::vector<Curve> curves;
};

/// Trains a clean and a hardened model per feature setup and evaluates the
/// four scenarios. Fully deterministic under the master seed.
ExperimentReport run_matrix(std::span<const RawSample> train_raw,
                            std::span<const RawSample> test_raw, const MatrixOptions& options);

/// Writes metrics.csv and curves_<model>.csv into out_dir.
void emit_report(const ExperimentReport& report, const std::filesystem::path& out_dir);

std::string metrics_csv(const ExperimentReport& report);
std::string curve_csv(const ExperimentReport::Curve& curve);

}  // namespace obfmal
