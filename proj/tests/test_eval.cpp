#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "obfmal/eval.hpp"
#include "obfmal/rng.hpp"
#include "test_support.hpp"

using namespace obfmal;
using obfmal::testing::TempDir;

namespace {

std::vector<Label> labels(std::initializer_list<int> values) {
  std::vector<Label> out;
  for (int v : values) out.push_back(v ? Label::malicious : Label::benign);
  return out;
}

MatrixOptions tiny_matrix_options() {
  MatrixOptions options;
  options.hidden = {8};
  options.baseline_train.epochs = 2;
  options.baseline_train.batch_size = 16;
  options.hardened_train = options.baseline_train;
  options.hardened_train.epochs = 3;
  options.feature_setups = {feature_setup_from_name("all")};
  options.master_seed = 5;
  return options;
}

SyntheticConfig tiny_synth() {
  SyntheticConfig config;
  config.n_benign = 40;
  config.n_malicious = 20;
  config.n_benign_features = 30;
  config.n_malware_features = 10;
  config.benign_draw = {6, 12};
  config.mal_indicator = {2, 4};
  config.mal_benign_draw = {1, 4};
  config.seed = 12;
  return config;
}

}  // namespace

TEST_CASE("compute_metrics definition arithmetic") {
  // tp=3 fn=1 tn=5 fp=1
  const auto truth = labels({1, 1, 1, 1, 0, 0, 0, 0, 0, 0});
  const auto predictions = labels({1, 1, 1, 0, 1, 0, 0, 0, 0, 0});
  const auto m = compute_metrics(predictions, truth);
  CHECK(m.accuracy == doctest::Approx(80.0).epsilon(1e-12));
  REQUIRE(m.fnr);
  CHECK(*m.fnr == doctest::Approx(25.0).epsilon(1e-12));
  REQUIRE(m.fpr);
  CHECK(*m.fpr == doctest::Approx(100.0 / 6.0).epsilon(1e-9));
}

TEST_CASE("compute_metrics on a perfect predictor") {
  const auto truth = labels({1, 0, 1, 0});
  const auto m = compute_metrics(truth, truth);
  CHECK(m.accuracy == 100.0);
  CHECK(*m.fnr == 0.0);
  CHECK(*m.fpr == 0.0);
}

TEST_CASE("undefined rates are reported as absent") {
  const auto all_benign_truth = labels({0, 0, 0});
  const auto m = compute_metrics(labels({0, 1, 0}), all_benign_truth);
  CHECK(!m.fnr);
  REQUIRE(m.fpr);

  const auto all_malicious_truth = labels({1, 1});
  const auto n = compute_metrics(labels({1, 0}), all_malicious_truth);
  CHECK(!n.fpr);
  REQUIRE(n.fnr);
}

TEST_CASE("compute_metrics error paths") {
  CHECK_THROWS_AS(compute_metrics(labels({1}), labels({1, 0})), std::invalid_argument);
  CHECK_THROWS_AS(compute_metrics(labels({}), labels({})), std::invalid_argument);
}

TEST_CASE("constant predictors hit the metric identities") {
  const auto truth = labels({1, 1, 0, 0, 0});
  const auto all_benign = compute_metrics(labels({0, 0, 0, 0, 0}), truth);
  CHECK(*all_benign.fnr == 100.0);
  CHECK(*all_benign.fpr == 0.0);

  const auto all_malicious = compute_metrics(labels({1, 1, 1, 1, 1}), truth);
  CHECK(*all_malicious.fnr == 0.0);
  CHECK(*all_malicious.fpr == 100.0);
}

TEST_CASE("accuracy decomposition holds on random confusion tables") {
  Rng rng(404);
  for (int trial = 0; trial < 1000; ++trial) {
    ConfusionCounts c;
    c.tp = static_cast<std::int64_t>(bounded(rng, 50));
    c.fp = static_cast<std::int64_t>(bounded(rng, 50));
    c.tn = static_cast<std::int64_t>(bounded(rng, 50));
    c.fn = static_cast<std::int64_t>(bounded(rng, 50));
    if (c.total() == 0) c.tp = 1;
    const auto m = metrics_from_counts(c);
    const double expected =
        100.0 * (1.0 - static_cast<double>(c.fn + c.fp) / static_cast<double>(c.total()));
    CHECK(std::abs(m.accuracy - expected) < 1e-9);
  }
}

TEST_CASE("metrics csv formatting") {
  ExperimentReport report;
  Metrics with_rates{80.0, 25.0, 100.0 / 6.0};
  Metrics no_fnr{50.0, std::nullopt, 10.0};
  report.cells.push_back({"all", "baseline_clean", with_rates});
  report.cells.push_back({"all", "baseline_obf", no_fnr});
  const auto csv = metrics_csv(report);
  CHECK(csv ==
        "feature_config,scenario,accuracy,fnr,fpr\n"
        "all,baseline_clean,80.0000,25.0000,16.6667\n"
        "all,baseline_obf,50.0000,,10.0000\n");
}

TEST_CASE("curve csv has one row per epoch") {
  ExperimentReport::Curve curve;
  curve.model_name = "all_baseline";
  curve.history = {{1, 90.0, 0.5}, {2, 95.5, 0.25}};
  const auto csv = curve_csv(curve);
  CHECK(csv ==
        "epoch,val_accuracy,val_loss\n"
        "1,90.0000,0.500000\n"
        "2,95.5000,0.250000\n");
}

TEST_CASE("run_matrix produces four cells per feature setup") {
  const auto corpus = generate_synthetic(tiny_synth());
  const auto [train_raw, test_raw] = split_corpus(corpus.samples, 0.3, 2);
  const auto report = run_matrix(train_raw, test_raw, tiny_matrix_options());

  REQUIRE(report.cells.size() == 4);
  CHECK(report.cells[0].scenario == "baseline_clean");
  CHECK(report.cells[1].scenario == "baseline_obf");
  CHECK(report.cells[2].scenario == "hardened_obf");
  CHECK(report.cells[3].scenario == "hardened_clean");
  REQUIRE(report.curves.size() == 2);
  CHECK(report.curves[0].model_name == "all_baseline");
  CHECK(report.curves[0].history.size() == 2);
  CHECK(report.curves[1].history.size() == 3);
}

TEST_CASE("run_matrix is deterministic under the master seed") {
  const auto corpus = generate_synthetic(tiny_synth());
  const auto [train_raw, test_raw] = split_corpus(corpus.samples, 0.3, 2);
  const auto a = run_matrix(train_raw, test_raw, tiny_matrix_options());
  const auto b = run_matrix(train_raw, test_raw, tiny_matrix_options());
  CHECK(metrics_csv(a) == metrics_csv(b));
  for (std::size_t i = 0; i < a.curves.size(); ++i) {
    CHECK(curve_csv(a.curves[i]) == curve_csv(b.curves[i]));
  }
}

TEST_CASE("emit_report writes the documented files") {
  const auto corpus = generate_synthetic(tiny_synth());
  const auto [train_raw, test_raw] = split_corpus(corpus.samples, 0.3, 2);
  const auto report = run_matrix(train_raw, test_raw, tiny_matrix_options());

  TempDir dir("report");
  emit_report(report, dir.path());
  const auto metrics = obfmal::testing::read_file(dir.file("metrics.csv"));
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 1 + 4);  // header + cells
  const auto curve = obfmal::testing::read_file(dir.file("curves_all_baseline.csv"));
  CHECK(std::count(curve.begin(), curve.end(), '\n') == 1 + 2);  // header + epochs
  CHECK(std::filesystem::exists(dir.file("curves_all_hardened.csv")));
}
