#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include <json.hpp>

#include "obfmal/cli.hpp"
#include "test_support.hpp"

using obfmal::run_cli;
using obfmal::testing::TempDir;
using obfmal::testing::read_file;
using obfmal::testing::write_file;

namespace {

std::vector<std::string> tiny_gen_args(const std::filesystem::path& out_dir) {
  return {"gen-synthetic", "--seed", "3", "--n-benign", "40", "--n-malicious", "20",
          "--n-benign-features", "30", "--n-malware-features", "10", "--benign-draw", "6,12",
          "--mal-indicator", "2,4", "--mal-benign-draw", "1,4", "--out", out_dir.string()};
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run_cli({"no-such-command"}) == 2);
  CHECK(run_cli({"train", "--no-such-flag"}) == 2);
  CHECK(run_cli({"evaluate"}) == 2);  // missing required options
  CHECK(run_cli({}) == 2);
}

TEST_CASE("operation failures exit with 1") {
  TempDir dir("cli_fail");
  CHECK(run_cli({"build-vocab", "--data", (dir.path() / "missing.jsonl").string(), "--out",
                 dir.path().string()}) == 1);
}

TEST_CASE("gen-synthetic writes corpus, pools and resolved config") {
  TempDir dir("cli_gen");
  REQUIRE(run_cli(tiny_gen_args(dir.path())) == 0);
  CHECK(std::filesystem::exists(dir.file("samples.jsonl")));
  CHECK(std::filesystem::exists(dir.file("pools.json")));
  const auto resolved = nlohmann::json::parse(read_file(dir.file("resolved_config.json")));
  CHECK(resolved["command"] == "gen-synthetic");
  CHECK(resolved["seed"] == 3);
  CHECK(resolved["synthetic"]["n_benign"] == 40);
}

TEST_CASE("config file values merge under explicit flags") {
  TempDir dir("cli_config");
  write_file(dir.file("config.json"),
             R"({"seed": 9, "synthetic": {"n_benign": 5, "n_malicious": 99,
                 "n_benign_features": 30, "n_malware_features": 10,
                 "benign_draw": [6,12], "mal_indicator": [2,4], "mal_benign_draw": [1,4]}})");
  REQUIRE(run_cli({"gen-synthetic", "--config", dir.file("config.json").string(),
                   "--n-malicious", "3", "--out", dir.path().string()}) == 0);
  const auto resolved = nlohmann::json::parse(read_file(dir.file("resolved_config.json")));
  CHECK(resolved["seed"] == 9);                           // from config file
  CHECK(resolved["synthetic"]["n_benign"] == 5);          // from config file
  CHECK(resolved["synthetic"]["n_malicious"] == 3);       // flag wins
  // 5 benign + 3 malicious lines
  const auto samples = read_file(dir.file("samples.jsonl"));
  CHECK(std::count(samples.begin(), samples.end(), '\n') == 8);
}

TEST_CASE("full pipeline over the cli surface") {
  TempDir dir("cli_pipe");
  REQUIRE(run_cli(tiny_gen_args(dir.path())) == 0);
  const auto samples_before = read_file(dir.file("samples.jsonl"));
  REQUIRE(run_cli({"build-vocab", "--data", dir.file("samples.jsonl").string(), "--out",
                   dir.path().string()}) == 0);
  REQUIRE(run_cli({"vectorize", "--data", dir.file("samples.jsonl").string(), "--vocab",
                   dir.file("vocab.json").string(), "--split", "--test-fraction", "0.3",
                   "--seed", "3", "--out", dir.path().string()}) == 0);
  CHECK(read_file(dir.file("samples.jsonl")) == samples_before);  // inputs never mutated
  CHECK(std::filesystem::exists(dir.file("train.jsonl")));
  CHECK(std::filesystem::exists(dir.file("test.jsonl")));

  const auto model_dir = dir.path() / "model";
  REQUIRE(run_cli({"train", "--data", dir.file("train.jsonl").string(), "--val",
                   dir.file("test.jsonl").string(), "--epochs", "2", "--batch-size", "16",
                   "--hidden", "8", "--seed", "3", "--out", model_dir.string()}) == 0);
  CHECK(std::filesystem::exists(model_dir / "model.ckpt"));
  CHECK(std::filesystem::exists(model_dir / "curves.csv"));

  const auto hard_dir = dir.path() / "hardened";
  REQUIRE(run_cli({"harden", "--data", dir.file("train.jsonl").string(), "--val",
                   dir.file("test.jsonl").string(), "--epochs", "2", "--batch-size", "16",
                   "--hidden", "8", "--seed", "3", "--out", hard_dir.string()}) == 0);
  CHECK(std::filesystem::exists(hard_dir / "model.ckpt"));

  const auto attack_dir = dir.path() / "attacked";
  REQUIRE(run_cli({"attack", "--data", dir.file("test.jsonl").string(), "--pool", "test",
                   "--seed", "3", "--out", attack_dir.string()}) == 0);
  CHECK(std::filesystem::exists(attack_dir / "obfuscated.jsonl"));

  const auto eval_dir = dir.path() / "eval";
  REQUIRE(run_cli({"evaluate", "--model", (model_dir / "model.ckpt").string(), "--data",
                   (attack_dir / "obfuscated.jsonl").string(), "--out", eval_dir.string()}) == 0);
  const auto metrics = read_file(eval_dir / "metrics.csv");
  CHECK(metrics.rfind("accuracy,fnr,fpr\n", 0) == 0);
}

TEST_CASE("attack with a train pool requires pool data") {
  TempDir dir("cli_attack");
  REQUIRE(run_cli(tiny_gen_args(dir.path())) == 0);
  REQUIRE(run_cli({"build-vocab", "--data", dir.file("samples.jsonl").string(), "--out",
                   dir.path().string()}) == 0);
  REQUIRE(run_cli({"vectorize", "--data", dir.file("samples.jsonl").string(), "--vocab",
                   dir.file("vocab.json").string(), "--split", "--seed", "3", "--out",
                   dir.path().string()}) == 0);
  CHECK(run_cli({"attack", "--data", dir.file("test.jsonl").string(), "--pool", "train",
                 "--out", dir.path().string()}) == 1);
  CHECK(run_cli({"attack", "--data", dir.file("test.jsonl").string(), "--pool", "train",
                 "--pool-data", dir.file("train.jsonl").string(), "--out",
                 (dir.path() / "atk").string()}) == 0);
}

TEST_CASE("matrix subcommand is deterministic at small scale") {
  TempDir dir("cli_matrix");
  const std::vector<std::string> base = {
      "matrix", "--seed", "5", "--n-benign", "40", "--n-malicious", "20",
      "--n-benign-features", "30", "--n-malware-features", "10", "--benign-draw", "6,12",
      "--mal-indicator", "2,4", "--mal-benign-draw", "1,4", "--baseline-epochs", "2",
      "--hardened-epochs", "2", "--batch-size", "16", "--hidden", "8",
      "--feature-configs", "all"};

  auto args_a = base;
  args_a.insert(args_a.end(), {"--out", (dir.path() / "a").string()});
  auto args_b = base;
  args_b.insert(args_b.end(), {"--out", (dir.path() / "b").string()});
  REQUIRE(run_cli(args_a) == 0);
  REQUIRE(run_cli(args_b) == 0);

  CHECK(read_file(dir.path() / "a" / "metrics.csv") ==
        read_file(dir.path() / "b" / "metrics.csv"));
  CHECK(read_file(dir.path() / "a" / "curves_all_baseline.csv") ==
        read_file(dir.path() / "b" / "curves_all_baseline.csv"));
  CHECK(read_file(dir.path() / "a" / "curves_all_hardened.csv") ==
        read_file(dir.path() / "b" / "curves_all_hardened.csv"));
  CHECK(std::filesystem::exists(dir.path() / "a" / "resolved_config.json"));
}
