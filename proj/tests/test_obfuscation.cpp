#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "obfmal/obfuscation.hpp"

using namespace obfmal;

namespace {

FeatureVector sparse(std::vector<std::int32_t> indices, std::int32_t dimension = 16) {
  return FeatureVector{std::move(indices), dimension};
}

/// Dataset whose malicious vectors each carry a unique marker index >= 8, so
/// stream outputs can be traced back to their originals.
Dataset marked_dataset() {
  Dataset data;
  data.dimension = 16;
  for (std::int32_t i = 0; i < 6; ++i) {
    data.vectors.push_back(sparse({i}));
    data.labels.push_back(Label::benign);
  }
  for (std::int32_t i = 0; i < 4; ++i) {
    data.vectors.push_back(sparse({static_cast<std::int32_t>(8 + i)}));
    data.labels.push_back(Label::malicious);
  }
  return data;
}

bool is_superset(const FeatureVector& big, const FeatureVector& small) {
  return std::includes(big.indices.begin(), big.indices.end(), small.indices.begin(),
                       small.indices.end());
}

}  // namespace

TEST_CASE("obfuscate_vector is set union") {
  const auto merged = obfuscate_vector(sparse({1, 5}), sparse({2, 5}));
  CHECK(merged.indices == std::vector<std::int32_t>{1, 2, 5});
  CHECK(merged.dimension == 16);

  const auto v = sparse({3, 7, 9});
  CHECK(obfuscate_vector(v, sparse({})) == v);  // identity element
  CHECK(obfuscate_vector(v, v) == v);           // idempotence

  CHECK_THROWS_AS(obfuscate_vector(sparse({1}, 4), sparse({1}, 5)), std::invalid_argument);
}

TEST_CASE("benign_pool_from extracts only benign vectors") {
  const auto data = marked_dataset();
  const auto pool = benign_pool_from(data, PoolSource::test_pool);
  CHECK(pool.vectors.size() == 6);
  for (const auto& v : pool.vectors) CHECK(v.indices[0] < 6);

  Dataset malicious_only;
  malicious_only.dimension = 16;
  malicious_only.vectors = {sparse({9})};
  malicious_only.labels = {Label::malicious};
  CHECK_THROWS_AS(benign_pool_from(malicious_only, PoolSource::test_pool),
                  std::invalid_argument);
}

TEST_CASE("attack preserves size, labels and benign rows") {
  const auto test = marked_dataset();
  const auto pool = benign_pool_from(test, PoolSource::test_pool);
  const auto obfuscated = build_obfuscated_test_set(test, pool, 17);

  REQUIRE(obfuscated.size() == test.size());
  CHECK(obfuscated.labels == test.labels);
  for (std::int64_t i = 0; i < test.size(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (test.labels[idx] == Label::benign) {
      CHECK(obfuscated.vectors[idx] == test.vectors[idx]);
    } else {
      CHECK(is_superset(obfuscated.vectors[idx], test.vectors[idx]));
    }
  }
}

TEST_CASE("attack is deterministic under seed") {
  const auto test = marked_dataset();
  const auto pool = benign_pool_from(test, PoolSource::test_pool);
  const auto a = build_obfuscated_test_set(test, pool, 17);
  const auto b = build_obfuscated_test_set(test, pool, 17);
  CHECK(a.vectors == b.vectors);
  const auto c = build_obfuscated_test_set(test, pool, 18);
  CHECK(a.vectors != c.vectors);
}

TEST_CASE("attack rejects an empty or mismatched pool") {
  const auto test = marked_dataset();
  CHECK_THROWS_AS(build_obfuscated_test_set(test, BenignPool{}, 1), std::invalid_argument);

  BenignPool wrong_dim;
  wrong_dim.vectors = {sparse({0}, 4)};
  CHECK_THROWS_AS(build_obfuscated_test_set(test, wrong_dim, 1), std::invalid_argument);
}

TEST_CASE("hardened stream rejects test-sourced pools") {
  const auto data = marked_dataset();
  const auto test_pool = benign_pool_from(data, PoolSource::test_pool);
  CHECK_THROWS_AS(HardenedBatchSource(data, test_pool, 4, 1), std::invalid_argument);
  const auto train_pool = benign_pool_from(data, PoolSource::train_pool);
  CHECK_THROWS_AS(HardenedBatchSource(data, train_pool, 0, 1), std::invalid_argument);
}

TEST_CASE("hardened stream obfuscates malicious rows only, labels preserved") {
  const auto data = marked_dataset();
  const auto pool = benign_pool_from(data, PoolSource::train_pool);
  HardenedBatchSource stream(data, pool, 4, 31);

  stream.begin_epoch(0);
  Batch batch;
  std::size_t n_batches = 0;
  std::size_t n_samples = 0;
  std::multiset<int> labels_seen;
  while (stream.next(batch)) {
    ++n_batches;
    n_samples += batch.vectors.size();
    for (std::size_t i = 0; i < batch.vectors.size(); ++i) {
      labels_seen.insert(batch.labels[i] == Label::malicious ? 1 : 0);
      const auto& v = batch.vectors[i];
      if (batch.labels[i] == Label::benign) {
        // benign rows pass through untouched
        CHECK(v.indices.size() == 1);
        CHECK(v.indices[0] < 6);
      } else {
        // marker index identifies the original malicious vector
        const auto marker =
            std::find_if(v.indices.begin(), v.indices.end(), [](std::int32_t x) { return x >= 8; });
        REQUIRE(marker != v.indices.end());
        const auto& original = data.vectors[static_cast<std::size_t>(*marker - 8 + 6)];
        CHECK(is_superset(v, original));
      }
    }
  }
  CHECK(n_batches == 3);  // ceil(10/4)
  CHECK(n_samples == 10);
  CHECK(labels_seen == std::multiset<int>{0, 0, 0, 0, 0, 0, 1, 1, 1, 1});
}

TEST_CASE("hardened stream draws fresh donors each epoch but replays under a seed") {
  const auto data = marked_dataset();
  const auto pool = benign_pool_from(data, PoolSource::train_pool);

  const auto collect = [&](HardenedBatchSource& stream, int epoch) {
    stream.begin_epoch(epoch);
    std::vector<FeatureVector> out;
    Batch batch;
    while (stream.next(batch))
      for (auto& v : batch.vectors) out.push_back(std::move(v));
    return out;
  };

  HardenedBatchSource stream(data, pool, 4, 31);
  const auto epoch0 = collect(stream, 0);
  const auto epoch1 = collect(stream, 1);
  CHECK(epoch0 != epoch1);  // fresh shuffle and donors

  HardenedBatchSource replay(data, pool, 4, 31);
  CHECK(collect(replay, 0) == epoch0);
  CHECK(collect(replay, 1) == epoch1);
}
