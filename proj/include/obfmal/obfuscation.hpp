#pragma once

#include <cstdint>
#include <vector>

#include "obfmal/dataset.hpp"
#include "obfmal/feature_vocab.hpp"
#include "obfmal/rng.hpp"

namespace obfmal {

enum class PoolSource : std::uint8_t { test_pool, train_pool };

/// Benign feature vectors used as obfuscation donors.
struct BenignPool {
  std::vector<FeatureVector> vectors;
  PoolSource source = PoolSource::test_pool;
};

/// Collects the benign-labeled vectors of a dataset into a donor pool.
BenignPool benign_pool_from(const Dataset& data, PoolSource source);

/// Union of the malware vector with one benign donor; dimension unchanged.
FeatureVector obfuscate_vector(const FeatureVector& malware, const FeatureVector& benign);

/// Replaces each malicious test vector by its union with one uniformly drawn
/// donor (with replacement). Benign rows and all labels pass through
/// unchanged; output size equals input size.
Dataset build_obfuscated_test_set(const Dataset& test, const BenignPool& pool,
                                  std::uint64_t seed);

/// Per-epoch training stream: seeded reshuffle, then each malicious sample in
/// a batch is unioned with a freshly drawn donor. Fresh donors every epoch.
/// Rejects pools sourced from test data.
class HardenedBatchSource final : public BatchSource {
 public:
  HardenedBatchSource(const Dataset& train, const BenignPool& pool, int batch_size,
                      std::uint64_t seed);
  void begin_epoch(int epoch) override;
  bool next(Batch& out) override;

 private:
  const Dataset* data_;
  const BenignPool* pool_;
  int batch_size_;
  std::uint64_t seed_;
  std::vector<std::int64_t> order_;
  std::size_t cursor_ = 0;
  Rng donor_rng_;
};

}  // namespace obfmal
