#include "obfmal/obfuscation.hpp"

#include <algorithm>
#include <iterator>
#include <stdexcept>

namespace obfmal {

BenignPool benign_pool_from(const Dataset& data, PoolSource source) {
  BenignPool pool;
  pool.source = source;
  for (std::size_t i = 0; i < data.vectors.size(); ++i) {
    if (data.labels[i] == Label::benign) pool.vectors.push_back(data.vectors[i]);
  }
  if (pool.vectors.empty())
    throw std::invalid_argument("benign pool: dataset contains no benign samples");
  return pool;
}

FeatureVector obfuscate_vector(const FeatureVector& malware, const FeatureVector& benign) {
  if (malware.dimension != benign.dimension)
    throw std::invalid_argument("obfuscate_vector: dimension mismatch");
  FeatureVector out;
  out.dimension = malware.dimension;
  out.indices.reserve(malware.indices.size() + benign.indices.size());
  std::set_union(malware.indices.begin(), malware.indices.end(), benign.indices.begin(),
                 benign.indices.end(), std::back_inserter(out.indices));
  return out;
}

Dataset build_obfuscated_test_set(const Dataset& test, const BenignPool& pool,
                                  std::uint64_t seed) {
  if (pool.vectors.empty()) throw std::invalid_argument("attack: empty benign pool");
  for (const auto& v : pool.vectors) {
    if (v.dimension != test.dimension)
      throw std::invalid_argument("attack: pool dimension mismatch");
  }
  Rng rng(seed);
  Dataset out;
  out.dimension = test.dimension;
  out.labels = test.labels;
  out.vectors.reserve(test.vectors.size());
  for (std::size_t i = 0; i < test.vectors.size(); ++i) {
    if (test.labels[i] == Label::malicious) {
      const auto& donor = pool.vectors[bounded(rng, pool.vectors.size())];
      out.vectors.push_back(obfuscate_vector(test.vectors[i], donor));
    } else {
      out.vectors.push_back(test.vectors[i]);
    }
  }
  return out;
}

HardenedBatchSource::HardenedBatchSource(const Dataset& train, const BenignPool& pool,
                                         int batch_size, std::uint64_t seed)
    : data_(&train), pool_(&pool), batch_size_(batch_size), seed_(seed) {
  if (pool.source != PoolSource::train_pool)
    throw std::invalid_argument("hardened stream: donor pool must come from training data");
  if (pool.vectors.empty()) throw std::invalid_argument("hardened stream: empty benign pool");
  if (batch_size_ < 1) throw std::invalid_argument("hardened stream: batch_size must be >= 1");
  if (train.size() < 1) throw std::invalid_argument("hardened stream: empty dataset");
  for (const auto& v : pool.vectors) {
    if (v.dimension != train.dimension)
      throw std::invalid_argument("hardened stream: pool dimension mismatch");
  }
}

void HardenedBatchSource::begin_epoch(int epoch) {
  // One stream per epoch drives both the shuffle and the donor draws.
  donor_rng_.seed(derive_seed(seed_, static_cast<std::uint64_t>(epoch)));
  order_ = random_permutation(data_->size(), donor_rng_);
  cursor_ = 0;
}

bool HardenedBatchSource::next(Batch& out) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t end = std::min(cursor_ + static_cast<std::size_t>(batch_size_), order_.size());
  out.vectors.clear();
  out.labels.clear();
  out.vectors.reserve(end - cursor_);
  out.labels.reserve(end - cursor_);
  for (std::size_t i = cursor_; i < end; ++i) {
    const auto idx = static_cast<std::size_t>(order_[i]);
    if (data_->labels[idx] == Label::malicious) {
      const auto& donor = pool_->vectors[bounded(donor_rng_, pool_->vectors.size())];
      out.vectors.push_back(obfuscate_vector(data_->vectors[idx], donor));
    } else {
      out.vectors.push_back(data_->vectors[idx]);
    }
    out.labels.push_back(data_->labels[idx]);
  }
  cursor_ = end;
  return true;
}

}  // namespace obfmal
