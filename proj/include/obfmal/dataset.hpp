#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "obfmal/feature_vocab.hpp"

namespace obfmal {

/// Parallel vectors and labels over one shared vocabulary dimension.
/// Zero-feature samples are discarded before a Dataset is formed.
struct Dataset {
  std::vector<FeatureVector> vectors;
  std::vector<Label> labels;
  std::int32_t dimension = 0;

  std::int64_t size() const { return static_cast<std::int64_t>(vectors.size()); }
};

struct IntRange {
  int lo = 0;
  int hi = 0;
};

/// Desk-scale corpus generator with a planted structure: malware indicators
/// occur only in malicious samples, and malicious samples carry visibly
/// fewer benign-pool features than benign samples do.
struct SyntheticConfig {
  std::int64_t n_benign = 6000;
  std::int64_t n_malicious = 3000;
  int n_benign_features = 800;
  int n_malware_features = 120;
  IntRange benign_draw{20, 60};       // benign features per benign sample
  IntRange mal_indicator{3, 8};       // indicator features per malicious sample
  IntRange mal_benign_draw{5, 15};    // benign features per malicious sample
  std::uint64_t seed = 0;

  void validate() const;
};

struct FeaturePools {
  std::vector<std::string> benign;   // 3-segment base names, Zipf-ranked
  std::vector<std::string> malware;
};

struct SyntheticCorpus {
  std::vector<RawSample> samples;  // benign first, then malicious
  FeaturePools pools;
};

std::vector<RawSample> load_samples(const std::filesystem::path& path);
void save_samples(const std::filesystem::path& path, std::span<const RawSample> samples);

Dataset load_vectorized(const std::filesystem::path& path);
void save_vectorized(const std::filesystem::path& path, const Dataset& data);
std::string vectorized_to_string(const Dataset& data);

/// Vectorizes a corpus and drops zero-feature samples. `n_dropped`, when
/// given, receives the discard count.
Dataset vectorize_corpus(std::span<const RawSample> samples, const FeatureVocabulary& vocab,
                         int min_segments, std::int64_t* n_dropped = nullptr);

/// Seeded shuffle, then the first floor(test_fraction * N) samples form the
/// test set and the rest the training set.
std::pair<Dataset, Dataset> shuffle_split(const Dataset& data, double test_fraction,
                                          std::uint64_t seed);

/// Same split contract applied to raw samples.
std::pair<std::vector<RawSample>, std::vector<RawSample>> split_corpus(
    std::span<const RawSample> samples, double test_fraction, std::uint64_t seed);

SyntheticCorpus generate_synthetic(const SyntheticConfig& config);

/// Feature kind a synthetic pool entry lands in, cycling by rank so every
/// block is populated.
BlockKind synthetic_kind(int rank);

struct Batch {
  std::vector<FeatureVector> vectors;
  std::vector<Label> labels;
};

/// Single-consumer per-epoch batch iterator.
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual void begin_epoch(int epoch) = 0;
  virtual bool next(Batch& out) = 0;
};

/// Seeded per-epoch reshuffle, batches of batch_size, final short batch kept.
class PlainBatchSource final : public BatchSource {
 public:
  PlainBatchSource(const Dataset& data, int batch_size, std::uint64_t seed);
  void begin_epoch(int epoch) override;
  bool next(Batch& out) override;

 private:
  const Dataset* data_;
  int batch_size_;
  std::uint64_t seed_;
  std::vector<std::int64_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace obfmal
