#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace obfmal {

enum class Label : std::uint8_t { benign = 0, malicious = 1 };

/// One app's identity, label and raw static feature strings.
struct RawSample {
  std::string id;
  Label label = Label::benign;
  std::vector<std::string> intents;
  std::vector<std::string> permissions;
  std::vector<std::string> apis;

  bool operator==(const RawSample&) const = default;
};

/// Column blocks appear in this fixed order (only enabled ones present).
enum class BlockKind : std::uint8_t { intent = 0, permission = 1, api = 2 };

std::string_view to_string(BlockKind kind);
std::optional<BlockKind> block_kind_from_string(std::string_view name);

struct VocabConfig {
  bool use_intents = true;
  bool use_permissions = true;
  bool use_apis = true;
  int k_api = 20000;      // cap on api-prefix block size
  int min_segments = 3;   // shortest api prefix kept, in dot segments
};

/// Sparse binary feature vector: presence-only column indices, sorted,
/// unique, all below `dimension`.
struct FeatureVector {
  std::vector<std::int32_t> indices;
  std::int32_t dimension = 0;

  bool operator==(const FeatureVector&) const = default;
};

/// Ordered, type-partitioned mapping from feature string to column index.
/// Column indices are contiguous and implicit from block order.
class FeatureVocabulary {
 public:
  struct Block {
    BlockKind kind;
    std::vector<std::string> features;
  };

  FeatureVocabulary() = default;
  FeatureVocabulary(std::vector<Block> blocks, int min_segments);

  std::int32_t dimension() const { return dimension_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  int min_segments() const { return min_segments_; }
  bool has_block(BlockKind kind) const;

  /// Column index of (kind, name), or nullopt if absent.
  std::optional<std::int32_t> index_of(BlockKind kind, const std::string& name) const;

  std::string to_json_string() const;
  static FeatureVocabulary from_json_string(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static FeatureVocabulary load(const std::filesystem::path& path);

 private:
  std::vector<Block> blocks_;
  std::array<std::unordered_map<std::string, std::int32_t>, 3> index_;
  std::int32_t dimension_ = 0;
  int min_segments_ = 3;
};

/// Drops the final dot segment (the function name) and returns every
/// dot-joined prefix of the remaining class path with at least
/// `min_segments` segments, longest first. Empty when no prefix qualifies.
std::vector<std::string> truncate_api_call(std::string_view call, int min_segments);

/// Builds the vocabulary from a corpus. Intent and permission blocks keep
/// every distinct observed string; the api block keeps the k_api truncated
/// prefixes occurring in the most samples. Within a block, features are
/// ordered by descending sample count, ties broken lexicographically.
FeatureVocabulary build_vocabulary(std::span<const RawSample> corpus, const VocabConfig& config);

/// Maps a sample onto vocabulary columns (apis truncated first). Unknown
/// features are silently dropped; repeats collapse to one index.
FeatureVector vectorize(const RawSample& sample, const FeatureVocabulary& vocab, int min_segments);

}  // namespace obfmal
