#include "obfmal/feature_vocab.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace obfmal {

namespace {

constexpr std::array<BlockKind, 3> kBlockOrder = {BlockKind::intent, BlockKind::permission,
                                                  BlockKind::api};

std::vector<std::string> order_by_count(
    const std::unordered_map<std::string, std::int64_t>& counts) {
  std::vector<std::pair<std::string, std::int64_t>> items(counts.begin(), counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> names;
  names.reserve(items.size());
  for (auto& [name, count] : items) names.push_back(std::move(name));
  return names;
}

}  // namespace

std::string_view to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::intent: return "intent";
    case BlockKind::permission: return "permission";
    case BlockKind::api: return "api";
  }
  return "?";
}

std::optional<BlockKind> block_kind_from_string(std::string_view name) {
  if (name == "intent") return BlockKind::intent;
  if (name == "permission") return BlockKind::permission;
  if (name == "api") return BlockKind::api;
  return std::nullopt;
}

FeatureVocabulary::FeatureVocabulary(std::vector<Block> blocks, int min_segments)
    : blocks_(std::move(blocks)), min_segments_(min_segments) {
  if (min_segments_ < 1) throw std::invalid_argument("vocabulary: min_segments must be positive");
  int last_kind = -1;
  std::int32_t column = 0;
  for (const auto& block : blocks_) {
    const int kind = static_cast<int>(block.kind);
    if (kind <= last_kind)
      throw std::invalid_argument("vocabulary: blocks out of order or duplicated");
    last_kind = kind;
    auto& map = index_[static_cast<std::size_t>(kind)];
    for (const auto& name : block.features) {
      if (!map.emplace(name, column).second)
        throw std::invalid_argument("vocabulary: duplicate feature '" + name + "' in block " +
                                    std::string(to_string(block.kind)));
      ++column;
    }
  }
  dimension_ = column;
}

bool FeatureVocabulary::has_block(BlockKind kind) const {
  return std::any_of(blocks_.begin(), blocks_.end(),
                     [kind](const Block& b) { return b.kind == kind; });
}

std::optional<std::int32_t> FeatureVocabulary::index_of(BlockKind kind,
                                                        const std::string& name) const {
  const auto& map = index_[static_cast<std::size_t>(kind)];
  auto it = map.find(name);
  if (it == map.end()) return std::nullopt;
  return it->second;
}

std::string FeatureVocabulary::to_json_string() const {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& block : blocks_) {
    blocks.push_back({{"kind", to_string(block.kind)}, {"features", block.features}});
  }
  return nlohmann::json{{"blocks", blocks}, {"min_segments", min_segments_}}.dump();
}

FeatureVocabulary FeatureVocabulary::from_json_string(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("vocabulary: invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("blocks") || !doc["blocks"].is_array())
    throw std::runtime_error("vocabulary: missing 'blocks' array");
  std::vector<Block> blocks;
  for (const auto& entry : doc["blocks"]) {
    auto kind = block_kind_from_string(entry.value("kind", std::string()));
    if (!kind) throw std::runtime_error("vocabulary: unknown block kind");
    blocks.push_back({*kind, entry.value("features", std::vector<std::string>())});
  }
  return FeatureVocabulary(std::move(blocks), doc.value("min_segments", 3));
}

void FeatureVocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << to_json_string() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

FeatureVocabulary FeatureVocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json_string(buffer.str());
}

std::vector<std::string> truncate_api_call(std::string_view call, int min_segments) {
  if (call.empty()) throw std::invalid_argument("truncate_api_call: empty identifier");
  if (min_segments < 1) throw std::invalid_argument("truncate_api_call: min_segments must be positive");

  // Byte offset of the end of each segment; a prefix of L segments is the
  // literal substring call[0, ends[L-1]).
  std::vector<std::size_t> ends;
  for (std::size_t pos = 0;;) {
    const std::size_t dot = call.find('.', pos);
    if (dot == std::string_view::npos) {
      ends.push_back(call.size());
      break;
    }
    ends.push_back(dot);
    pos = dot + 1;
  }

  const std::size_t class_segments = ends.size() - 1;  // last segment is the function name
  std::vector<std::string> prefixes;
  for (std::size_t len = class_segments; len >= static_cast<std::size_t>(min_segments) && len > 0;
       --len) {
    prefixes.emplace_back(call.substr(0, ends[len - 1]));
  }
  return prefixes;
}

FeatureVocabulary build_vocabulary(std::span<const RawSample> corpus, const VocabConfig& config) {
  if (corpus.empty()) throw std::invalid_argument("build_vocabulary: empty corpus");
  if (!config.use_intents && !config.use_permissions && !config.use_apis)
    throw std::invalid_argument("build_vocabulary: all feature blocks disabled");
  if (config.k_api < 1) throw std::invalid_argument("build_vocabulary: k_api must be positive");
  if (config.min_segments < 1)
    throw std::invalid_argument("build_vocabulary: min_segments must be positive");

  // Counts are per-sample (document frequency): repeats within one sample
  // count once.
  std::array<std::unordered_map<std::string, std::int64_t>, 3> counts;
  std::unordered_set<std::string> seen;
  const auto tally = [&seen](const std::vector<std::string>& features,
                             std::unordered_map<std::string, std::int64_t>& into) {
    seen.clear();
    for (const auto& f : features) {
      if (seen.insert(f).second) ++into[f];
    }
  };

  for (const auto& sample : corpus) {
    if (config.use_intents) tally(sample.intents, counts[0]);
    if (config.use_permissions) tally(sample.permissions, counts[1]);
    if (config.use_apis) {
      seen.clear();
      for (const auto& call : sample.apis) {
        for (auto& prefix : truncate_api_call(call, config.min_segments)) {
          seen.insert(std::move(prefix));
        }
      }
      for (const auto& prefix : seen) ++counts[2][prefix];
    }
  }

  std::vector<FeatureVocabulary::Block> blocks;
  const std::array<bool, 3> enabled = {config.use_intents, config.use_permissions,
                                       config.use_apis};
  for (const BlockKind kind : kBlockOrder) {
    const auto k = static_cast<std::size_t>(kind);
    if (!enabled[k]) continue;
    auto names = order_by_count(counts[k]);
    if (kind == BlockKind::api && names.size() > static_cast<std::size_t>(config.k_api))
      names.resize(static_cast<std::size_t>(config.k_api));
    blocks.push_back({kind, std::move(names)});
  }
  return FeatureVocabulary(std::move(blocks), config.min_segments);
}

FeatureVector vectorize(const RawSample& sample, const FeatureVocabulary& vocab,
                        int min_segments) {
  std::vector<std::int32_t> indices;
  const auto collect = [&](BlockKind kind, const std::vector<std::string>& features) {
    for (const auto& f : features) {
      if (auto idx = vocab.index_of(kind, f)) indices.push_back(*idx);
    }
  };
  if (vocab.has_block(BlockKind::intent)) collect(BlockKind::intent, sample.intents);
  if (vocab.has_block(BlockKind::permission)) collect(BlockKind::permission, sample.permissions);
  if (vocab.has_block(BlockKind::api)) {
    for (const auto& call : sample.apis) {
      for (const auto& prefix : truncate_api_call(call, min_segments)) {
        if (auto idx = vocab.index_of(BlockKind::api, prefix)) indices.push_back(*idx);
      }
    }
  }
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  return FeatureVector{std::move(indices), vocab.dimension()};
}

}  // namespace obfmal
