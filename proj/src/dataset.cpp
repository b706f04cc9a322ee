#include "obfmal/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "obfmal/rng.hpp"

namespace obfmal {

namespace {

using ordered_json = nlohmann::ordered_json;

[[noreturn]] void line_error(std::size_t line_no, const std::string& what) {
  throw std::runtime_error("line " + std::to_string(line_no) + ": " + what);
}

std::vector<std::string> feature_list(const nlohmann::json& doc, const char* key,
                                      std::size_t line_no) {
  if (!doc.contains(key) || !doc[key].is_array()) line_error(line_no, std::string("missing array '") + key + "'");
  std::vector<std::string> out;
  for (const auto& item : doc[key]) {
    if (!item.is_string()) line_error(line_no, std::string("non-string entry in '") + key + "'");
    std::string s = item.get<std::string>();
    if (s.empty()) line_error(line_no, std::string("empty feature string in '") + key + "'");
    if (s.find_first_of(" \t\r\n") != std::string::npos)
      line_error(line_no, std::string("whitespace in feature string in '") + key + "'");
    out.push_back(std::move(s));
  }
  return out;
}

/// Draws k distinct pool indices with weight proportional to 1/(rank+1).
std::vector<int> draw_distinct_zipf(Rng& rng, const std::vector<double>& cumulative, int k) {
  std::vector<int> drawn;
  std::vector<bool> taken(cumulative.size(), false);
  const double total = cumulative.back();
  while (static_cast<int>(drawn.size()) < k) {
    const double u = unit_real(rng) * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const int idx = static_cast<int>(it - cumulative.begin());
    if (idx < static_cast<int>(cumulative.size()) && !taken[static_cast<std::size_t>(idx)]) {
      taken[static_cast<std::size_t>(idx)] = true;
      drawn.push_back(idx);
    }
  }
  return drawn;
}

std::vector<double> zipf_cumulative(int n) {
  std::vector<double> c(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (int r = 0; r < n; ++r) {
    acc += 1.0 / static_cast<double>(r + 1);
    c[static_cast<std::size_t>(r)] = acc;
  }
  return c;
}

void check_range(const IntRange& r, const char* name) {
  if (r.lo < 0 || r.hi < r.lo)
    throw std::invalid_argument(std::string("synthetic config: bad range ") + name);
}

}  // namespace

void SyntheticConfig::validate() const {
  if (n_benign < 0 || n_malicious < 0 || n_benign + n_malicious < 1)
    throw std::invalid_argument("synthetic config: need at least one sample");
  if (n_benign_features < 1 || n_malware_features < 1)
    throw std::invalid_argument("synthetic config: feature pools must be non-empty");
  check_range(benign_draw, "benign_draw");
  check_range(mal_indicator, "mal_indicator");
  check_range(mal_benign_draw, "mal_benign_draw");
  if (mal_benign_draw.hi >= benign_draw.lo)
    throw std::invalid_argument(
        "synthetic config: mal_benign_draw.hi must stay below benign_draw.lo");
  if (benign_draw.hi > n_benign_features || mal_benign_draw.hi > n_benign_features)
    throw std::invalid_argument("synthetic config: benign pool smaller than draw range");
  if (mal_indicator.hi > n_malware_features)
    throw std::invalid_argument("synthetic config: malware pool smaller than draw range");
}

std::vector<RawSample> load_samples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<RawSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      line_error(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) line_error(line_no, "not a JSON object");
    RawSample sample;
    if (!doc.contains("id") || !doc["id"].is_string()) line_error(line_no, "missing id");
    sample.id = doc["id"].get<std::string>();
    const std::string label = doc.value("label", std::string());
    if (label == "benign") {
      sample.label = Label::benign;
    } else if (label == "malicious") {
      sample.label = Label::malicious;
    } else {
      line_error(line_no, "invalid label");
    }
    sample.intents = feature_list(doc, "intents", line_no);
    sample.permissions = feature_list(doc, "permissions", line_no);
    sample.apis = feature_list(doc, "apis", line_no);
    samples.push_back(std::move(sample));
  }
  return samples;
}

void save_samples(const std::filesystem::path& path, std::span<const RawSample> samples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& s : samples) {
    ordered_json doc{{"id", s.id},
                     {"label", s.label == Label::malicious ? "malicious" : "benign"},
                     {"intents", s.intents},
                     {"permissions", s.permissions},
                     {"apis", s.apis}};
    out << doc.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Dataset load_vectorized(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      line_error(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!header_seen) {
      if (!doc.contains("dimension") || !doc["dimension"].is_number_integer())
        line_error(line_no, "expected header with 'dimension'");
      data.dimension = doc["dimension"].get<std::int32_t>();
      if (data.dimension < 1) line_error(line_no, "dimension must be positive");
      header_seen = true;
      continue;
    }
    const int label = doc.value("label", -1);
    if (label != 0 && label != 1) line_error(line_no, "invalid label");
    if (!doc.contains("indices") || !doc["indices"].is_array())
      line_error(line_no, "missing indices");
    FeatureVector v;
    v.dimension = data.dimension;
    std::int32_t prev = -1;
    for (const auto& item : doc["indices"]) {
      if (!item.is_number_integer()) line_error(line_no, "non-integer index");
      const auto idx = item.get<std::int32_t>();
      if (idx <= prev) line_error(line_no, "indices not strictly increasing");
      if (idx < 0 || idx >= data.dimension) line_error(line_no, "index out of range");
      v.indices.push_back(idx);
      prev = idx;
    }
    if (v.indices.empty()) line_error(line_no, "empty index set");
    data.vectors.push_back(std::move(v));
    data.labels.push_back(label == 1 ? Label::malicious : Label::benign);
  }
  if (!header_seen) throw std::runtime_error("missing header line in " + path.string());
  return data;
}

std::string vectorized_to_string(const Dataset& data) {
  std::string out = ordered_json{{"dimension", data.dimension}}.dump();
  out += '\n';
  for (std::size_t i = 0; i < data.vectors.size(); ++i) {
    ordered_json doc{{"label", data.labels[i] == Label::malicious ? 1 : 0},
                     {"indices", data.vectors[i].indices}};
    out += doc.dump();
    out += '\n';
  }
  return out;
}

void save_vectorized(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << vectorized_to_string(data);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Dataset vectorize_corpus(std::span<const RawSample> samples, const FeatureVocabulary& vocab,
                         int min_segments, std::int64_t* n_dropped) {
  Dataset data;
  data.dimension = vocab.dimension();
  std::int64_t dropped = 0;
  for (const auto& sample : samples) {
    FeatureVector v = vectorize(sample, vocab, min_segments);
    if (v.indices.empty()) {
      ++dropped;
      continue;
    }
    data.vectors.push_back(std::move(v));
    data.labels.push_back(sample.label);
  }
  if (n_dropped) *n_dropped = dropped;
  return data;
}

namespace {

std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>> split_indices(
    std::int64_t n, double test_fraction, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("split: need at least 2 samples");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("split: test_fraction must be in (0,1)");
  Rng rng(seed);
  auto perm = random_permutation(n, rng);
  const auto n_test =
      static_cast<std::int64_t>(std::floor(test_fraction * static_cast<double>(n)));
  std::vector<std::int64_t> test(perm.begin(), perm.begin() + n_test);
  std::vector<std::int64_t> train(perm.begin() + n_test, perm.end());
  return {std::move(train), std::move(test)};
}

}  // namespace

std::pair<Dataset, Dataset> shuffle_split(const Dataset& data, double test_fraction,
                                          std::uint64_t seed) {
  auto [train_idx, test_idx] = split_indices(data.size(), test_fraction, seed);
  const auto take = [&data](const std::vector<std::int64_t>& idx) {
    Dataset part;
    part.dimension = data.dimension;
    part.vectors.reserve(idx.size());
    part.labels.reserve(idx.size());
    for (auto i : idx) {
      part.vectors.push_back(data.vectors[static_cast<std::size_t>(i)]);
      part.labels.push_back(data.labels[static_cast<std::size_t>(i)]);
    }
    return part;
  };
  return {take(train_idx), take(test_idx)};
}

std::pair<std::vector<RawSample>, std::vector<RawSample>> split_corpus(
    std::span<const RawSample> samples, double test_fraction, std::uint64_t seed) {
  auto [train_idx, test_idx] =
      split_indices(static_cast<std::int64_t>(samples.size()), test_fraction, seed);
  const auto take = [samples](const std::vector<std::int64_t>& idx) {
    std::vector<RawSample> part;
    part.reserve(idx.size());
    for (auto i : idx) part.push_back(samples[static_cast<std::size_t>(i)]);
    return part;
  };
  return {take(train_idx), take(test_idx)};
}

BlockKind synthetic_kind(int rank) { return static_cast<BlockKind>(rank % 3); }

SyntheticCorpus generate_synthetic(const SyntheticConfig& config) {
  config.validate();

  SyntheticCorpus corpus;
  corpus.pools.benign.reserve(static_cast<std::size_t>(config.n_benign_features));
  for (int r = 0; r < config.n_benign_features; ++r) {
    corpus.pools.benign.push_back("ben.g" + std::to_string(r % 9) + ".f" + std::to_string(r));
  }
  corpus.pools.malware.reserve(static_cast<std::size_t>(config.n_malware_features));
  for (int r = 0; r < config.n_malware_features; ++r) {
    corpus.pools.malware.push_back("mal.g" + std::to_string(r % 9) + ".f" + std::to_string(r));
  }

  const auto benign_cum = zipf_cumulative(config.n_benign_features);
  const auto malware_cum = zipf_cumulative(config.n_malware_features);

  Rng rng(config.seed);
  const auto place = [](RawSample& sample, const std::string& base, int rank) {
    switch (synthetic_kind(rank)) {
      case BlockKind::intent: sample.intents.push_back(base); break;
      case BlockKind::permission: sample.permissions.push_back(base); break;
      case BlockKind::api: sample.apis.push_back(base + ".call"); break;
    }
  };

  corpus.samples.reserve(static_cast<std::size_t>(config.n_benign + config.n_malicious));
  for (std::int64_t i = 0; i < config.n_benign; ++i) {
    RawSample sample;
    sample.id = "b" + std::to_string(i);
    sample.label = Label::benign;
    const int k = static_cast<int>(uniform_int(rng, config.benign_draw.lo, config.benign_draw.hi));
    for (int rank : draw_distinct_zipf(rng, benign_cum, k)) {
      place(sample, corpus.pools.benign[static_cast<std::size_t>(rank)], rank);
    }
    corpus.samples.push_back(std::move(sample));
  }
  for (std::int64_t i = 0; i < config.n_malicious; ++i) {
    RawSample sample;
    sample.id = "m" + std::to_string(i);
    sample.label = Label::malicious;
    const int m =
        static_cast<int>(uniform_int(rng, config.mal_indicator.lo, config.mal_indicator.hi));
    for (int rank : draw_distinct_zipf(rng, malware_cum, m)) {
      place(sample, corpus.pools.malware[static_cast<std::size_t>(rank)], rank);
    }
    const int j =
        static_cast<int>(uniform_int(rng, config.mal_benign_draw.lo, config.mal_benign_draw.hi));
    for (int rank : draw_distinct_zipf(rng, benign_cum, j)) {
      place(sample, corpus.pools.benign[static_cast<std::size_t>(rank)], rank);
    }
    corpus.samples.push_back(std::move(sample));
  }
  return corpus;
}

PlainBatchSource::PlainBatchSource(const Dataset& data, int batch_size, std::uint64_t seed)
    : data_(&data), batch_size_(batch_size), seed_(seed) {
  if (batch_size_ < 1) throw std::invalid_argument("batch source: batch_size must be >= 1");
  if (data.size() < 1) throw std::invalid_argument("batch source: empty dataset");
}

void PlainBatchSource::begin_epoch(int epoch) {
  Rng rng(derive_seed(seed_, static_cast<std::uint64_t>(epoch)));
  order_ = random_permutation(data_->size(), rng);
  cursor_ = 0;
}

bool PlainBatchSource::next(Batch& out) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t end = std::min(cursor_ + static_cast<std::size_t>(batch_size_), order_.size());
  out.vectors.clear();
  out.labels.clear();
  out.vectors.reserve(end - cursor_);
  out.labels.reserve(end - cursor_);
  for (std::size_t i = cursor_; i < end; ++i) {
    const auto idx = static_cast<std::size_t>(order_[i]);
    out.vectors.push_back(data_->vectors[idx]);
    out.labels.push_back(data_->labels[idx]);
  }
  cursor_ = end;
  return true;
}

}  // namespace obfmal
