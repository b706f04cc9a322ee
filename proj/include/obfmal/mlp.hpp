#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "obfmal/dataset.hpp"
#include "obfmal/feature_vocab.hpp"
#include "obfmal/rng.hpp"

namespace obfmal {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct DenseLayer {
  MatX<Scalar> weights;  // out_dim x in_dim
  VecX<Scalar> bias;     // out_dim

  Eigen::Index in_dim() const { return weights.cols(); }
  Eigen::Index out_dim() const { return weights.rows(); }
};

/// Dense feed-forward stack: ReLU hidden layers, sigmoid scalar output.
/// Adjacent layer dimensions chain; the last layer has out_dim 1.
template <typename Scalar>
struct Model {
  std::vector<DenseLayer<Scalar>> layers;

  Eigen::Index input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }

  std::vector<int> hidden_widths() const {
    std::vector<int> widths;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i)
      widths.push_back(static_cast<int>(layers[i].out_dim()));
    return widths;
  }
};

struct TrainConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double decay = 1e-6;    // per-update time-based rate decay
  int batch_size = 2048;
  int epochs = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0)) throw std::invalid_argument("train config: learning_rate must be > 0");
    if (momentum < 0 || momentum >= 1) throw std::invalid_argument("train config: momentum must be in [0,1)");
    if (decay < 0) throw std::invalid_argument("train config: decay must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
  }
};

/// Per-parameter velocity mirroring the model shapes, plus the update counter.
template <typename Scalar>
struct OptimizerState {
  std::vector<DenseLayer<Scalar>> velocity;
  std::int64_t step_count = 0;

  static OptimizerState zeros_like(const Model<Scalar>& model) {
    OptimizerState state;
    state.velocity.reserve(model.layers.size());
    for (const auto& layer : model.layers) {
      state.velocity.push_back({MatX<Scalar>::Zero(layer.out_dim(), layer.in_dim()),
                                VecX<Scalar>::Zero(layer.out_dim())});
    }
    return state;
  }
};

/// Weights uniform in [-L, L] with L = sqrt(6 / (fan_in + fan_out)), drawn
/// in storage (column-major) order per layer; biases zero.
template <typename Scalar>
Model<Scalar> init_model(Eigen::Index input_dim, const std::vector<int>& hidden_widths,
                         std::uint64_t seed) {
  if (input_dim < 1) throw std::invalid_argument("init_model: input_dim must be positive");
  if (hidden_widths.empty()) throw std::invalid_argument("init_model: need at least one hidden layer");
  for (int w : hidden_widths)
    if (w < 1) throw std::invalid_argument("init_model: layer width must be positive");

  std::vector<Eigen::Index> dims;
  dims.push_back(input_dim);
  for (int w : hidden_widths) dims.push_back(w);
  dims.push_back(1);

  Rng rng(seed);
  Model<Scalar> model;
  model.layers.reserve(dims.size() - 1);
  for (std::size_t i = 1; i < dims.size(); ++i) {
    const Eigen::Index in = dims[i - 1];
    const Eigen::Index out = dims[i];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer<Scalar> layer{MatX<Scalar>(out, in), VecX<Scalar>::Zero(out)};
    Scalar* coeffs = layer.weights.data();
    const Eigen::Index total = out * in;
    for (Eigen::Index k = 0; k < total; ++k) {
      coeffs[k] = static_cast<Scalar>((2.0 * unit_real(rng) - 1.0) * limit);
    }
    model.layers.push_back(std::move(layer));
  }
  return model;
}

template <typename Scalar>
std::int64_t count_params(const Model<Scalar>& model) {
  std::int64_t n = 0;
  for (const auto& layer : model.layers) {
    n += static_cast<std::int64_t>(layer.in_dim() + 1) * static_cast<std::int64_t>(layer.out_dim());
  }
  return n;
}

template <typename Scalar>
Scalar stable_sigmoid(Scalar z) {
  if (z >= Scalar(0)) {
    const Scalar e = std::exp(-z);
    return Scalar(1) / (Scalar(1) + e);
  }
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
struct ForwardCache {
  std::vector<FeatureVector> inputs;    // sparse batch, in column order
  std::vector<MatX<Scalar>> pre;        // z per layer, out_dim x batch
  std::vector<MatX<Scalar>> post;       // relu(z) per hidden layer
  VecX<Scalar> probabilities;           // sigmoid of the final scalar logit
};

/// Forward pass over a sparse binary batch. The first layer accumulates
/// weight columns at each sample's active indices; no dense input is formed.
template <typename Scalar>
ForwardCache<Scalar> forward(const Model<Scalar>& model, std::span<const FeatureVector> batch) {
  if (model.layers.empty()) throw std::invalid_argument("forward: empty model");
  const Eigen::Index input_dim = model.input_dim();
  for (const auto& v : batch) {
    if (v.dimension != input_dim) throw std::invalid_argument("forward: input dimension mismatch");
  }
  const auto n = static_cast<Eigen::Index>(batch.size());

  ForwardCache<Scalar> cache;
  cache.inputs.assign(batch.begin(), batch.end());

  const auto& first = model.layers.front();
  MatX<Scalar> z(first.out_dim(), n);
  z.colwise() = first.bias;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (const std::int32_t idx : batch[static_cast<std::size_t>(j)].indices) {
      z.col(j) += first.weights.col(idx);
    }
  }
  cache.pre.push_back(std::move(z));

  for (std::size_t l = 1; l < model.layers.size(); ++l) {
    MatX<Scalar> activated = cache.pre.back().cwiseMax(Scalar(0));
    MatX<Scalar> next =
        (model.layers[l].weights * activated).colwise() + model.layers[l].bias;
    cache.post.push_back(std::move(activated));
    cache.pre.push_back(std::move(next));
  }

  cache.probabilities.resize(n);
  const auto& logits = cache.pre.back();
  for (Eigen::Index j = 0; j < n; ++j) {
    cache.probabilities(j) = stable_sigmoid(logits(0, j));
  }
  return cache;
}

/// Mean binary cross-entropy with probabilities clipped to [1e-7, 1 - 1e-7].
template <typename Scalar>
double bce_loss(const VecX<Scalar>& probabilities, std::span<const Label> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != probabilities.size())
    throw std::invalid_argument("bce_loss: length mismatch");
  if (labels.empty()) throw std::invalid_argument("bce_loss: empty batch");
  constexpr double eps = 1e-7;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
    const double p =
        std::min(std::max(static_cast<double>(probabilities(i)), eps), 1.0 - eps);
    sum -= labels[static_cast<std::size_t>(i)] == Label::malicious ? std::log(p) : std::log1p(-p);
  }
  return sum / static_cast<double>(labels.size());
}

/// Exact gradients of the mean BCE. The output-layer logit gradient per
/// sample is (p - y) / batch; the ReLU subgradient at 0 is 0.
template <typename Scalar>
Model<Scalar> backward(const Model<Scalar>& model, const ForwardCache<Scalar>& cache,
                       std::span<const Label> labels) {
  const std::size_t depth = model.layers.size();
  if (cache.pre.size() != depth || cache.post.size() + 1 != depth)
    throw std::invalid_argument("backward: stale cache");
  const Eigen::Index n = cache.probabilities.size();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw std::invalid_argument("backward: label count mismatch");
  for (std::size_t l = 0; l < depth; ++l) {
    if (cache.pre[l].rows() != model.layers[l].out_dim() || cache.pre[l].cols() != n)
      throw std::invalid_argument("backward: stale cache");
  }

  Model<Scalar> grads;
  grads.layers.resize(depth);

  MatX<Scalar> delta(1, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Scalar y =
        labels[static_cast<std::size_t>(j)] == Label::malicious ? Scalar(1) : Scalar(0);
    delta(0, j) = (cache.probabilities(j) - y) / static_cast<Scalar>(n);
  }

  for (std::size_t l = depth; l-- > 0;) {
    auto& g = grads.layers[l];
    g.bias = delta.rowwise().sum();
    if (l > 0) {
      g.weights.noalias() = delta * cache.post[l - 1].transpose();
      MatX<Scalar> prev = model.layers[l].weights.transpose() * delta;
      prev.array() *= (cache.pre[l - 1].array() > Scalar(0)).template cast<Scalar>();
      delta = std::move(prev);
    } else {
      const auto& first = model.layers.front();
      g.weights = MatX<Scalar>::Zero(first.out_dim(), first.in_dim());
      for (Eigen::Index j = 0; j < n; ++j) {
        for (const std::int32_t idx : cache.inputs[static_cast<std::size_t>(j)].indices) {
          g.weights.col(idx) += delta.col(j);
        }
      }
    }
  }
  return grads;
}

/// One SGD update with Nesterov momentum and time-based rate decay:
/// eta_t = lr / (1 + decay * t); v <- mu*v - eta_t*g; theta += mu*v - eta_t*g.
template <typename Scalar>
void sgd_nesterov_step(Model<Scalar>& model, const Model<Scalar>& grads,
                       OptimizerState<Scalar>& state, const TrainConfig& config) {
  if (grads.layers.size() != model.layers.size() ||
      state.velocity.size() != model.layers.size())
    throw std::invalid_argument("sgd step: shape mismatch");
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    if (grads.layers[l].weights.rows() != layer.weights.rows() ||
        grads.layers[l].weights.cols() != layer.weights.cols() ||
        grads.layers[l].bias.size() != layer.bias.size() ||
        state.velocity[l].weights.rows() != layer.weights.rows() ||
        state.velocity[l].weights.cols() != layer.weights.cols() ||
        state.velocity[l].bias.size() != layer.bias.size())
      throw std::invalid_argument("sgd step: shape mismatch");
    if (!grads.layers[l].weights.allFinite() || !grads.layers[l].bias.allFinite())
      throw std::runtime_error("sgd step: non-finite gradient");
  }

  const auto eta = static_cast<Scalar>(
      config.learning_rate / (1.0 + config.decay * static_cast<double>(state.step_count)));
  const auto mu = static_cast<Scalar>(config.momentum);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& v = state.velocity[l];
    const auto& g = grads.layers[l];
    v.weights = mu * v.weights - eta * g.weights;
    v.bias = mu * v.bias - eta * g.bias;
    model.layers[l].weights += mu * v.weights - eta * g.weights;
    model.layers[l].bias += mu * v.bias - eta * g.bias;
  }
  ++state.step_count;
}

/// Accuracy (percent, threshold 0.5, ties benign) and mean BCE over a
/// dataset, evaluated in fixed-size chunks.
template <typename Scalar>
std::pair<double, double> validation_stats(const Model<Scalar>& model, const Dataset& data,
                                           int chunk_size = 4096) {
  if (data.size() == 0) throw std::invalid_argument("validation_stats: empty dataset");
  std::int64_t correct = 0;
  double loss_sum = 0.0;
  for (std::int64_t start = 0; start < data.size(); start += chunk_size) {
    const auto count = std::min<std::int64_t>(chunk_size, data.size() - start);
    const std::span<const FeatureVector> chunk(data.vectors.data() + start,
                                               static_cast<std::size_t>(count));
    const std::span<const Label> labels(data.labels.data() + start,
                                        static_cast<std::size_t>(count));
    const auto cache = forward(model, chunk);
    loss_sum += bce_loss(cache.probabilities, labels) * static_cast<double>(count);
    for (Eigen::Index j = 0; j < count; ++j) {
      const Label predicted =
          cache.probabilities(j) > Scalar(0.5) ? Label::malicious : Label::benign;
      if (predicted == labels[static_cast<std::size_t>(j)]) ++correct;
    }
  }
  const double n = static_cast<double>(data.size());
  return {100.0 * static_cast<double>(correct) / n, loss_sum / n};
}

struct EpochStats {
  int epoch = 0;            // 1-based
  double val_accuracy = 0;  // percent
  double val_loss = 0;
};

/// Runs the training loop against an externally supplied batch stream.
template <typename Scalar>
std::vector<EpochStats> train(Model<Scalar>& model, const TrainConfig& config,
                              const Dataset& validation, BatchSource& batches) {
  config.validate();
  if (validation.dimension != model.input_dim())
    throw std::invalid_argument("train: validation dimension mismatch");

  auto state = OptimizerState<Scalar>::zeros_like(model);
  std::vector<EpochStats> history;
  history.reserve(static_cast<std::size_t>(config.epochs));
  Batch batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    batches.begin_epoch(epoch);
    while (batches.next(batch)) {
      const auto cache = forward(model, batch.vectors);
      const auto grads = backward(model, cache, batch.labels);
      sgd_nesterov_step(model, grads, state, config);
    }
    const auto [accuracy, loss] = validation_stats(model, validation);
    history.push_back({epoch + 1, accuracy, loss});
  }
  return history;
}

/// Plain training: seeded reshuffle of the training set each epoch.
template <typename Scalar>
std::vector<EpochStats> train(Model<Scalar>& model, const Dataset& train_data,
                              const TrainConfig& config, const Dataset& validation) {
  if (train_data.dimension != model.input_dim())
    throw std::invalid_argument("train: training dimension mismatch");
  PlainBatchSource source(train_data, config.batch_size, config.seed);
  return train(model, config, validation, source);
}

/// Labels malicious iff probability > threshold (ties go benign).
template <typename Scalar>
std::vector<Label> predict(const Model<Scalar>& model, const Dataset& data,
                           double threshold = 0.5) {
  std::vector<Label> out;
  out.reserve(static_cast<std::size_t>(data.size()));
  constexpr std::int64_t chunk_size = 4096;
  for (std::int64_t start = 0; start < data.size(); start += chunk_size) {
    const auto count = std::min<std::int64_t>(chunk_size, data.size() - start);
    const std::span<const FeatureVector> chunk(data.vectors.data() + start,
                                               static_cast<std::size_t>(count));
    const auto cache = forward(model, chunk);
    for (Eigen::Index j = 0; j < count; ++j) {
      out.push_back(static_cast<double>(cache.probabilities(j)) > threshold ? Label::malicious
                                                                            : Label::benign);
    }
  }
  return out;
}

// --- checkpoint I/O ---------------------------------------------------------
//
// Binary format: one JSON header line {"input_dim", "hidden", "format":
// "f32le"}, then all weight matrices in layer order (row-major), then all
// bias vectors in layer order, as little-endian IEEE-754 32-bit floats.
// The "json" variant stores the same arrays as JSON numbers.

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

enum class CheckpointFormat { f32le, json };

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const Model<Scalar>& model,
                     CheckpointFormat format = CheckpointFormat::f32le) {
  if (model.layers.empty()) throw std::invalid_argument("save_checkpoint: empty model");
  nlohmann::ordered_json header{
      {"input_dim", static_cast<std::int64_t>(model.input_dim())},
      {"hidden", model.hidden_widths()},
      {"format", format == CheckpointFormat::f32le ? "f32le" : "json"}};

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");

  if (format == CheckpointFormat::json) {
    auto weights = nlohmann::json::array();
    auto biases = nlohmann::json::array();
    for (const auto& layer : model.layers) {
      auto w = nlohmann::json::array();
      for (Eigen::Index r = 0; r < layer.out_dim(); ++r)
        for (Eigen::Index c = 0; c < layer.in_dim(); ++c)
          w.push_back(static_cast<double>(layer.weights(r, c)));
      weights.push_back(std::move(w));
      auto b = nlohmann::json::array();
      for (Eigen::Index r = 0; r < layer.out_dim(); ++r)
        b.push_back(static_cast<double>(layer.bias(r)));
      biases.push_back(std::move(b));
    }
    header["weights"] = std::move(weights);
    header["biases"] = std::move(biases);
    out << header.dump() << '\n';
  } else {
    out << header.dump() << '\n';
    std::vector<float> buffer;
    for (const auto& layer : model.layers) {
      buffer.clear();
      buffer.reserve(static_cast<std::size_t>(layer.out_dim() * layer.in_dim()));
      for (Eigen::Index r = 0; r < layer.out_dim(); ++r)
        for (Eigen::Index c = 0; c < layer.in_dim(); ++c)
          buffer.push_back(static_cast<float>(layer.weights(r, c)));
      out.write(reinterpret_cast<const char*>(buffer.data()),
                static_cast<std::streamsize>(buffer.size() * sizeof(float)));
    }
    for (const auto& layer : model.layers) {
      buffer.clear();
      for (Eigen::Index r = 0; r < layer.out_dim(); ++r)
        buffer.push_back(static_cast<float>(layer.bias(r)));
      out.write(reinterpret_cast<const char*>(buffer.data()),
                static_cast<std::streamsize>(buffer.size() * sizeof(float)));
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

template <typename Scalar>
Model<Scalar> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string header_line;
  if (!std::getline(in, header_line)) throw std::runtime_error("checkpoint: missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: invalid header: ") + e.what());
  }
  const auto input_dim = header.value("input_dim", std::int64_t{0});
  const auto hidden = header.value("hidden", std::vector<int>());
  const std::string format = header.value("format", std::string());
  if (input_dim < 1 || hidden.empty())
    throw std::runtime_error("checkpoint: invalid architecture in header");

  std::vector<Eigen::Index> dims;
  dims.push_back(input_dim);
  for (int w : hidden) dims.push_back(w);
  dims.push_back(1);

  Model<Scalar> model;
  for (std::size_t i = 1; i < dims.size(); ++i) {
    model.layers.push_back(
        {MatX<Scalar>(dims[i], dims[i - 1]), VecX<Scalar>::Zero(dims[i])});
  }

  if (format == "json") {
    const auto& weights = header.at("weights");
    const auto& biases = header.at("biases");
    if (weights.size() != model.layers.size() || biases.size() != model.layers.size())
      throw std::runtime_error("checkpoint: layer count mismatch");
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      auto& layer = model.layers[l];
      const auto& w = weights[l];
      if (static_cast<Eigen::Index>(w.size()) != layer.out_dim() * layer.in_dim())
        throw std::runtime_error("checkpoint: weight size mismatch");
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < layer.out_dim(); ++r)
        for (Eigen::Index c = 0; c < layer.in_dim(); ++c)
          layer.weights(r, c) = static_cast<Scalar>(w[k++].get<double>());
      const auto& b = biases[l];
      if (static_cast<Eigen::Index>(b.size()) != layer.out_dim())
        throw std::runtime_error("checkpoint: bias size mismatch");
      for (Eigen::Index r = 0; r < layer.out_dim(); ++r)
        layer.bias(r) = static_cast<Scalar>(b[r].get<double>());
    }
    return model;
  }
  if (format != "f32le") throw std::runtime_error("checkpoint: unknown format '" + format + "'");

  std::vector<float> buffer;
  const auto read_block = [&](std::size_t count) {
    buffer.resize(count);
    in.read(reinterpret_cast<char*>(buffer.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(count * sizeof(float)))
      throw std::runtime_error("checkpoint: truncated payload");
  };
  for (auto& layer : model.layers) {
    read_block(static_cast<std::size_t>(layer.out_dim() * layer.in_dim()));
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < layer.out_dim(); ++r)
      for (Eigen::Index c = 0; c < layer.in_dim(); ++c)
        layer.weights(r, c) = static_cast<Scalar>(buffer[k++]);
  }
  for (auto& layer : model.layers) {
    read_block(static_cast<std::size_t>(layer.out_dim()));
    for (Eigen::Index r = 0; r < layer.out_dim(); ++r)
      layer.bias(r) = static_cast<Scalar>(buffer[static_cast<std::size_t>(r)]);
  }
  return model;
}

}  // namespace obfmal
