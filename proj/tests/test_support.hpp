#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>

#include "obfmal/mlp.hpp"

namespace obfmal::testing {

/// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("obfmal_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

/// Central-difference gradient of the mean BCE with respect to every
/// parameter. Touches only forward() and bce_loss(), never backward().
inline Model<double> finite_difference_gradients(Model<double> model,
                                                 std::span<const FeatureVector> batch,
                                                 std::span<const Label> labels, double h) {
  const auto loss_at = [&]() {
    return bce_loss(forward(model, batch).probabilities, labels);
  };
  Model<double> grads = model;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& weights = model.layers[l].weights;
    for (Eigen::Index k = 0; k < weights.size(); ++k) {
      const double original = weights.data()[k];
      weights.data()[k] = original + h;
      const double up = loss_at();
      weights.data()[k] = original - h;
      const double down = loss_at();
      weights.data()[k] = original;
      grads.layers[l].weights.data()[k] = (up - down) / (2.0 * h);
    }
    auto& bias = model.layers[l].bias;
    for (Eigen::Index k = 0; k < bias.size(); ++k) {
      const double original = bias(k);
      bias(k) = original + h;
      const double up = loss_at();
      bias(k) = original - h;
      const double down = loss_at();
      bias(k) = original;
      grads.layers[l].bias(k) = (up - down) / (2.0 * h);
    }
  }
  return grads;
}

/// Largest relative coefficient error between two gradient sets; entries
/// where both sides are below 1e-10 in magnitude count as exact.
inline double max_relative_error(const Model<double>& analytic, const Model<double>& numeric) {
  double worst = 0.0;
  const auto update = [&worst](double a, double n) {
    const double denom = std::max(std::abs(a), std::abs(n));
    if (denom < 1e-10) return;
    worst = std::max(worst, std::abs(a - n) / denom);
  };
  for (std::size_t l = 0; l < analytic.layers.size(); ++l) {
    const auto& aw = analytic.layers[l].weights;
    const auto& nw = numeric.layers[l].weights;
    for (Eigen::Index k = 0; k < aw.size(); ++k) update(aw.data()[k], nw.data()[k]);
    const auto& ab = analytic.layers[l].bias;
    const auto& nb = numeric.layers[l].bias;
    for (Eigen::Index k = 0; k < ab.size(); ++k) update(ab(k), nb(k));
  }
  return worst;
}

struct RandomCheckCase {
  Model<double> model;
  std::vector<FeatureVector> batch;
  std::vector<Label> labels;
};

/// Small random model plus sparse batch (dims <= 8, batch <= 4) for
/// gradient checks. Biases are randomized away from zero so no pre-activation
/// sits on the ReLU kink, where finite differences are meaningless.
inline RandomCheckCase random_check_case(Rng& rng) {
  const auto input_dim = static_cast<Eigen::Index>(1 + bounded(rng, 8));
  const int n_hidden = static_cast<int>(1 + bounded(rng, 3));
  std::vector<int> hidden;
  for (int i = 0; i < n_hidden; ++i) hidden.push_back(static_cast<int>(1 + bounded(rng, 8)));

  RandomCheckCase c;
  c.model = init_model<double>(input_dim, hidden, rng());
  for (auto& layer : c.model.layers) {
    for (Eigen::Index k = 0; k < layer.bias.size(); ++k)
      layer.bias(k) = unit_real(rng) - 0.5;
  }
  const auto batch_size = 1 + bounded(rng, 4);
  for (std::uint64_t j = 0; j < batch_size; ++j) {
    FeatureVector v;
    v.dimension = static_cast<std::int32_t>(input_dim);
    for (std::int32_t idx = 0; idx < v.dimension; ++idx) {
      if (unit_real(rng) < 0.5) v.indices.push_back(idx);
    }
    c.batch.push_back(std::move(v));
    c.labels.push_back(bounded(rng, 2) == 1 ? Label::malicious : Label::benign);
  }
  return c;
}

}  // namespace obfmal::testing
