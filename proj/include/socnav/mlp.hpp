#pragma once

// Dense ReLU network over row batches, with manual backpropagation and Adam.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "socnav/error.hpp"

namespace socnav {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { ReLU };

/// weights[l] has shape (dims[l+1], dims[l]); the final layer is linear.
struct MlpParams {
  std::vector<int> dims;
  std::vector<RowMatrix> weights;
  std::vector<Eigen::VectorXd> biases;
  Activation activation = Activation::ReLU;

  std::size_t layers() const { return weights.size(); }
  int in_dim() const { return dims.front(); }
  int out_dim() const { return dims.back(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
      n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
  }

  void check() const {
    require(dims.size() >= 2 && weights.size() == dims.size() - 1 && biases.size() == weights.size(),
            ErrorCode::DimensionMismatch, "MLP layer lists are inconsistent");
    for (std::size_t l = 0; l < weights.size(); ++l) {
      require(weights[l].rows() == dims[l + 1] && weights[l].cols() == dims[l] &&
                  biases[l].size() == dims[l + 1],
              ErrorCode::DimensionMismatch, "MLP layer " + std::to_string(l) + " does not chain");
      require(weights[l].allFinite() && biases[l].allFinite(), ErrorCode::InvalidArgument,
              "MLP parameters must be finite");
    }
  }

  bool operator==(const MlpParams& o) const {
    if (dims != o.dims || activation != o.activation || weights.size() != o.weights.size()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (weights[l] != o.weights[l] || biases[l] != o.biases[l]) return false;
    return true;
  }
};

/// Uniform He-style fan-in initialization, zero biases.
inline MlpParams init_mlp(const std::vector<int>& dims, std::mt19937_64& rng) {
  require(dims.size() >= 2, ErrorCode::InvalidArgument, "an MLP needs at least one layer");
  MlpParams p;
  p.dims = dims;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    require(dims[l] > 0 && dims[l + 1] > 0, ErrorCode::InvalidArgument, "layer widths must be positive");
    const double limit = std::sqrt(6.0 / dims[l]);
    std::uniform_real_distribution<double> u(-limit, limit);
    RowMatrix w(dims[l + 1], dims[l]);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    p.weights.push_back(std::move(w));
    p.biases.push_back(Eigen::VectorXd::Zero(dims[l + 1]));
  }
  return p;
}

/// Zero-valued container shaped like `p` (gradients, Adam moments).
inline MlpParams zeros_like(const MlpParams& p) {
  MlpParams z;
  z.dims = p.dims;
  z.activation = p.activation;
  for (std::size_t l = 0; l < p.layers(); ++l) {
    z.weights.push_back(RowMatrix::Zero(p.weights[l].rows(), p.weights[l].cols()));
    z.biases.push_back(Eigen::VectorXd::Zero(p.biases[l].size()));
  }
  return z;
}

/// Activations kept for the backward pass; inputs[l] feeds layer l.
struct MlpTrace {
  std::vector<RowMatrix> inputs;
  RowMatrix output;
};

inline RowMatrix mlp_forward(const MlpParams& p, const RowMatrix& x, MlpTrace* trace = nullptr) {
  RowMatrix h = x;
  if (trace) trace->inputs.clear();
  for (std::size_t l = 0; l < p.layers(); ++l) {
    if (trace) trace->inputs.push_back(h);
    RowMatrix z = h * p.weights[l].transpose();
    z.rowwise() += p.biases[l].transpose();
    if (l + 1 < p.layers()) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  if (trace) trace->output = h;
  return h;
}

/// Accumulates dL/dparams into `grad` and returns dL/dinput.
inline RowMatrix mlp_backward(const MlpParams& p, const MlpTrace& trace, RowMatrix d_out, MlpParams& grad) {
  for (std::size_t l = p.layers(); l-- > 0;) {
    const RowMatrix& in = trace.inputs[l];
    grad.weights[l].noalias() += d_out.transpose() * in;
    grad.biases[l].noalias() += d_out.colwise().sum().transpose();
    RowMatrix d_in = d_out * p.weights[l];
    // in = relu(previous pre-activation); in > 0 exactly where the unit was active.
    if (l > 0) d_in = (in.array() > 0.0).select(d_in, 0.0);
    d_out = std::move(d_in);
  }
  return d_out;
}

/// Visits every (param, grad) block pair; used by the optimizer and the
/// finite-difference checks.
template <typename F>
void for_each_block(MlpParams& p, MlpParams& g, F&& f) {
  for (std::size_t l = 0; l < p.layers(); ++l) {
    f(p.weights[l].data(), g.weights[l].data(), static_cast<std::size_t>(p.weights[l].size()));
    f(p.biases[l].data(), g.biases[l].data(), static_cast<std::size_t>(p.biases[l].size()));
  }
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam state for one network.
class Adam {
 public:
  Adam(const MlpParams& shape, AdamConfig cfg) : cfg_(cfg), m_(zeros_like(shape)), v_(zeros_like(shape)) {}

  void update(MlpParams& params, MlpParams& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t l = 0; l < params.layers(); ++l) {
      apply(params.weights[l].data(), grad.weights[l].data(), m_.weights[l].data(), v_.weights[l].data(),
            static_cast<std::size_t>(params.weights[l].size()), c1, c2);
      apply(params.biases[l].data(), grad.biases[l].data(), m_.biases[l].data(), v_.biases[l].data(),
            static_cast<std::size_t>(params.biases[l].size()), c1, c2);
    }
  }

 private:
  void apply(double* w, const double* g, double* m, double* v, std::size_t n, double c1, double c2) const {
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      // Moments of dead units decay geometrically into subnormals, which are
      // orders of magnitude slower to compute with.
      if (std::abs(m[i]) < 1e-30) m[i] = 0.0;
      if (v[i] < 1e-60) v[i] = 0.0;
      w[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
    }
  }

  AdamConfig cfg_;
  MlpParams m_;
  MlpParams v_;
  long t_ = 0;
};

// {"dims":[...],"weights":[[row-major layer 0], ...],"biases":[[...], ...]}
inline nlohmann::json mlp_to_json(const MlpParams& p) {
  nlohmann::json weights = nlohmann::json::array(), biases = nlohmann::json::array();
  for (std::size_t l = 0; l < p.layers(); ++l) {
    weights.push_back(std::vector<double>(p.weights[l].data(), p.weights[l].data() + p.weights[l].size()));
    biases.push_back(std::vector<double>(p.biases[l].data(), p.biases[l].data() + p.biases[l].size()));
  }
  return {{"dims", p.dims}, {"activation", "relu"}, {"weights", std::move(weights)}, {"biases", std::move(biases)}};
}

inline MlpParams mlp_from_json(const nlohmann::json& j) {
  MlpParams p;
  p.dims = j.at("dims").get<std::vector<int>>();
  require(j.value("activation", std::string("relu")) == "relu", ErrorCode::VersionMismatch,
          "unsupported activation");
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  require(p.dims.size() >= 2 && weights.size() + 1 == p.dims.size() && biases.size() + 1 == p.dims.size(),
          ErrorCode::DimensionMismatch, "network dims do not match layer count");
  for (std::size_t l = 0; l + 1 < p.dims.size(); ++l) {
    const auto w = weights[l].get<std::vector<double>>();
    const auto b = biases[l].get<std::vector<double>>();
    require(w.size() == static_cast<std::size_t>(p.dims[l + 1]) * p.dims[l] &&
                b.size() == static_cast<std::size_t>(p.dims[l + 1]),
            ErrorCode::DimensionMismatch, "layer " + std::to_string(l) + " has the wrong size");
    p.weights.push_back(Eigen::Map<const RowMatrix>(w.data(), p.dims[l + 1], p.dims[l]));
    p.biases.push_back(Eigen::Map<const Eigen::VectorXd>(b.data(), p.dims[l + 1]));
  }
  p.check();
  return p;
}

}  // namespace socnav
