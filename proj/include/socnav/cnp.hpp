#pragma once

// Conditional Neural Process: a shared encoder maps each observed
// (x, gamma, y) point to a latent vector, the latents are averaged into r,
// and a query network maps (x_q, gamma_q, r) to a diagonal Gaussian over y.
//
// The *_normalized functions operate on z-scored row matrices and are what
// training and the gradient checks use. predict() and friends take SI-unit
// ContextPoints and handle normalization through model.norm.

#include <cmath>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "socnav/dataset.hpp"
#include "socnav/error.hpp"
#include "socnav/mlp.hpp"

namespace socnav {

inline constexpr int kCheckpointVersion = 1;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

struct TrainConfig {
  int steps = 50000;
  AdamConfig adam;
  std::uint64_t seed = 1;
  int d_r = 128;
  std::vector<int> encoder_hidden{128, 128};
  std::vector<int> query_hidden{128, 128};
  double sigma_floor = 1e-4;
  ContextSampling sampling;
  // Global layout only: chance that a step conditions on exactly the phase-0
  // and phase-1 points, the context plan_global uses.
  double endpoint_context_prob = 0.5;
  // Global L2 bound on each step's gradient; 0 disables clipping.
  double grad_clip = 10.0;

  void validate() const {
    require(grad_clip >= 0.0, ErrorCode::InvalidArgument, "grad_clip must be >= 0");
    require(endpoint_context_prob >= 0.0 && endpoint_context_prob <= 1.0, ErrorCode::InvalidArgument,
            "endpoint_context_prob must be in [0, 1]");
    require(steps >= 1, ErrorCode::InvalidArgument, "steps must be >= 1");
    require(adam.learning_rate > 0, ErrorCode::InvalidArgument, "learning_rate must be > 0");
    require(sigma_floor > 0, ErrorCode::InvalidArgument, "sigma_floor must be > 0");
    require(d_r > 0, ErrorCode::InvalidArgument, "d_r must be > 0");
  }
};

struct CnpModel {
  Layout layout;
  int d_r = 128;
  double sigma_floor = 1e-4;
  NormStats norm;
  MlpParams encoder;  // point_dim -> ... -> d_r
  MlpParams query;    // input_dim + d_r -> ... -> 2 * y_dim
  // Conditioning set kept with the model (used by the local planner), SI units.
  std::vector<ContextPoint> fixed_context;

  void check() const {
    encoder.check();
    query.check();
    require(d_r > 0 && encoder.in_dim() == layout.point_dim() && encoder.out_dim() == d_r &&
                query.in_dim() == layout.input_dim() + d_r && query.out_dim() == 2 * layout.y_dim,
            ErrorCode::DimensionMismatch, "network shapes do not match the layout");
    require(norm.x.mean.size() == layout.x_dim && norm.gamma.mean.size() == layout.gamma_dim &&
                norm.y.mean.size() == layout.y_dim,
            ErrorCode::DimensionMismatch, "normalization statistics do not match the layout");
  }
};

struct GaussianPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
};

inline std::vector<int> chain_dims(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

/// Fresh model with seeded He initialization.
inline CnpModel init_cnp(const Layout& layout, const NormStats& norm, const TrainConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  CnpModel m;
  m.layout = layout;
  m.d_r = cfg.d_r;
  m.sigma_floor = cfg.sigma_floor;
  m.norm = norm;
  m.encoder = init_mlp(chain_dims(layout.point_dim(), cfg.encoder_hidden, cfg.d_r), rng);
  m.query = init_mlp(chain_dims(layout.input_dim() + cfg.d_r, cfg.query_hidden, 2 * layout.y_dim), rng);
  return m;
}

// ---------------------------------------------------------------------------
// Normalized-space primitives

inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Rows of `points` are [x, gamma, y]; returns one latent row per point.
inline RowMatrix encode_normalized(const CnpModel& model, const RowMatrix& points, MlpTrace* trace = nullptr) {
  require(points.rows() > 0, ErrorCode::EmptyContext, "context is empty");
  require(points.cols() == model.layout.point_dim(), ErrorCode::DimensionMismatch, "context width mismatch");
  return mlp_forward(model.encoder, points, trace);
}

/// Arithmetic mean of latent rows, summed in index order.
inline Eigen::VectorXd aggregate(const RowMatrix& latents) {
  require(latents.rows() > 0, ErrorCode::EmptyContext, "no latents to aggregate");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(latents.cols());
  for (Eigen::Index i = 0; i < latents.rows(); ++i) sum += latents.row(i).transpose();
  return sum / static_cast<double>(latents.rows());
}

inline RowMatrix query_inputs(const RowMatrix& inputs, const Eigen::VectorXd& r) {
  RowMatrix q(inputs.rows(), inputs.cols() + r.size());
  q.leftCols(inputs.cols()) = inputs;
  q.rightCols(r.size()) = r.transpose().replicate(inputs.rows(), 1);
  return q;
}

/// Mean and std (normalized units) for each query row of [x, gamma].
struct BatchPrediction {
  RowMatrix mean;
  RowMatrix std;
  RowMatrix raw_std;  // pre-softplus head
};

inline BatchPrediction query_normalized(const CnpModel& model, const RowMatrix& inputs, const Eigen::VectorXd& r,
                                        MlpTrace* trace = nullptr) {
  require(inputs.cols() == model.layout.input_dim(), ErrorCode::DimensionMismatch, "query width mismatch");
  const RowMatrix out = mlp_forward(model.query, query_inputs(inputs, r), trace);
  const int d = model.layout.y_dim;
  BatchPrediction p;
  p.mean = out.leftCols(d);
  p.raw_std = out.rightCols(d);
  p.std = p.raw_std.unaryExpr([&](double z) { return softplus(z) + model.sigma_floor; });
  return p;
}

/// Sum over dimensions of the independent Gaussian negative log-likelihood.
inline double nll_loss(const GaussianPrediction& pred, const Eigen::VectorXd& y) {
  require(pred.mean.size() == y.size() && pred.std.size() == y.size(), ErrorCode::DimensionMismatch,
          "prediction and target sizes differ");
  double loss = 0.0;
  for (Eigen::Index d = 0; d < y.size(); ++d) {
    const double s = pred.std(d);
    const double r = y(d) - pred.mean(d);
    loss += std::log(s) + r * r / (2.0 * s * s) + kHalfLog2Pi;
  }
  return loss;
}

/// One training example in normalized units: context rows [x, gamma, y],
/// target inputs [x, gamma] and target outputs y.
struct Batch {
  RowMatrix context;
  RowMatrix target_inputs;
  RowMatrix target_y;
};

inline Batch make_batch(const PointBlock& block, const ContextSplit& split) {
  const Eigen::Index xd = block.x.cols(), gd = block.gamma.cols(), yd = block.y.cols();
  Batch b;
  b.context.resize(static_cast<Eigen::Index>(split.context.size()), xd + gd + yd);
  for (std::size_t i = 0; i < split.context.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(split.context[i]);
    const auto r = static_cast<Eigen::Index>(i);
    b.context.block(r, 0, 1, xd) = block.x.row(row);
    b.context.block(r, xd, 1, gd) = block.gamma.row(row);
    b.context.block(r, xd + gd, 1, yd) = block.y.row(row);
  }
  b.target_inputs.resize(static_cast<Eigen::Index>(split.targets.size()), xd + gd);
  b.target_y.resize(static_cast<Eigen::Index>(split.targets.size()), yd);
  for (std::size_t i = 0; i < split.targets.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(split.targets[i]);
    const auto r = static_cast<Eigen::Index>(i);
    b.target_inputs.block(r, 0, 1, xd) = block.x.row(row);
    b.target_inputs.block(r, xd, 1, gd) = block.gamma.row(row);
    b.target_y.row(r) = block.y.row(row);
  }
  return b;
}

/// Mean NLL over target points and output dimensions.
inline double batch_loss(const CnpModel& model, const Batch& batch) {
  const Eigen::VectorXd r = aggregate(encode_normalized(model, batch.context));
  const BatchPrediction p = query_normalized(model, batch.target_inputs, r);
  require(p.mean.rows() == batch.target_y.rows() && p.mean.cols() == batch.target_y.cols(),
          ErrorCode::DimensionMismatch, "target shape mismatch");
  const auto resid = (batch.target_y - p.mean).array();
  const auto var = p.std.array().square();
  const double total = (p.std.array().log() + resid.square() / (2.0 * var)).sum() +
                       kHalfLog2Pi * static_cast<double>(p.mean.size());
  return total / static_cast<double>(p.mean.size());
}

struct CnpGradient {
  MlpParams encoder;
  MlpParams query;
};

inline CnpGradient zero_gradient(const CnpModel& model) { return {zeros_like(model.encoder), zeros_like(model.query)}; }

/// Rescales `grad` so its global L2 norm is at most `max_norm` (0 disables);
/// returns the norm before rescaling.
inline double clip_gradient(CnpGradient& grad, double max_norm) {
  double sq = 0.0;
  for (const MlpParams* g : {&grad.encoder, &grad.query})
    for (std::size_t l = 0; l < g->layers(); ++l) sq += g->weights[l].squaredNorm() + g->biases[l].squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (MlpParams* g : {&grad.encoder, &grad.query})
      for (std::size_t l = 0; l < g->layers(); ++l) {
        g->weights[l] *= scale;
        g->biases[l] *= scale;
      }
  }
  return norm;
}

/// Returns batch_loss and writes its gradient w.r.t. every parameter into
/// `grad` (overwritten).
inline double loss_and_gradient(const CnpModel& model, const Batch& batch, CnpGradient& grad) {
  grad = zero_gradient(model);
  MlpTrace enc_trace, query_trace;
  const RowMatrix latents = encode_normalized(model, batch.context, &enc_trace);
  const Eigen::VectorXd r = aggregate(latents);
  const BatchPrediction p = query_normalized(model, batch.target_inputs, r, &query_trace);

  const double count = static_cast<double>(p.mean.size());
  const auto resid = (batch.target_y - p.mean).array();
  const auto s = p.std.array();
  const double loss =
      ((s.log() + resid.square() / (2.0 * s.square())).sum() + kHalfLog2Pi * count) / count;

  const int d = model.layout.y_dim;
  RowMatrix d_out(p.mean.rows(), 2 * d);
  d_out.leftCols(d) = (-resid / s.square() / count).matrix();
  const RowMatrix d_sigma = ((1.0 / s - resid.square() / s.cube()) / count).matrix();
  d_out.rightCols(d) = d_sigma.cwiseProduct(p.raw_std.unaryExpr([](double z) { return sigmoid(z); }));

  const RowMatrix d_query_in = mlp_backward(model.query, query_trace, d_out, grad.query);
  const Eigen::VectorXd d_r = d_query_in.rightCols(model.d_r).colwise().sum().transpose();
  // d(mean)/d(latent_i) = 1/k for each of the k context latents.
  const RowMatrix d_latents =
      (d_r / static_cast<double>(latents.rows())).transpose().replicate(latents.rows(), 1);
  mlp_backward(model.encoder, enc_trace, d_latents, grad.encoder);
  return loss;
}

// ---------------------------------------------------------------------------
// SI-unit interface

inline RowMatrix normalized_context(const CnpModel& model, const std::vector<ContextPoint>& context) {
  require(!context.empty(), ErrorCode::EmptyContext, "context is empty");
  const PointBlock b = normalize_block(to_block(context, model.layout), model.norm);
  RowMatrix rows(b.size(), model.layout.point_dim());
  rows << b.x, b.gamma, b.y;
  return rows;
}

/// Latents of SI-unit context points (normalized with the model's stats).
inline RowMatrix encode(const CnpModel& model, const std::vector<ContextPoint>& context) {
  return encode_normalized(model, normalized_context(model, context));
}

/// r_AVG for a context; reuse it across many queries.
inline Eigen::VectorXd condition(const CnpModel& model, const std::vector<ContextPoint>& context) {
  return aggregate(encode(model, context));
}

struct Query {
  std::vector<double> x;
  std::vector<double> gamma;
};

inline std::vector<GaussianPrediction> predict_conditioned(const CnpModel& model, const Eigen::VectorXd& r,
                                                           const std::vector<Query>& queries) {
  const Layout& L = model.layout;
  require(r.size() == model.d_r, ErrorCode::DimensionMismatch, "latent size mismatch");
  RowMatrix inputs(static_cast<Eigen::Index>(queries.size()), L.input_dim());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    require(static_cast<int>(q.x.size()) == L.x_dim && static_cast<int>(q.gamma.size()) == L.gamma_dim,
            ErrorCode::DimensionMismatch, std::string("query does not match the ") + to_string(L.mode) + " layout");
    const auto row = static_cast<Eigen::Index>(i);
    const Eigen::VectorXd xn = model.norm.x.apply(Eigen::Map<const Eigen::VectorXd>(q.x.data(), L.x_dim));
    const Eigen::VectorXd gn =
        model.norm.gamma.apply(Eigen::Map<const Eigen::VectorXd>(q.gamma.data(), L.gamma_dim));
    inputs.block(row, 0, 1, L.x_dim) = xn.transpose();
    inputs.block(row, L.x_dim, 1, L.gamma_dim) = gn.transpose();
  }
  const BatchPrediction p = query_normalized(model, inputs, r);
  std::vector<GaussianPrediction> out;
  out.reserve(queries.size());
  for (Eigen::Index i = 0; i < p.mean.rows(); ++i) {
    GaussianPrediction g;
    g.mean = model.norm.y.invert(p.mean.row(i).transpose());
    g.std = p.std.row(i).transpose().cwiseProduct(model.norm.y.std);
    out.push_back(std::move(g));
  }
  return out;
}

inline std::vector<GaussianPrediction> predict_many(const CnpModel& model, const std::vector<ContextPoint>& context,
                                                    const std::vector<Query>& queries) {
  return predict_conditioned(model, condition(model, context), queries);
}

/// Gaussian over SM(x_q) given the context, in SI units.
inline GaussianPrediction predict(const CnpModel& model, const std::vector<ContextPoint>& context,
                                  const std::vector<double>& x_q, const std::vector<double>& gamma_q) {
  return predict_many(model, context, {{x_q, gamma_q}}).front();
}

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
  CnpModel model;
  std::vector<double> losses;  // one per step
};

/// Mean of the last `window` entries ending at `end` (exclusive).
inline double windowed_mean(const std::vector<double>& v, std::size_t end, std::size_t window) {
  const std::size_t begin = end > window ? end - window : 0;
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += v[i];
  return end > begin ? s / static_cast<double>(end - begin) : 0.0;
}

/// Replaces the context with the first and last points; both join the targets.
inline ContextSplit endpoint_split(const ContextSplit& sampled, std::size_t n_points) {
  const std::size_t first = 0, last = n_points - 1;
  ContextSplit out;
  out.context = {first, last};
  out.targets = out.context;
  for (std::size_t i : sampled.targets)
    if (i != first && i != last) out.targets.push_back(i);
  return out;
}

/// Each step draws one demonstration uniformly, samples a context/target
/// split from it, and takes an Adam step on the mean target NLL with the
/// gradient clipped to grad_clip. Global-layout steps swap in the endpoint
/// context with probability endpoint_context_prob.
template <typename Progress>
TrainResult train(const PointSet& data, const TrainConfig& cfg, Progress&& progress) {
  cfg.validate();
  require(!data.demos.empty(), ErrorCode::InvalidArgument, "training set is empty");
  TrainResult res{init_cnp(data.layout, data.norm, cfg), {}};
  res.losses.reserve(static_cast<std::size_t>(cfg.steps));
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> pick(0, data.demos.size() - 1);
  std::uniform_real_distribution<double> anchor(0.0, 1.0);
  const bool anchored = data.layout.mode == Mode::Global && cfg.endpoint_context_prob > 0.0;
  Adam enc_opt(res.model.encoder, cfg.adam), query_opt(res.model.query, cfg.adam);
  CnpGradient grad;
  for (int step = 0; step < cfg.steps; ++step) {
    const PointBlock& block = data.demos[pick(rng)];
    const auto n_points = static_cast<std::size_t>(block.size());
    ContextSplit split = sample_context(n_points, rng, cfg.sampling);
    if (anchored && anchor(rng) < cfg.endpoint_context_prob) split = endpoint_split(split, n_points);
    const double loss = loss_and_gradient(res.model, make_batch(block, split), grad);
    clip_gradient(grad, cfg.grad_clip);
    enc_opt.update(res.model.encoder, grad.encoder);
    query_opt.update(res.model.query, grad.query);
    res.losses.push_back(loss);
    progress(step, loss);
  }
  return res;
}

inline TrainResult train(const PointSet& data, const TrainConfig& cfg) {
  return train(data, cfg, [](int, double) {});
}

// ---------------------------------------------------------------------------
// Checkpoints

inline Json channel_to_json(const ChannelStats& c) {
  return {{"mean", std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size())},
          {"std", std::vector<double>(c.std.data(), c.std.data() + c.std.size())}};
}

inline ChannelStats channel_from_json(const Json& j) {
  const auto m = j.at("mean").get<std::vector<double>>();
  const auto s = j.at("std").get<std::vector<double>>();
  require(m.size() == s.size(), ErrorCode::DimensionMismatch, "norm stats mean/std sizes differ");
  return {Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size())),
          Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()))};
}

inline Json norm_to_json(const NormStats& n) {
  return {{"x", channel_to_json(n.x)}, {"gamma", channel_to_json(n.gamma)}, {"y", channel_to_json(n.y)}};
}

inline NormStats norm_from_json(const Json& j) {
  return {channel_from_json(j.at("x")), channel_from_json(j.at("gamma")), channel_from_json(j.at("y"))};
}

inline Json points_to_json(const std::vector<ContextPoint>& pts) {
  Json out = Json::array();
  for (const auto& p : pts) out.push_back({{"x", p.x}, {"gamma", p.gamma}, {"y", p.y}});
  return out;
}

inline std::vector<ContextPoint> points_from_json(const Json& j) {
  std::vector<ContextPoint> out;
  for (const auto& p : j)
    out.push_back({p.at("x").get<std::vector<double>>(), p.at("gamma").get<std::vector<double>>(),
                   p.at("y").get<std::vector<double>>()});
  return out;
}

inline Json model_to_json(const CnpModel& m) {
  return {{"version", kCheckpointVersion},
          {"kind", "cnp"},
          {"layout", to_string(m.layout.mode)},
          {"d_r", m.d_r},
          {"sigma_floor", m.sigma_floor},
          {"norm_stats", norm_to_json(m.norm)},
          {"encoder", mlp_to_json(m.encoder)},
          {"query", mlp_to_json(m.query)},
          {"context", points_to_json(m.fixed_context)}};
}

inline CnpModel model_from_json(const Json& j) {
  require(j.is_object() && j.contains("version") && j.at("version").is_number_integer() &&
              j.at("version").get<int>() == kCheckpointVersion && j.value("kind", std::string("cnp")) == "cnp",
          ErrorCode::VersionMismatch, "not a version-1 CNP checkpoint");
  try {
    CnpModel m;
    m.layout = layout_for(mode_from_string(j.at("layout").get<std::string>()));
    m.d_r = j.at("d_r").get<int>();
    m.sigma_floor = j.at("sigma_floor").get<double>();
    m.norm = norm_from_json(j.at("norm_stats"));
    m.encoder = mlp_from_json(j.at("encoder"));
    m.query = mlp_from_json(j.at("query"));
    if (j.contains("context")) m.fixed_context = points_from_json(j.at("context"));
    m.check();
    for (const auto& p : m.fixed_context) check_point(p, m.layout);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedRecordError(1, e.what());
  }
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::VersionMismatch, path + " is not a readable checkpoint");
  }
}

inline void write_json_file(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  out << j.dump() << '\n';
  if (!out) fail(ErrorCode::Io, "write failed for " + path);
}

inline void save_model(const CnpModel& m, const std::string& path) { write_json_file(model_to_json(m), path); }
inline CnpModel load_model(const std::string& path) { return model_from_json(read_json_file(path)); }

/// Throws DimensionMismatch unless the model was trained for `mode`.
inline void require_layout(const CnpModel& m, Mode mode) {
  require(m.layout.mode == mode, ErrorCode::DimensionMismatch,
          std::string("model has ") + to_string(m.layout.mode) + " layout, expected " + to_string(mode));
}

}  // namespace socnav
