#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <nlohmann/json.hpp>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "doobgen/error.hpp"
#include "doobgen/matrix.hpp"
#include "doobgen/random.hpp"

namespace doobgen {

/// Architecture of the FiLM-conditioned residual score network.
struct NetConfig {
  std::size_t input_dim = 1;   // D
  std::size_t hidden = 64;     // H
  std::size_t blocks = 3;      // B
  std::size_t embed = 32;      // E, even
  Seed seed = 0;

  /// Default width/depth for a D-dimensional problem.
  static NetConfig for_dimension(std::size_t D, Seed seed) {
    NetConfig cfg;
    cfg.input_dim = D;
    cfg.hidden = std::max<std::size_t>(64, 2 * D);
    cfg.blocks = D <= 128 ? 3 : 4;
    cfg.embed = 32;
    cfg.seed = seed;
    return cfg;
  }

  void validate() const {
    detail::require<ParameterError>(input_dim > 0 && hidden > 0 && blocks > 0 && embed > 0,
                                    "NetConfig: all sizes must be positive");
    detail::require<ParameterError>(embed % 2 == 0, "NetConfig: time embedding size must be even");
  }

  std::size_t block_size() const { return 4 * hidden + 2 * hidden * hidden + 2 * hidden * embed + 2 * hidden; }

  std::size_t parameter_count() const {
    return embed * embed + embed                      // time MLP
           + hidden * input_dim + hidden              // input projection
           + blocks * block_size()                    // residual blocks
           + input_dim * hidden + input_dim;          // output projection
  }

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

namespace nn_detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using MapRowMat = Eigen::Map<RowMat>;
using CMapRowMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Vec>;
using CMapVec = Eigen::Map<const Vec>;

inline constexpr double layer_norm_eps = 1e-5;
inline constexpr double time_scale = 1000.0;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

/// Offsets of every tensor inside the flat parameter buffer.
struct Layout {
  struct Block {
    std::size_t ln_gain, ln_bias, w1, b1, w2, b2, film_scale_w, film_scale_b, film_shift_w, film_shift_b;
  };
  std::size_t time_w, time_b, in_w, in_b, out_w, out_b;
  std::vector<Block> blocks;

  explicit Layout(const NetConfig& c) {
    std::size_t off = 0;
    auto take = [&off](std::size_t n) {
      const std::size_t o = off;
      off += n;
      return o;
    };
    const std::size_t D = c.input_dim, H = c.hidden, E = c.embed;
    time_w = take(E * E);
    time_b = take(E);
    in_w = take(H * D);
    in_b = take(H);
    blocks.resize(c.blocks);
    for (auto& b : blocks) {
      b.ln_gain = take(H);
      b.ln_bias = take(H);
      b.w1 = take(H * H);
      b.b1 = take(H);
      b.w2 = take(H * H);
      b.b2 = take(H);
      b.film_scale_w = take(H * E);
      b.film_scale_b = take(H);
      b.film_shift_w = take(H * E);
      b.film_shift_b = take(H);
    }
    out_w = take(D * H);
    out_b = take(D);
  }
};

}  // namespace nn_detail

/// One training example for the weighted regression objective.
struct RegressionBatch {
  std::vector<double> times;  // network time input, already scaled to [0, 1]
  Matrix inputs;              // N x D
  Matrix targets;             // N x D
  Matrix weights;             // N x D, per-coordinate loss weights
};

/// FiLM-conditioned residual MLP mapping (t, x) in [0,1] x R^D to R^D.
///
/// t -> sinusoidal features -> dense E->E -> GELU gives the time embedding.
/// x -> dense D->H, then B pre-LayerNorm residual blocks
///   h += W2 GELU((1 + scale(emb)) * (W1 LN(h) + b1) + shift(emb)) + b2,
/// then dense H->D. The output layer starts at zero so an untrained network
/// returns 0 everywhere.
class ScoreNet {
 public:
  explicit ScoreNet(const NetConfig& config) : config_(config), layout_(config) {
    config_.validate();
    params_.assign(config_.parameter_count(), 0.0);
    initialise();
  }

  ScoreNet(const NetConfig& config, std::vector<double> params) : config_(config), layout_(config) {
    config_.validate();
    detail::require<ShapeError>(params.size() == config_.parameter_count(),
                                "ScoreNet: parameter vector has " + std::to_string(params.size()) +
                                    " entries, config requires " + std::to_string(config_.parameter_count()));
    params_ = std::move(params);
  }

  const NetConfig& config() const noexcept { return config_; }
  std::size_t input_dim() const noexcept { return config_.input_dim; }
  std::span<const double> params() const noexcept { return params_; }
  std::span<double> params() noexcept { return params_; }
  const nn_detail::Layout& layout() const noexcept { return layout_; }

  /// Network output for a single (t, x).
  std::vector<double> forward(double t, std::span<const double> x) const {
    detail::require<ShapeError>(x.size() == config_.input_dim, "ScoreNet::forward: input dimension mismatch");
    Matrix in(1, x.size());
    in.set_row(0, x);
    const Matrix out = forward(std::vector<double>{t}, in);
    return {out.data().begin(), out.data().end()};
  }

  /// Batched forward pass; row i of `inputs` is evaluated at times[i].
  Matrix forward(std::span<const double> times, const Matrix& inputs) const {
    check_batch(times, inputs);
    Cache cache;
    run_forward(times, inputs, cache);
    Matrix out(inputs.rows(), config_.input_dim);
    nn_detail::MapRowMat(out.data().data(), out.rows(), out.cols()) = cache.out.transpose();
    return out;
  }

  /// Forward pass with a common time for every row.
  Matrix forward(double t, const Matrix& inputs) const {
    const std::vector<double> times(inputs.rows(), t);
    return forward(times, inputs);
  }

  /// Loss (1/N) sum_i sum_j w_ij (f(t_i, x_i)_j - target_ij)^2 and its exact gradient.
  double loss_and_gradient(const RegressionBatch& batch, std::vector<double>& grad) const;

  double loss(const RegressionBatch& batch) const {
    check_regression(batch);
    Cache cache;
    run_forward(batch.times, batch.inputs, cache);
    return weighted_loss(batch, cache.out);
  }

 private:
  struct Cache {
    nn_detail::Mat emb, time_pre, time_act, x;
    std::vector<nn_detail::Mat> h, xhat, z, p1, scale, shift, p2, act;
    std::vector<nn_detail::Vec> inv_std;  // per sample, per block
    nn_detail::Mat out;
  };

  void initialise() {
    Rng rng(config_.seed);
    auto fill_uniform = [&](std::size_t off, std::size_t n, std::size_t fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (std::size_t i = 0; i < n; ++i) params_[off + i] = rng.uniform(-bound, bound);
    };
    const std::size_t D = config_.input_dim, H = config_.hidden, E = config_.embed;
    fill_uniform(layout_.time_w, E * E, E);
    fill_uniform(layout_.in_w, H * D, D);
    for (const auto& b : layout_.blocks) {
      for (std::size_t i = 0; i < H; ++i) params_[b.ln_gain + i] = 1.0;
      fill_uniform(b.w1, H * H, H);
      fill_uniform(b.w2, H * H, H);
      fill_uniform(b.film_scale_w, H * E, E);
      fill_uniform(b.film_shift_w, H * E, E);
    }
    // Output projection stays zero.
  }

  void check_batch(std::span<const double> times, const Matrix& inputs) const {
    detail::require<ShapeError>(inputs.cols() == config_.input_dim, "ScoreNet: input dimension mismatch");
    detail::require<ShapeError>(times.size() == inputs.rows(), "ScoreNet: one time per input row required");
  }

  void check_regression(const RegressionBatch& b) const {
    detail::require<InputError>(b.inputs.rows() > 0, "ScoreNet: empty batch");
    check_batch(b.times, b.inputs);
    detail::require<ShapeError>(b.targets.rows() == b.inputs.rows() && b.targets.cols() == config_.input_dim,
                                "ScoreNet: target shape mismatch");
    detail::require<ShapeError>(b.weights.rows() == b.inputs.rows() && b.weights.cols() == config_.input_dim,
                                "ScoreNet: weight shape mismatch");
    auto finite = [](const std::vector<double>& v) {
      for (double d : v) {
        if (!std::isfinite(d)) return false;
      }
      return true;
    };
    if (!finite(b.times) || !finite(b.inputs.data()) || !finite(b.targets.data()) || !finite(b.weights.data())) {
      throw NumericError("ScoreNet: non-finite value in regression batch");
    }
  }

  nn_detail::CMapRowMat mat(std::size_t off, std::size_t rows, std::size_t cols) const {
    return {params_.data() + off, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
  }
  nn_detail::CMapVec vec(std::size_t off, std::size_t n) const {
    return {params_.data() + off, static_cast<Eigen::Index>(n)};
  }

  void run_forward(std::span<const double> times, const Matrix& inputs, Cache& c) const {
    using namespace nn_detail;
    const auto N = static_cast<Eigen::Index>(inputs.rows());
    const std::size_t D = config_.input_dim, H = config_.hidden, E = config_.embed;
    const std::size_t half = E / 2;

    c.emb.resize(static_cast<Eigen::Index>(E), N);
    for (Eigen::Index i = 0; i < N; ++i) {
      for (std::size_t k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
        const double angle = time_scale * times[static_cast<std::size_t>(i)] * freq;
        c.emb(static_cast<Eigen::Index>(k), i) = std::sin(angle);
        c.emb(static_cast<Eigen::Index>(k + half), i) = std::cos(angle);
      }
    }
    c.time_pre = mat(layout_.time_w, E, E) * c.emb;
    c.time_pre.colwise() += vec(layout_.time_b, E);
    c.time_act = c.time_pre.unaryExpr(&gelu);

    c.x = CMapRowMat(inputs.data().data(), N, static_cast<Eigen::Index>(D)).transpose();
    Mat h = mat(layout_.in_w, H, D) * c.x;
    h.colwise() += vec(layout_.in_b, H);

    const std::size_t B = config_.blocks;
    c.h.assign(B + 1, Mat());
    c.xhat.assign(B, Mat());
    c.z.assign(B, Mat());
    c.p1.assign(B, Mat());
    c.scale.assign(B, Mat());
    c.shift.assign(B, Mat());
    c.p2.assign(B, Mat());
    c.act.assign(B, Mat());
    c.inv_std.assign(B, Vec());
    c.h[0] = h;
    const double Hd = static_cast<double>(H);
    for (std::size_t b = 0; b < B; ++b) {
      const auto& L = layout_.blocks[b];
      const Mat& hin = c.h[b];
      Vec mean = hin.colwise().sum().transpose() / Hd;
      Mat centred = hin.rowwise() - mean.transpose();
      Vec var = centred.colwise().squaredNorm().transpose() / Hd;
      c.inv_std[b] = (var.array() + layer_norm_eps).rsqrt().matrix();
      c.xhat[b] = centred * c.inv_std[b].asDiagonal();
      c.z[b] = vec(L.ln_gain, H).asDiagonal() * c.xhat[b];
      c.z[b].colwise() += vec(L.ln_bias, H);
      c.p1[b] = mat(L.w1, H, H) * c.z[b];
      c.p1[b].colwise() += vec(L.b1, H);
      c.scale[b] = mat(L.film_scale_w, H, E) * c.time_act;
      c.scale[b].colwise() += vec(L.film_scale_b, H);
      c.shift[b] = mat(L.film_shift_w, H, E) * c.time_act;
      c.shift[b].colwise() += vec(L.film_shift_b, H);
      c.p2[b] = ((c.scale[b].array() + 1.0) * c.p1[b].array() + c.shift[b].array()).matrix();
      c.act[b] = c.p2[b].unaryExpr(&gelu);
      Mat p3 = mat(L.w2, H, H) * c.act[b];
      p3.colwise() += vec(L.b2, H);
      c.h[b + 1] = hin + p3;
    }
    c.out = mat(layout_.out_w, D, H) * c.h[B];
    c.out.colwise() += vec(layout_.out_b, D);
  }

  static double weighted_loss(const RegressionBatch& b, const nn_detail::Mat& out) {
    const std::size_t N = b.inputs.rows(), D = b.inputs.cols();
    double total = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t j = 0; j < D; ++j) {
        const double r = out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) - b.targets(i, j);
        total += b.weights(i, j) * r * r;
      }
    }
    return total / static_cast<double>(N);
  }

  NetConfig config_;
  nn_detail::Layout layout_;
  std::vector<double> params_;
};

inline double ScoreNet::loss_and_gradient(const RegressionBatch& batch, std::vector<double>& grad) const {
  using namespace nn_detail;
  check_regression(batch);
  Cache c;
  run_forward(batch.times, batch.inputs, c);
  const double loss = weighted_loss(batch, c.out);

  const auto N = static_cast<Eigen::Index>(batch.inputs.rows());
  const std::size_t D = config_.input_dim, H = config_.hidden, E = config_.embed, B = config_.blocks;
  const double Hd = static_cast<double>(H);
  grad.assign(params_.size(), 0.0);
  auto gmat = [&](std::size_t off, std::size_t rows, std::size_t cols) {
    return MapRowMat(grad.data() + off, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  };
  auto gvec = [&](std::size_t off, std::size_t n) { return MapVec(grad.data() + off, static_cast<Eigen::Index>(n)); };

  // dL/d out
  Mat d_out(static_cast<Eigen::Index>(D), N);
  const double scale = 2.0 / static_cast<double>(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < D; ++j) {
      const auto si = static_cast<std::size_t>(i);
      d_out(static_cast<Eigen::Index>(j), i) =
          scale * batch.weights(si, j) * (c.out(static_cast<Eigen::Index>(j), i) - batch.targets(si, j));
    }
  }

  gmat(layout_.out_w, D, H) = d_out * c.h[B].transpose();
  gvec(layout_.out_b, D) = d_out.rowwise().sum();
  Mat dh = mat(layout_.out_w, D, H).transpose() * d_out;
  Mat d_time = Mat::Zero(static_cast<Eigen::Index>(E), N);

  for (std::size_t bi = B; bi-- > 0;) {
    const auto& L = layout_.blocks[bi];
    // h_{b+1} = h_b + W2 act + b2
    gmat(L.w2, H, H) = dh * c.act[bi].transpose();
    gvec(L.b2, H) = dh.rowwise().sum();
    Mat d_act = mat(L.w2, H, H).transpose() * dh;
    Mat d_p2 = (d_act.array() * c.p2[bi].unaryExpr(&gelu_grad).array()).matrix();
    Mat d_p1 = (d_p2.array() * (c.scale[bi].array() + 1.0)).matrix();
    Mat d_scale = (d_p2.array() * c.p1[bi].array()).matrix();
    const Mat& d_shift = d_p2;
    gmat(L.film_scale_w, H, E) = d_scale * c.time_act.transpose();
    gvec(L.film_scale_b, H) = d_scale.rowwise().sum();
    gmat(L.film_shift_w, H, E) = d_shift * c.time_act.transpose();
    gvec(L.film_shift_b, H) = d_shift.rowwise().sum();
    d_time.noalias() += mat(L.film_scale_w, H, E).transpose() * d_scale;
    d_time.noalias() += mat(L.film_shift_w, H, E).transpose() * d_shift;
    gmat(L.w1, H, H) = d_p1 * c.z[bi].transpose();
    gvec(L.b1, H) = d_p1.rowwise().sum();
    Mat d_z = mat(L.w1, H, H).transpose() * d_p1;
    gvec(L.ln_gain, H) = (d_z.array() * c.xhat[bi].array()).rowwise().sum().matrix();
    gvec(L.ln_bias, H) = d_z.rowwise().sum();
    Mat d_xhat = vec(L.ln_gain, H).asDiagonal() * d_z;
    // LayerNorm backward, column by column.
    Eigen::RowVectorXd mean_d = d_xhat.colwise().sum() / Hd;
    Eigen::RowVectorXd mean_dx = (d_xhat.array() * c.xhat[bi].array()).colwise().sum().matrix() / Hd;
    Mat d_ln = d_xhat.rowwise() - mean_d;
    d_ln -= (c.xhat[bi].array().rowwise() * mean_dx.array()).matrix();
    d_ln = d_ln * c.inv_std[bi].asDiagonal();
    dh += d_ln;
  }

  gmat(layout_.in_w, H, D) = dh * c.x.transpose();
  gvec(layout_.in_b, H) = dh.rowwise().sum();

  Mat d_time_pre = (d_time.array() * c.time_pre.unaryExpr(&gelu_grad).array()).matrix();
  gmat(layout_.time_w, E, E) = d_time_pre * c.emb.transpose();
  gvec(layout_.time_b, E) = d_time_pre.rowwise().sum();
  return loss;
}

/// Adam optimiser state; moment buffers mirror the flat parameter vector.
struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit AdamState(std::size_t n = 0) : first_moment(n, 0.0), second_moment(n, 0.0) {}

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Bias-corrected Adam update applied in place.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
  detail::require<ShapeError>(params.size() == grads.size() && params.size() == state.first_moment.size() &&
                                  params.size() == state.second_moment.size(),
                              "adam_step: parameter, gradient and moment sizes must agree");
  ++state.step;
  const double corr1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
    state.second_moment[i] = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.first_moment[i] / corr1;
    const double v_hat = state.second_moment[i] / corr2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

// ---------------------------------------------------------------------------
// Serialisation. See docs/checkpoint.md for the byte-level format.

namespace nn_detail {

inline void write_doubles(std::ostream& os, std::span<const double> values) {
  os << std::setprecision(17);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) os << ',';
    os << values[i];
  }
  os << '\n';
}

inline std::vector<double> read_doubles(const std::string& line, std::size_t expected, const std::string& what) {
  std::vector<double> out;
  out.reserve(expected);
  std::size_t pos = 0;
  while (pos <= line.size() && !line.empty()) {
    const std::size_t next = line.find(',', pos);
    const std::string cell = line.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw FileError(what + ": malformed number '" + cell + "'");
    }
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  if (out.size() != expected) {
    throw FileError(what + ": expected " + std::to_string(expected) + " values, found " + std::to_string(out.size()));
  }
  return out;
}

}  // namespace nn_detail

inline nlohmann::json to_json(const NetConfig& c) {
  return nlohmann::json{{"format", "doobgen-checkpoint"}, {"version", 1},       {"input_dim", c.input_dim},
                        {"hidden", c.hidden},             {"blocks", c.blocks}, {"embed", c.embed},
                        {"seed", c.seed},                 {"num_params", c.parameter_count()}};
}

inline void write_checkpoint(std::ostream& os, const ScoreNet& net) {
  os << to_json(net.config()).dump() << '\n';
  nn_detail::write_doubles(os, net.params());
}

inline void save_checkpoint(const std::string& path, const ScoreNet& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileError("cannot open checkpoint for writing: " + path);
  write_checkpoint(os, net);
  if (!os) throw FileError("failed writing checkpoint: " + path);
}

inline ScoreNet read_checkpoint(std::istream& is, const std::string& what = "checkpoint") {
  std::string header_line, body;
  if (!std::getline(is, header_line)) throw FileError(what + ": missing header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw FileError(what + ": header is not valid JSON: " + e.what());
  }
  if (header.value("format", "") != "doobgen-checkpoint") throw FileError(what + ": not a doobgen checkpoint");
  NetConfig cfg;
  try {
    cfg.input_dim = header.at("input_dim").get<std::size_t>();
    cfg.hidden = header.at("hidden").get<std::size_t>();
    cfg.blocks = header.at("blocks").get<std::size_t>();
    cfg.embed = header.at("embed").get<std::size_t>();
    cfg.seed = header.at("seed").get<Seed>();
  } catch (const nlohmann::json::exception& e) {
    throw FileError(what + ": incomplete header: " + e.what());
  }
  if (!std::getline(is, body)) throw FileError(what + ": missing parameter line");
  auto params = nn_detail::read_doubles(body, cfg.parameter_count(), what);
  return ScoreNet(cfg, std::move(params));
}

inline ScoreNet load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot open checkpoint: " + path);
  return read_checkpoint(is, path);
}

inline void write_adam_state(std::ostream& os, const AdamState& s) {
  os << nlohmann::json{{"format", "doobgen-adam"}, {"version", 1}, {"step", s.step},
                       {"beta1", s.beta1},          {"beta2", s.beta2}, {"epsilon", s.epsilon},
                       {"size", s.first_moment.size()}}
            .dump()
     << '\n';
  nn_detail::write_doubles(os, s.first_moment);
  nn_detail::write_doubles(os, s.second_moment);
}

inline AdamState read_adam_state(std::istream& is) {
  std::string header_line, m_line, v_line;
  if (!std::getline(is, header_line) || !std::getline(is, m_line) || !std::getline(is, v_line)) {
    throw FileError("optimizer state: truncated file");
  }
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw FileError(std::string("optimizer state: bad header: ") + e.what());
  }
  if (h.value("format", "") != "doobgen-adam") throw FileError("optimizer state: wrong format tag");
  const auto n = h.at("size").get<std::size_t>();
  AdamState s(n);
  s.step = h.at("step").get<std::uint64_t>();
  s.beta1 = h.at("beta1").get<double>();
  s.beta2 = h.at("beta2").get<double>();
  s.epsilon = h.at("epsilon").get<double>();
  s.first_moment = nn_detail::read_doubles(m_line, n, "optimizer state");
  s.second_moment = nn_detail::read_doubles(v_line, n, "optimizer state");
  return s;
}

}  // namespace doobgen
