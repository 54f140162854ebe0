#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "doobgen/error.hpp"
#include "doobgen/matrix.hpp"
#include "doobgen/metrics.hpp"
#include "doobgen/mixture.hpp"
#include "doobgen/nn.hpp"
#include "doobgen/process.hpp"
#include "doobgen/random.hpp"
#include "doobgen/steering.hpp"

namespace doobgen {

enum class LossWeighting {
  b_star,  // w_j = beta(t) c_j^(1 - gamma), the squared action of B*(t)
  unit,    // w_j = 1
};

enum class LrSchedule { constant, cosine };

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t iterations = 2000;
  double learning_rate = 1e-3;
  LrSchedule lr_schedule = LrSchedule::constant;
  double clip_norm = 10.0;          // global gradient norm; <= 0 disables
  double time_margin = 1e-4;        // t ~ U(0, T - time_margin)
  LossWeighting weighting = LossWeighting::b_star;
  std::size_t diagnostic_every = 500;
  std::size_t diagnostic_points = 2048;
  Seed seed = 0;

  void validate() const {
    detail::require<ParameterError>(batch_size >= 1, "TrainConfig: batch size must be positive");
    detail::require<ParameterError>(learning_rate > 0.0, "TrainConfig: learning rate must be positive");
    detail::require<ParameterError>(time_margin > 0.0, "TrainConfig: time margin must be positive");
    detail::require<ParameterError>(diagnostic_every >= 1 && diagnostic_points >= 2,
                                    "TrainConfig: invalid diagnostic settings");
  }

  double lr_at(std::size_t it) const {
    if (lr_schedule == LrSchedule::constant || iterations <= 1) return learning_rate;
    const double frac = static_cast<double>(it) / static_cast<double>(iterations - 1);
    return 0.5 * learning_rate * (1.0 + std::cos(std::numbers::pi * frac));
  }
};

inline std::string to_string(LossWeighting w) { return w == LossWeighting::b_star ? "b_star" : "unit"; }
inline std::string to_string(LrSchedule s) { return s == LrSchedule::constant ? "constant" : "cosine"; }

/// Where terminal samples y come from: rows of a dataset or an analytic sampler.
class TargetSource {
 public:
  static TargetSource from_dataset(Matrix rows) {
    detail::require<InputError>(rows.rows() > 0, "TargetSource: empty dataset");
    auto data = std::make_shared<const Matrix>(std::move(rows));
    return TargetSource(data->cols(), [data](Rng& rng) {
      const auto i = static_cast<std::size_t>(rng.next_u64() % data->rows());
      const auto r = data->row(i);
      return FieldCoefficients(r.begin(), r.end());
    });
  }

  static TargetSource from_mixture(MixtureTarget target) {
    auto t = std::make_shared<const MixtureTarget>(std::move(target));
    return TargetSource(t->dim(), [t](Rng& rng) { return sample_target(*t, rng); });
  }

  std::size_t dim() const noexcept { return dim_; }
  FieldCoefficients draw(Rng& rng) const { return draw_(rng); }

 private:
  TargetSource(std::size_t dim, std::function<FieldCoefficients(Rng&)> draw) : dim_(dim), draw_(std::move(draw)) {}
  std::size_t dim_;
  std::function<FieldCoefficients(Rng&)> draw_;
};

/// Tuples (t, x, y, transition score, weights); row i is one LossSample.
struct LossBatch {
  std::vector<double> times;
  Matrix states;
  Matrix endpoints;
  Matrix target_scores;
  Matrix weights;

  std::size_t size() const noexcept { return times.size(); }
};

inline std::vector<double> loss_weights(const ProcessSpec& spec, double t, LossWeighting mode) {
  std::vector<double> w(spec.dim(), 1.0);
  if (mode == LossWeighting::b_star) {
    const double b = spec.schedule().beta(t);
    for (std::size_t j = 0; j < spec.dim(); ++j) w[j] = b * spec.diffusion_eigenvalue(j);
  }
  return w;
}

/// n i.i.d. bridge-disintegrated samples; sample i uses derive_seed(seed, i).
inline LossBatch make_batch(const TargetSource& source, const ProcessSpec& spec, std::size_t n, Seed seed,
                            double time_margin = 1e-4, LossWeighting weighting = LossWeighting::b_star) {
  detail::require<InputError>(n >= 1, "make_batch: n must be at least 1");
  detail::require<ShapeError>(source.dim() == spec.dim(), "make_batch: target/process dimension mismatch");
  detail::require<ParameterError>(time_margin >= score_singularity_margin && time_margin < spec.horizon(),
                                  "make_batch: invalid time margin");
  const std::size_t D = spec.dim();
  LossBatch b{std::vector<double>(n), Matrix(n, D), Matrix(n, D), Matrix(n, D), Matrix(n, D)};
  const double t_max = spec.horizon() - time_margin;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    const auto y = source.draw(rng);
    const double t = rng.uniform(0.0, t_max);
    const auto p = bridge_sample(spec, y, t, rng);
    b.times[i] = t;
    b.states.set_row(i, p.x);
    b.endpoints.set_row(i, y);
    b.target_scores.set_row(i, transition_score(spec, p.x, t, y));
    b.weights.set_row(i, loss_weights(spec, t, weighting));
  }
  return b;
}

/// The network-facing regression problem: times scaled to [0, 1].
inline RegressionBatch to_regression(const LossBatch& b, double horizon) {
  RegressionBatch r{b.times, b.states, b.target_scores, b.weights};
  for (auto& t : r.times) t /= horizon;
  return r;
}

/// T * mean_i sum_j w_ij (s(t_i, x_i)_j - target_ij)^2.
inline double loss_estimate(const SteeringSource& model, const LossBatch& b, const ProcessSpec& spec) {
  detail::require<InputError>(b.size() > 0, "loss_estimate: empty batch");
  const Matrix s = model.evaluate(b.times, b.states);
  double total = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    for (std::size_t j = 0; j < spec.dim(); ++j) {
      const double r = s(i, j) - b.target_scores(i, j);
      total += b.weights(i, j) * r * r;
    }
  }
  return spec.horizon() * total / static_cast<double>(b.size());
}

inline double loss_estimate(const ScoreNet& net, const LossBatch& b, const ProcessSpec& spec) {
  return spec.horizon() * net.loss(to_regression(b, spec.horizon()));
}

struct TracePoint {
  std::size_t iteration = 0;
  double value = 0.0;
};

struct TrainResult {
  std::vector<TracePoint> loss;
  std::vector<TracePoint> score_error;  // empty unless an analytic target is supplied
  std::size_t completed = 0;
  bool aborted = false;
  std::string abort_reason;
};

/// Adam on the Monte-Carlo score-matching loss. On a non-finite loss or gradient
/// the loop stops and `net` keeps the last finite parameters.
///
/// With `analytic` set, E||s_theta - s||^2 is evaluated on a fresh set of
/// diagnostic_points bridge points at iteration 0, every diagnostic_every
/// iterations and at the end.
inline TrainResult train(ScoreNet& net, const TargetSource& source, const ProcessSpec& spec, const TrainConfig& cfg,
                         const MixtureTarget* analytic = nullptr, AdamState* state = nullptr,
                         const std::function<void(std::size_t, double)>& progress = {}) {
  cfg.validate();
  detail::require<ShapeError>(net.input_dim() == spec.dim() && source.dim() == spec.dim(),
                              "train: network, target and process dimensions must agree");
  AdamState local(net.params().size());
  AdamState& adam = state ? *state : local;
  detail::require<ShapeError>(adam.first_moment.size() == net.params().size(), "train: optimiser state size mismatch");

  const Seed batch_root = derive_seed(cfg.seed, 0);
  const Seed diag_root = derive_seed(cfg.seed, 1);
  const double T = spec.horizon();
  TrainResult res;

  auto diagnose = [&](std::size_t it) {
    if (!analytic) return;
    // Non-owning view; the network outlives this call.
    const NetworkSteering model(std::shared_ptr<const ScoreNet>(&net, [](const ScoreNet*) {}), T);
    const auto est = score_error(*analytic, model, spec, cfg.diagnostic_points,
                                 derive_seed(diag_root, it / cfg.diagnostic_every), cfg.time_margin);
    res.score_error.push_back({it, est.value});
  };

  std::vector<double> grad;
  std::vector<double> last_good(net.params().begin(), net.params().end());
  diagnose(0);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const auto batch = make_batch(source, spec, cfg.batch_size, derive_seed(batch_root, it), cfg.time_margin,
                                  cfg.weighting);
    const double loss = T * net.loss_and_gradient(to_regression(batch, T), grad);
    double norm_sq = 0.0;
    for (auto& g : grad) {
      g *= T;
      norm_sq += g * g;
    }
    if (!std::isfinite(loss) || !std::isfinite(norm_sq)) {
      res.aborted = true;
      res.abort_reason = "non-finite loss at iteration " + std::to_string(it);
      std::copy(last_good.begin(), last_good.end(), net.params().begin());
      break;
    }
    std::copy(net.params().begin(), net.params().end(), last_good.begin());
    if (cfg.clip_norm > 0.0 && norm_sq > cfg.clip_norm * cfg.clip_norm) {
      const double k = cfg.clip_norm / std::sqrt(norm_sq);
      for (auto& g : grad) g *= k;
    }
    adam_step(net.params(), grad, adam, cfg.lr_at(it));
    res.loss.push_back({it, loss});
    res.completed = it + 1;
    if (progress) progress(it, loss);
    if (res.completed % cfg.diagnostic_every == 0 && res.completed < cfg.iterations) diagnose(res.completed);
  }
  if (res.completed > 0 && (res.score_error.empty() || res.score_error.back().iteration != res.completed)) {
    diagnose(res.completed);
  }
  return res;
}

}  // namespace doobgen
