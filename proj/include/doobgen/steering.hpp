#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "doobgen/error.hpp"
#include "doobgen/matrix.hpp"
#include "doobgen/mixture.hpp"
#include "doobgen/nn.hpp"
#include "doobgen/schedule.hpp"

namespace doobgen {

/// Anything that can evaluate s(t, x) for a batch of states. Times are in
/// physical units on [0, T).
class SteeringSource {
 public:
  virtual ~SteeringSource() = default;
  virtual std::size_t dim() const = 0;
  virtual Matrix evaluate(std::span<const double> times, const Matrix& states) const = 0;

  Matrix evaluate(double t, const Matrix& states) const {
    const std::vector<double> times(states.rows(), t);
    return evaluate(times, states);
  }

  FieldCoefficients evaluate(double t, std::span<const double> x) const {
    Matrix m(1, x.size());
    m.set_row(0, x);
    return evaluate(t, m).data();
  }
};

/// Closed-form mixture steering.
class AnalyticSteering final : public SteeringSource {
 public:
  using SteeringSource::evaluate;
  AnalyticSteering(MixtureTarget target, ProcessSpec spec) : target_(std::move(target)), spec_(std::move(spec)) {
    detail::require<ShapeError>(target_.dim() == spec_.dim(), "AnalyticSteering: dimension mismatch");
  }

  std::size_t dim() const override { return spec_.dim(); }

  Matrix evaluate(std::span<const double> times, const Matrix& states) const override {
    detail::require<ShapeError>(times.size() == states.rows(), "AnalyticSteering: one time per row required");
    Matrix out(states.rows(), states.cols());
    for (std::size_t i = 0; i < states.rows(); ++i) out.set_row(i, steering(target_, spec_, times[i], states.row(i)));
    return out;
  }

  const MixtureTarget& target() const noexcept { return target_; }

 private:
  MixtureTarget target_;
  ProcessSpec spec_;
};

/// Learned steering; the network sees t / T.
class NetworkSteering final : public SteeringSource {
 public:
  using SteeringSource::evaluate;
  NetworkSteering(std::shared_ptr<const ScoreNet> net, double horizon) : net_(std::move(net)), horizon_(horizon) {
    detail::require<ParameterError>(net_ != nullptr, "NetworkSteering: null network");
    detail::require<ParameterError>(horizon_ > 0.0, "NetworkSteering: horizon must be positive");
  }

  std::size_t dim() const override { return net_->input_dim(); }

  Matrix evaluate(std::span<const double> times, const Matrix& states) const override {
    std::vector<double> scaled(times.begin(), times.end());
    for (auto& t : scaled) t /= horizon_;
    return net_->forward(scaled, states);
  }

 private:
  std::shared_ptr<const ScoreNet> net_;
  double horizon_;
};

class ZeroSteering final : public SteeringSource {
 public:
  using SteeringSource::evaluate;
  explicit ZeroSteering(std::size_t dim) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  Matrix evaluate(std::span<const double> times, const Matrix& states) const override {
    detail::require<ShapeError>(times.size() == states.rows(), "ZeroSteering: one time per row required");
    return Matrix(states.rows(), states.cols());
  }

 private:
  std::size_t dim_;
};

}  // namespace doobgen
