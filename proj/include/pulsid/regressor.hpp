#pragma once

#include "pulsid/model.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace pulsid {

/// Square regressor of Y = Phi theta for impulses restricted to sampling
/// instants. Column 0 carries the free x2(t_1) decay e^{-b2 (t_i - t_1)};
/// column j (1..K-1) is the response z(t_i - t_j) to an impulse at t_j.
/// An impulse at t_K never reaches a sample, so it has no column.
struct RegressorMatrix {
  Eigen::MatrixXd values;
  std::vector<double> times;
  double b1 = 0.0;
  double b2 = 0.0;

  Eigen::Index size() const noexcept { return values.rows(); }
};

/// theta = [x2(t_1), d_1, ..., d_{K-1}].
struct ThetaVector {
  Eigen::VectorXd values;

  ThetaVector() = default;
  explicit ThetaVector(Eigen::VectorXd v) : values(std::move(v)) {}

  Eigen::Index size() const noexcept { return values.size(); }
  double x2_init() const { return values(0); }
  /// Weight of the impulse at sampling instant t_j, j = 1..K-1 (1-based like the times).
  double weight(Eigen::Index j) const { return values(j); }
  auto weights() const { return values.tail(values.size() - 1); }
};

inline RegressorMatrix build_phi(double b1, double b2, std::span<const double> times) {
  if (times.empty()) throw ContractError("build_phi: need at least one sampling time");
  if (!(b1 > 0.0 && b2 > 0.0 && b1 < b2) || !std::isfinite(b1) || !std::isfinite(b2))
    throw ContractError("build_phi: parameters require 0 < b1 < b2");
  detail::require_increasing(times);

  const auto k = static_cast<Eigen::Index>(times.size());
  RegressorMatrix phi;
  phi.b1 = b1;
  phi.b2 = b2;
  phi.times.assign(times.begin(), times.end());
  phi.values = Eigen::MatrixXd::Zero(k, k);

  const double t1 = times.front();
  for (Eigen::Index i = 0; i < k; ++i) {
    const double ti = times[static_cast<std::size_t>(i)];
    phi.values(i, 0) = std::exp(-b2 * (ti - t1));
    for (Eigen::Index j = 0; j < i; ++j)
      phi.values(i, j + 1) = kernel_z(b1, b2, ti - times[static_cast<std::size_t>(j)]);
  }
  return phi;
}

inline RegressorMatrix build_phi(const SystemParams& p, std::span<const double> times) {
  return build_phi(p.b1, p.b2, times);
}

inline SampledSignal predict(const RegressorMatrix& phi, const ThetaVector& theta) {
  if (theta.size() != phi.size())
    throw ContractError("predict: theta has " + std::to_string(theta.size()) +
                        " entries, regressor has " + std::to_string(phi.size()) + " columns");
  const Eigen::VectorXd y = phi.values * theta.values;
  SampledSignal out;
  out.times = phi.times;
  out.values.assign(y.data(), y.data() + y.size());
  return out;
}

/// Impulse train encoded by theta: weight j placed at t_j. Zero weights are
/// dropped unless keep_zeros is set.
inline ImpulseTrain theta_to_train(const ThetaVector& theta, std::span<const double> times,
                                   bool keep_zeros = false) {
  if (static_cast<std::size_t>(theta.size()) != times.size())
    throw ContractError("theta_to_train: size mismatch");
  ImpulseTrain train;
  for (Eigen::Index j = 1; j < theta.size(); ++j) {
    const double d = theta.values(j);
    if (keep_zeros || d != 0.0)
      train.impulses.push_back({times[static_cast<std::size_t>(j - 1)], d});
  }
  return train;
}

/// Inverse of theta_to_train for trains whose impulses sit on sampling instants
/// t_1..t_{K-1}. Throws if an impulse is off the sampling grid.
inline ThetaVector train_to_theta(const ImpulseTrain& train, double x2_init,
                                  std::span<const double> times) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(times.size()));
  if (v.size() > 0) v(0) = x2_init;
  for (const auto& imp : train) {
    auto it = std::lower_bound(times.begin(), times.end(), imp.tau);
    if (it == times.end() || *it != imp.tau)
      throw ContractError("train_to_theta: impulse not on a sampling instant");
    const auto j = static_cast<Eigen::Index>(it - times.begin());
    if (j + 1 >= v.size()) continue; // impulse at t_K has no observable effect
    v(j + 1) += imp.d;
  }
  return ThetaVector(std::move(v));
}

} // namespace pulsid
