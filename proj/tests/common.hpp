#pragma once

#include "backcalc/checks.hpp"
#include "backcalc/durations.hpp"
#include "backcalc/models.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>

namespace backcalc::testing {

// First-wave shaped fatal incidence: smooth rise, peak on `peak_day`, slower
// decline.
inline Eigen::VectorXd smooth_wave(int n, double peak_day = 30.0, double height = 600.0) {
  Eigen::VectorXd f(n);
  for (int t = 0; t < n; ++t) {
    const double s = t < peak_day ? 7.0 : 14.0;
    f(t) = 2.0 + height * std::exp(-0.5 * std::pow((t - peak_day) / s, 2));
  }
  return f;
}

// NB deaths simulated from `fc` through the delay of `dist`.
inline DeathSeries nb_series(const Eigen::VectorXd& fc, const DurationDist& dist, double theta,
                             std::uint64_t seed) {
  Rng rng = stream_rng(seed, 0);
  const Eigen::MatrixXd b = delay_matrix(dist, static_cast<int>(fc.size()));
  return DeathSeries::from_counts(simulate_nb_deaths(b, fc, theta, rng));
}

// Central differences of a scalar function.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double rel = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = rel * std::max(1.0, std::abs(x(j)));
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    g(j) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

// Central differences of a vector function, one column per coordinate.
inline Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double rel = 1e-5) {
  Eigen::MatrixXd j;
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    const double h = rel * std::max(1.0, std::abs(x(c)));
    Eigen::VectorXd xp = x, xm = x;
    xp(c) += h;
    xm(c) -= h;
    const Eigen::VectorXd d = (f(xp) - f(xm)) / (2.0 * h);
    if (c == 0) j.resize(d.size(), x.size());
    j.col(c) = d;
  }
  return j;
}

inline double rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& ref) {
  return (a - ref).cwiseAbs().maxCoeff() / std::max(ref.cwiseAbs().maxCoeff(), 1e-12);
}

}  // namespace backcalc::testing
