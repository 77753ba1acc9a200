#pragma once

#include <Eigen/Dense>

#include <functional>

namespace backcalc::detail {

struct SimplexResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Derivative-free minimization (GSL nmsimplex2). `objective` may return
// +inf or NaN to reject a point.
SimplexResult simplex_minimize(const std::function<double(const Eigen::VectorXd&)>& objective,
                               const Eigen::VectorXd& start, double step,
                               int max_iter = 5000, double size_tol = 1e-8);

}  // namespace backcalc::detail
