#pragma once

#include "backcalc/errors.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace backcalc {

enum class SmoothKind { cubic, cyclic, adaptive };

// Cubic B-spline machinery over an arbitrary (non-decreasing) knot vector.
// Order 4 throughout; there are knots.size() - 4 basis functions.
class BSplineBasis {
 public:
  explicit BSplineBasis(Eigen::VectorXd knots);

  int size() const { return static_cast<int>(knots_.size()) - 4; }
  const Eigen::VectorXd& knots() const { return knots_; }

  // Values (or derivatives of order `deriv`, 0..3) of every basis function at x.
  Eigen::VectorXd evaluate(double x, int deriv = 0) const;

 private:
  Eigen::VectorXd knots_;
};

// A penalized smooth: basis evaluated on a grid plus one penalty matrix per
// smoothing parameter. Coefficients of the term map onto raw B-spline
// coefficients through `transform` (identity, or fold + sum-to-zero
// constraint for the cyclic case).
struct SmoothTerm {
  SmoothKind kind = SmoothKind::cubic;
  Eigen::MatrixXd design;
  std::vector<Eigen::MatrixXd> penalties;
  Eigen::VectorXd knots;
  // Dimension of the null space of any positive combination of penalties.
  int null_space_dim = 0;

  Eigen::MatrixXd transform;
  double period = 0.0;  // > 0 for cyclic terms

  int n_coef() const { return static_cast<int>(design.cols()); }

  // Basis (or derivative) rows at arbitrary positions on the term's axis.
  Eigen::MatrixXd evaluate(std::span<const double> x, int deriv = 0) const;

  // Sum of lambda_m * S_m.
  Eigen::MatrixXd total_penalty(std::span<const double> lambda) const;
};

// Cubic regression spline with k evenly spaced knots over [grid.front(),
// grid.back()] and penalty \int f''(t)^2 dt over that range.
SmoothTerm cubic_basis(std::span<const double> grid, int k);

// Cyclic cubic spline of the given period evaluated at `positions` (taken
// modulo the period). The zero-mean constraint over the integer points
// 1..period is absorbed into the basis, leaving k - 1 coefficients.
SmoothTerm cyclic_basis(std::span<const double> positions, double period,
                        int k);

// Cubic basis whose curvature penalty is split into m components
// \int w_j(t) f''(t)^2 dt, with hat-function weights w_j that sum to one.
// Independent smoothing parameters on each component let the smoothness
// vary along the grid; m = 1 reproduces cubic_basis exactly.
SmoothTerm adaptive_penalty(std::span<const double> grid, int k, int m);

struct DilationWeights {
  double before = 3.5;
  double on = 6.0;
  double after = 3.5;
};

// Stretch the axis around `anchor_index` so that the day before, of and
// after count as the given widths. Every other day has width one, and the
// spacing between consecutive days is the mean of their widths.
std::vector<double> dilate_grid(std::span<const double> grid, int anchor_index,
                                DilationWeights weights = {});

// 0, 1, ..., n - 1 as doubles.
std::vector<double> day_grid(int n);

}  // namespace backcalc
