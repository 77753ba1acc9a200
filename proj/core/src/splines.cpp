#include "backcalc/splines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace backcalc {

namespace {

// Values of all order-`ord` B-splines at x (knots.size() - ord entries).
Eigen::VectorXd cox_de_boor(const Eigen::VectorXd& t, int ord, double x) {
  const int nk = static_cast<int>(t.size());
  Eigen::VectorXd n = Eigen::VectorXd::Zero(nk - 1);
  for (int i = 0; i < nk - 1; ++i) {
    if (t(i) <= x && x < t(i + 1)) n(i) = 1.0;
  }
  for (int p = 2; p <= ord; ++p) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(nk - p);
    for (int i = 0; i < nk - p; ++i) {
      double v = 0.0;
      const double d1 = t(i + p - 1) - t(i);
      const double d2 = t(i + p) - t(i + 1);
      if (d1 > 0.0) v += (x - t(i)) / d1 * n(i);
      if (d2 > 0.0) v += (t(i + p) - x) / d2 * n(i + 1);
      m(i) = v;
    }
    n = std::move(m);
  }
  return n;
}

Eigen::VectorXd bspline_derivative(const Eigen::VectorXd& t, int ord, double x,
                                   int deriv) {
  if (deriv == 0) return cox_de_boor(t, ord, x);
  const Eigen::VectorXd lower = bspline_derivative(t, ord - 1, x, deriv - 1);
  const int nk = static_cast<int>(t.size());
  Eigen::VectorXd out(nk - ord);
  for (int i = 0; i < nk - ord; ++i) {
    const double d1 = t(i + ord - 1) - t(i);
    const double d2 = t(i + ord) - t(i + 1);
    double v = 0.0;
    if (d1 > 0.0) v += lower(i) / d1;
    if (d2 > 0.0) v -= lower(i + 1) / d2;
    out(i) = (ord - 1) * v;
  }
  return out;
}

void check_grid(std::span<const double> grid) {
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) {
      throw InputError("grid must be strictly increasing (position " +
                       std::to_string(i) + ")");
    }
  }
}

Eigen::VectorXd even_knots(double a, double b, int k) {
  const double h = (b - a) / (k - 3);
  Eigen::VectorXd t(k + 4);
  for (int j = 0; j < k + 4; ++j) t(j) = a + (j - 3) * h;
  return t;
}

Eigen::MatrixXd design_on(const BSplineBasis& basis, std::span<const double> x) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(x.size()), basis.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = basis.evaluate(x[i]).transpose();
  }
  return out;
}

// \int_lo^hi w(t) B''(t) B''(t)^T dt, integrating piecewise between the
// supplied sorted breakpoints with 3-point Gauss-Legendre (exact for cubic
// integrands, i.e. linear weight times a product of two linear functions).
template <typename Weight>
Eigen::MatrixXd curvature_gram(const BSplineBasis& basis,
                               const std::vector<double>& breaks, Weight w) {
  static constexpr double kNode = 0.7745966692414834;  // sqrt(3/5)
  static constexpr double kNodes[3] = {-kNode, 0.0, kNode};
  static constexpr double kWeights[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  const int k = basis.size();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(k, k);
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double lo = breaks[i];
    const double hi = breaks[i + 1];
    if (!(hi > lo)) continue;
    const double half = 0.5 * (hi - lo);
    const double mid = 0.5 * (hi + lo);
    for (int q = 0; q < 3; ++q) {
      const double x = mid + half * kNodes[q];
      const double wt = half * kWeights[q] * w(x);
      if (wt == 0.0) continue;
      const Eigen::VectorXd d2 = basis.evaluate(x, 2);
      s.noalias() += wt * d2 * d2.transpose();
    }
  }
  return 0.5 * (s + s.transpose());
}

std::vector<double> interior_knots(const Eigen::VectorXd& t, double a, double b) {
  std::vector<double> out;
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    if (t(j) >= a - 1e-12 && t(j) <= b + 1e-12) out.push_back(t(j));
  }
  out.front() = a;
  out.back() = b;
  return out;
}

}  // namespace

BSplineBasis::BSplineBasis(Eigen::VectorXd knots) : knots_(std::move(knots)) {
  if (knots_.size() < 5) throw DimensionError("B-spline basis needs >= 5 knots");
}

Eigen::VectorXd BSplineBasis::evaluate(double x, int deriv) const {
  if (deriv < 0 || deriv > 3) throw InputError("derivative order must be 0..3");
  return bspline_derivative(knots_, 4, x, deriv);
}

Eigen::MatrixXd SmoothTerm::evaluate(std::span<const double> x,
                                     int deriv) const {
  const BSplineBasis basis(knots);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(x.size()), transform.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double xi = x[i];
    if (period > 0.0 && (xi < 0.0 || xi > period)) {
      xi -= period * std::floor(xi / period);
    }
    out.row(static_cast<Eigen::Index>(i)) =
        basis.evaluate(xi, deriv).transpose() * transform;
  }
  return out;
}

Eigen::MatrixXd SmoothTerm::total_penalty(std::span<const double> lambda) const {
  if (lambda.size() != penalties.size()) {
    throw DimensionError("one smoothing parameter per penalty required");
  }
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n_coef(), n_coef());
  for (std::size_t m = 0; m < penalties.size(); ++m) s += lambda[m] * penalties[m];
  return s;
}

SmoothTerm cubic_basis(std::span<const double> grid, int k) {
  return adaptive_penalty(grid, k, 1);
}

SmoothTerm adaptive_penalty(std::span<const double> grid, int k, int m) {
  if (k < 4) throw DimensionError("cubic basis dimension must be >= 4");
  if (static_cast<std::size_t>(k) > grid.size()) {
    throw DimensionError("basis dimension exceeds number of grid points");
  }
  if (m < 1 || m >= k) {
    throw DimensionError("number of penalty components must be in [1, k)");
  }
  check_grid(grid);

  const double a = grid.front();
  const double b = grid.back();
  SmoothTerm term;
  term.kind = m == 1 ? SmoothKind::cubic : SmoothKind::adaptive;
  term.knots = even_knots(a, b, k);
  const BSplineBasis basis(term.knots);
  term.design = design_on(basis, grid);
  term.transform = Eigen::MatrixXd::Identity(k, k);
  term.null_space_dim = 2;

  std::vector<double> breaks = interior_knots(term.knots, a, b);
  if (m == 1) {
    term.penalties.push_back(curvature_gram(basis, breaks, [](double) { return 1.0; }));
    return term;
  }

  const double step = (b - a) / (m - 1);
  for (int j = 0; j < m; ++j) breaks.push_back(a + j * step);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end(),
                           [](double u, double v) { return std::abs(u - v) < 1e-12; }),
               breaks.end());
  for (int j = 0; j < m; ++j) {
    const double centre = a + j * step;
    auto hat = [=](double x) {
      return std::max(0.0, 1.0 - std::abs(x - centre) / step);
    };
    term.penalties.push_back(curvature_gram(basis, breaks, hat));
  }
  return term;
}

SmoothTerm cyclic_basis(std::span<const double> positions, double period, int k) {
  if (k < 3) throw DimensionError("cyclic basis dimension must be >= 3");
  if (!(period > 0.0)) throw InputError("period must be positive");

  // Non-periodic cubic B-splines covering [0, period] whose coefficients are
  // then folded modulo k.
  const double h = period / k;
  Eigen::VectorXd t(k + 7);
  for (int i = 0; i < k + 7; ++i) t(i) = (i - 3) * h;
  const BSplineBasis basis(t);
  const int n_raw = basis.size();  // k + 3

  Eigen::MatrixXd fold = Eigen::MatrixXd::Zero(n_raw, k);
  for (int i = 0; i < n_raw; ++i) fold(i, i % k) = 1.0;

  std::vector<double> breaks;
  for (int i = 3; i <= k + 3; ++i) breaks.push_back(t(i));
  const Eigen::MatrixXd s_raw =
      curvature_gram(basis, breaks, [](double) { return 1.0; });

  SmoothTerm term;
  term.kind = SmoothKind::cyclic;
  term.knots = t;
  term.period = period;
  term.transform = fold;

  // Zero mean over the integer points 1..period.
  const int n_days = static_cast<int>(std::lround(period));
  std::vector<double> days(n_days);
  std::iota(days.begin(), days.end(), 1.0);
  const Eigen::RowVectorXd c = term.evaluate(days).colwise().sum();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(c.transpose());
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(k, k);
  const Eigen::MatrixXd z = q.rightCols(k - 1);

  term.transform = fold * z;
  Eigen::MatrixXd s = term.transform.transpose() * s_raw * term.transform;
  term.penalties.push_back(0.5 * (s + s.transpose()));
  term.design = term.evaluate(positions);
  term.null_space_dim = 0;
  return term;
}

std::vector<double> dilate_grid(std::span<const double> grid, int anchor_index,
                                DilationWeights weights) {
  const int n = static_cast<int>(grid.size());
  if (anchor_index < 1 || anchor_index > n - 2) {
    throw InputError("dilation anchor must be interior to the grid");
  }
  if (!(weights.before > 0.0 && weights.on > 0.0 && weights.after > 0.0)) {
    throw InputError("dilation weights must be positive");
  }
  check_grid(grid);
  std::vector<double> width(n, 1.0);
  width[anchor_index - 1] = weights.before;
  width[anchor_index] = weights.on;
  width[anchor_index + 1] = weights.after;

  std::vector<double> out(n);
  out[0] = grid[0];
  for (int i = 1; i < n; ++i) {
    out[i] = out[i - 1] +
             0.5 * (width[i - 1] + width[i]) * (grid[i] - grid[i - 1]);
  }
  return out;
}

std::vector<double> day_grid(int n) {
  std::vector<double> g(static_cast<std::size_t>(std::max(n, 0)));
  std::iota(g.begin(), g.end(), 0.0);
  return g;
}

}  // namespace backcalc
