#include "backcalc/epi_r.hpp"

#include "backcalc/errors.hpp"

#include <cmath>
#include <limits>

namespace backcalc {

SeirParams SeirParams::from_days(double days_to_infectivity, double days_infectious) {
  if (!(days_to_infectivity > 0.0) || !(days_infectious > 0.0)) {
    throw InputError("SEIR durations must be > 0");
  }
  return {1.0 / days_to_infectivity, 1.0 / days_infectious};
}

SeirPath solve_seir(const std::function<double(double)>& forcing, const SeirParams& p, int n_days,
                    double step) {
  if (!(p.gamma > 0.0) || !(p.delta > 0.0)) throw InputError("SEIR rates must be > 0");
  if (!(step > 0.0)) throw InputError("step must be > 0");
  SeirPath out{Eigen::VectorXd::Zero(n_days), Eigen::VectorXd::Zero(n_days)};
  const int sub = std::max(1, static_cast<int>(std::lround(1.0 / step)));
  const double h = 1.0 / sub;
  double e = 0.0, i = 0.0;
  auto de = [&](double t, double ev) { return forcing(t) - p.gamma * ev; };
  auto di = [&](double ev, double iv) { return p.gamma * ev - p.delta * iv; };
  for (int day = 1; day < n_days; ++day) {
    for (int s = 0; s < sub; ++s) {
      const double t = (day - 1) + s * h;
      const double k1e = de(t, e), k1i = di(e, i);
      const double e2 = e + 0.5 * h * k1e, i2 = i + 0.5 * h * k1i;
      const double k2e = de(t + 0.5 * h, e2), k2i = di(e2, i2);
      const double e3 = e + 0.5 * h * k2e, i3 = i + 0.5 * h * k2i;
      const double k3e = de(t + 0.5 * h, e3), k3i = di(e3, i3);
      const double e4 = e + h * k3e, i4 = i + h * k3i;
      const double k4e = de(t + h, e4), k4i = di(e4, i4);
      e += h / 6.0 * (k1e + 2.0 * k2e + 2.0 * k3e + k4e);
      i += h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i);
    }
    out.exposed(day) = e;
    out.infectious(day) = i;
  }
  return out;
}

Eigen::VectorXd r_from_incidence(const Eigen::VectorXd& fc, const SeirParams& params,
                                 const SeirOptions& options) {
  const auto n = fc.size();
  if (n < 2) throw InputError("incidence path needs at least two days");
  for (Eigen::Index t = 0; t < n; ++t) {
    if (!(fc(t) >= 0.0) || !std::isfinite(fc(t))) throw InputError("incidence must be finite and >= 0");
  }
  // The system is linear in f, so R does not depend on its scale; work near 1.
  const double peak = fc.maxCoeff();
  const double scale = peak > 0.0 ? std::ldexp(1.0, -std::ilogb(peak)) : 1.0;
  const Eigen::VectorXd f = fc * scale;
  auto forcing = [&](double t) {
    const double c = std::clamp(t, 0.0, static_cast<double>(n - 1));
    const auto lo = static_cast<Eigen::Index>(std::floor(c));
    const auto hi = std::min<Eigen::Index>(lo + 1, n - 1);
    const double w = c - static_cast<double>(lo);
    // Log-linear between positive days, so exponential phases are exact.
    if (f(lo) > 0.0 && f(hi) > 0.0) return f(lo) * std::pow(f(hi) / f(lo), w);
    return (1.0 - w) * f(lo) + w * f(hi);
  };
  const SeirPath path = solve_seir(forcing, params, static_cast<int>(n), options.step);
  const double imax = path.infectious.maxCoeff();
  Eigen::VectorXd r(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double i = path.infectious(t);
    r(t) = (imax > 0.0 && i >= options.mask_threshold * imax && i > 0.0)
               ? f(t) / (params.delta * i)
               : std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

RSensitivity r_sensitivity(const Eigen::VectorXd& fc, double g_lo, double g_hi, double d_lo,
                           double d_hi, int points, const SeirParams& central,
                           const SeirOptions& options) {
  if (points < 1) throw InputError("points must be >= 1");
  if (g_lo > g_hi || d_lo > d_hi) throw InputError("sensitivity ranges must be ordered");
  RSensitivity out;
  out.central = r_from_incidence(fc, central, options);
  out.lower = out.central;
  out.upper = out.central;
  auto axis = [&](double lo, double hi, int k) {
    return points == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * k / (points - 1);
  };
  for (int a = 0; a < points; ++a) {
    for (int b = 0; b < points; ++b) {
      const SeirParams p = SeirParams::from_days(axis(g_lo, g_hi, a), axis(d_lo, d_hi, b));
      out.grid.push_back(p);
      const Eigen::VectorXd r = r_from_incidence(fc, p, options);
      for (Eigen::Index t = 0; t < r.size(); ++t) {
        if (std::isnan(r(t))) continue;
        if (std::isnan(out.lower(t)) || r(t) < out.lower(t)) out.lower(t) = r(t);
        if (std::isnan(out.upper(t)) || r(t) > out.upper(t)) out.upper(t) = r(t);
      }
    }
  }
  return out;
}

Eigen::MatrixXd r_paths(const Eigen::MatrixXd& incidence, const SeirParams& params,
                        const SeirOptions& options) {
  Eigen::MatrixXd out(incidence.rows(), incidence.cols());
  for (Eigen::Index i = 0; i < incidence.rows(); ++i) {
    out.row(i) = r_from_incidence(incidence.row(i).transpose(), params, options).transpose();
  }
  return out;
}

Bands r_posterior(const PosteriorEnsemble& ensemble, const SeirParams& params,
                  const SeirOptions& options) {
  return pointwise_bands(r_paths(ensemble.incidence, params, options));
}

}  // namespace backcalc
