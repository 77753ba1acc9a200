#include "backcalc/pcr.hpp"

#include "backcalc/errors.hpp"
#include "linalg.hpp"

#include <cmath>
#include <random>

namespace backcalc {

namespace {

// RK4 over one day for x' = f * a - clearance * x with constant forcing.
void rk4_day(Eigen::VectorXd& x, const Eigen::VectorXd& forcing, double clearance, double step) {
  const int sub = std::max(1, static_cast<int>(std::lround(1.0 / step)));
  const double h = 1.0 / sub;
  for (int s = 0; s < sub; ++s) {
    const Eigen::VectorXd k1 = forcing - clearance * x;
    const Eigen::VectorXd k2 = forcing - clearance * (x + 0.5 * h * k1);
    const Eigen::VectorXd k3 = forcing - clearance * (x + 0.5 * h * k2);
    const Eigen::VectorXd k4 = forcing - clearance * (x + h * k3);
    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
}

double penalized(const PcrLikelihood& l, const Eigen::VectorXd& beta, double lambda,
                 const Eigen::MatrixXd& s) {
  return l.loglik - 0.5 * lambda * beta.dot(s * beta);
}

}  // namespace

void validate(const PcrModel& m) {
  if (!(m.clearance > 0.0)) throw InputError("clearance rate must be > 0");
  if (!(m.sensitivity > 0.0 && m.sensitivity <= 1.0)) throw InputError("sensitivity must lie in (0, 1]");
  if (m.tests_per_day < 1) throw InputError("tests per day must be >= 1");
  if (m.k < 4) throw DimensionError("PCR basis needs k >= 4");
  if (!(m.step > 0.0 && m.step <= 1.0)) throw InputError("RK4 step must lie in (0, 1]");
}

Eigen::VectorXd pcr_prevalence(const Eigen::VectorXd& f, const PcrModel& model) {
  validate(model);
  Eigen::VectorXd p(f.size());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  Eigen::VectorXd forcing(1);
  for (Eigen::Index d = 0; d < f.size(); ++d) {
    forcing(0) = f(d);
    rk4_day(x, forcing, model.clearance, model.step);
    p(d) = x(0);
  }
  return p;
}

PcrData simulate_pcr(const Eigen::VectorXd& f, const PcrModel& model, Rng& rng) {
  PcrData out;
  out.truth = f;
  out.prevalence = pcr_prevalence(f, model);
  out.counts.resize(f.size());
  for (Eigen::Index d = 0; d < f.size(); ++d) {
    const double q = model.sensitivity * out.prevalence(d);
    if (!(q >= 0.0 && q <= 1.0)) throw InputError("alpha * P outside [0, 1]; incidence too large");
    out.counts(d) = static_cast<double>(std::binomial_distribution<int>(model.tests_per_day, q)(rng));
  }
  return out;
}

Eigen::VectorXd pcr_reference_incidence(int horizon) {
  Eigen::VectorXd f(horizon);
  for (int t = 0; t < horizon; ++t) {
    const double bump = std::exp(-0.5 * std::pow((t - 35.0) / 12.0, 2));
    const double late = 1.0 / (1.0 + std::exp(-(t - 80.0) / 5.0));
    f(t) = 1e-4 + 1.2e-3 * bump + 4e-4 * late;
  }
  return f;
}

PcrLikelihood pcr_loglik(const Eigen::VectorXd& counts, const SmoothTerm& basis,
                         const Eigen::VectorXd& beta, const PcrModel& model) {
  validate(model);
  const auto n = counts.size();
  const auto p = beta.size();
  if (basis.design.rows() != n || basis.n_coef() != p) throw DimensionError("PCR basis does not match data");
  const Eigen::VectorXd f = (basis.design * beta).array().exp();
  const double big_n = model.tests_per_day;
  const double a = model.sensitivity;

  PcrLikelihood out;
  out.gradient = Eigen::VectorXd::Zero(p);
  out.prevalence.resize(n);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(p + 1);  // P, then dP/dbeta
  Eigen::VectorXd forcing(p + 1);
  for (Eigen::Index d = 0; d < n; ++d) {
    forcing(0) = f(d);
    forcing.tail(p) = f(d) * basis.design.row(d).transpose();
    rk4_day(x, forcing, model.clearance, model.step);
    const double pd = x(0);
    out.prevalence(d) = pd;
    const double q = a * pd;
    if (!(q > 0.0 && q < 1.0)) {
      out.loglik = -std::numeric_limits<double>::infinity();
      return out;
    }
    const double y = counts(d);
    out.loglik += y * std::log(q) + (big_n - y) * std::log1p(-q) +
                  std::lgamma(big_n + 1.0) - std::lgamma(y + 1.0) - std::lgamma(big_n - y + 1.0);
    const double dl = y / pd - (big_n - y) * a / (1.0 - q);
    out.gradient += dl * x.tail(p);
  }
  return out;
}

PcrFit fit_pcr_incidence(const Eigen::VectorXd& counts, const PcrModel& model) {
  validate(model);
  const int n = static_cast<int>(counts.size());
  if (n < model.k) throw DimensionError("fewer days than basis functions");
  for (Eigen::Index d = 0; d < n; ++d) {
    if (!(counts(d) >= 0.0) || counts(d) > model.tests_per_day) throw InputError("counts must lie in [0, N]");
  }
  const SmoothTerm basis = cubic_basis(day_grid(n), model.k);
  const Eigen::MatrixXd& s = basis.penalties.front();
  const int p = basis.n_coef();
  const int rank = p - basis.null_space_dim;

  PcrFit fit;
  fit.boundary_warning = counts.sum() == 0.0;
  const double mean_rate = std::max(counts.mean(), 0.5) / (model.tests_per_day * model.sensitivity);
  Eigen::VectorXd beta = Eigen::VectorXd::Constant(p, std::log(mean_rate * model.clearance));

  auto fd_hessian = [&](const Eigen::VectorXd& b) {
    Eigen::MatrixXd h(p, p);
    for (int j = 0; j < p; ++j) {
      const double eps = 1e-5 * std::max(1.0, std::abs(b(j)));
      Eigen::VectorXd bp = b, bm = b;
      bp(j) += eps;
      bm(j) -= eps;
      h.col(j) = -(pcr_loglik(counts, basis, bp, model).gradient -
                   pcr_loglik(counts, basis, bm, model).gradient) / (2.0 * eps);
    }
    return Eigen::MatrixXd(0.5 * (h + h.transpose()));
  };

  // Penalized Newton with the finite-differenced Hessian, then the Laplace
  // criterion at the optimum.
  auto inner = [&](Eigen::VectorXd b, double lambda, Eigen::MatrixXd& h_out, double& lml) {
    PcrLikelihood l = pcr_loglik(counts, basis, b, model);
    Eigen::MatrixXd h = fd_hessian(b);
    for (int it = 0; it < 200; ++it) {
      const Eigen::VectorXd g = l.gradient - lambda * s * b;
      const double value = penalized(l, b, lambda, s);
      if (g.lpNorm<Eigen::Infinity>() < 1e-7 * (1.0 + std::abs(value))) break;
      Eigen::MatrixXd a = h + lambda * s;
      Eigen::LLT<Eigen::MatrixXd> llt(a);
      double tau = 1e-8 * (1.0 + a.diagonal().cwiseAbs().maxCoeff());
      while (llt.info() != Eigen::Success) {
        a.diagonal().array() += tau;
        tau *= 10.0;
        llt.compute(a);
      }
      Eigen::VectorXd step = llt.solve(g);
      const double smax = step.lpNorm<Eigen::Infinity>();
      if (smax > 3.0) step *= 3.0 / smax;
      bool moved = false;
      for (int k = 0; k < 40; ++k, step *= 0.5) {
        PcrLikelihood trial = pcr_loglik(counts, basis, b + step, model);
        if (std::isfinite(trial.loglik) && penalized(trial, b + step, lambda, s) >= value) {
          b += step;
          l = std::move(trial);
          moved = true;
          break;
        }
      }
      if (!moved) break;
      h = fd_hessian(b);
    }
    h_out = h;
    const Eigen::MatrixXd a = h + lambda * s;
    try {
      lml = penalized(l, b, lambda, s) + 0.5 * rank * std::log(lambda) +
            0.5 * detail::penalty_log_pdet_unit(s, rank) - 0.5 * detail::logdet_spd(a);
    } catch (const DomainError&) {
      lml = -std::numeric_limits<double>::infinity();
    }
    return b;
  };

  double lambda = 1.0;
  {
    Eigen::MatrixXd h = fd_hessian(beta);
    const double ts = s.trace();
    if (ts > 0.0) lambda = std::clamp(0.1 * h.diagonal().cwiseAbs().sum() / ts, 1e-6, 1e8);
  }
  Eigen::MatrixXd h;
  double lml = 0.0;
  beta = inner(beta, lambda, h, lml);
  for (int outer = 0; outer < 100; ++outer) {
    const Eigen::MatrixXd a = h + lambda * s;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) break;
    const double t2 = (llt.solve(s)).trace();
    const double quad = beta.dot(s * beta);
    double factor = (rank / lambda - t2) / std::max(quad, 1e-300);
    if (!std::isfinite(factor) || factor <= 0.0) factor = 1e-3;
    double proposal = std::clamp(lambda * std::clamp(factor, 1e-3, 1e3), 1e-10, 1e12);
    bool accepted = false;
    for (int k = 0; k < 12; ++k) {
      Eigen::MatrixXd h_new;
      double lml_new = 0.0;
      Eigen::VectorXd b_new = inner(beta, proposal, h_new, lml_new);
      if (lml_new >= lml) {
        const double dlog = std::abs(std::log(proposal / lambda));
        beta = b_new;
        h = h_new;
        lml = lml_new;
        lambda = proposal;
        accepted = dlog >= 1e-4;
        break;
      }
      proposal = std::sqrt(proposal * lambda);
    }
    if (!accepted) break;
  }

  fit.beta = beta;
  fit.lambda = lambda;
  fit.hessian = h;
  fit.lml = lml;
  fit.f = (basis.design * beta).array().exp();
  Eigen::MatrixXd a = h + lambda * s;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    a.diagonal().array() += 1e-8 * (1.0 + a.diagonal().cwiseAbs().maxCoeff());
    llt.compute(a);
  }
  const Eigen::MatrixXd v = llt.solve(Eigen::MatrixXd::Identity(p, p));
  fit.lower.resize(n);
  fit.upper.resize(n);
  for (int d = 0; d < n; ++d) {
    const Eigen::VectorXd x = basis.design.row(d).transpose();
    const double se = std::sqrt(std::max(0.0, x.dot(v * x)));
    const double eta = std::log(fit.f(d));
    fit.lower(d) = std::exp(eta - 2.0 * se);
    fit.upper(d) = std::exp(eta + 2.0 * se);
  }
  return fit;
}

}  // namespace backcalc
