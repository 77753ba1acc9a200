#include "backcalc/inference.hpp"

#include "backcalc/errors.hpp"
#include "linalg.hpp"

#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

namespace backcalc {

namespace {

constexpr double kLambdaMin = 1e-10;
constexpr double kLambdaMax = 1e12;
constexpr double kMaxNewtonStep = 5.0;

double laml_or_neg_inf(const DeathModel& model, const FitState& st) {
  try {
    return laplace_marginal(model, st);
  } catch (const DomainError&) {
    return -std::numeric_limits<double>::infinity();
  }
}

struct NewtonResult {
  Eigen::VectorXd beta;
  ObjectiveValue obj;
  int iterations = 0;
};

// Regularize -hessian until Cholesky succeeds.
Eigen::LLT<Eigen::MatrixXd> positive_factor(const Eigen::MatrixXd& a) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() == Eigen::Success) return llt;
  const double scale = std::max(1e-8, a.diagonal().cwiseAbs().maxCoeff());
  double tau = 1e-8 * scale;
  for (int i = 0; i < 40; ++i, tau *= 10.0) {
    Eigen::MatrixXd r = a;
    r.diagonal().array() += tau;
    llt.compute(r);
    if (llt.info() == Eigen::Success) return llt;
  }
  throw ConvergenceError("could not regularize the penalized Hessian");
}

NewtonResult newton(const DeathModel& model, Eigen::VectorXd beta, const std::vector<double>& lambda,
                    const FitOptions& opt) {
  NewtonResult r;
  ObjectiveValue obj = penalized_objective(model, beta, lambda, 2);
  if (!std::isfinite(obj.value)) throw DomainError("objective is not finite at the starting point");
  std::ostringstream trace;
  for (r.iterations = 0; r.iterations < opt.max_newton; ++r.iterations) {
    const double gmax = obj.gradient.lpNorm<Eigen::Infinity>();
    trace << r.iterations << ": value " << obj.value << " |g| " << gmax << '\n';
    if (gmax < opt.grad_tol * (1.0 + std::abs(obj.value))) break;

    const auto llt = positive_factor(-obj.hessian);
    Eigen::VectorXd step = llt.solve(obj.gradient);
    const double smax = step.lpNorm<Eigen::Infinity>();
    if (smax > kMaxNewtonStep) step *= kMaxNewtonStep / smax;
    const double decrement = obj.gradient.dot(step);

    bool accepted = false;
    double alpha = 1.0;
    for (int h = 0; h < 50; ++h, alpha *= 0.5) {
      const Eigen::VectorXd trial = beta + alpha * step;
      const ObjectiveValue v = penalized_objective(model, trial, lambda, 0);
      if (std::isfinite(v.value) && v.value >= obj.value) {
        beta = trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No ascent possible in floating point: stationary to rounding.
      if (decrement < 1e-9 * (1.0 + std::abs(obj.value))) break;
      throw ConvergenceError("Newton step halving failed", trace.str());
    }
    const double previous = obj.value;
    obj = penalized_objective(model, beta, lambda, 2);
    if (obj.value - previous < 1e-13 * (1.0 + std::abs(previous)) &&
        decrement < 1e-10 * (1.0 + std::abs(obj.value))) {
      break;
    }
  }
  if (r.iterations >= opt.max_newton) {
    throw ConvergenceError("Newton iteration limit reached", trace.str());
  }
  r.beta = std::move(beta);
  r.obj = std::move(obj);
  return r;
}

FitState make_state(const DeathModel& model, NewtonResult&& nr, const std::vector<double>& lambda) {
  FitState st;
  st.penalty = model.total_penalty(lambda);
  st.hessian = -nr.obj.hessian - st.penalty;
  st.beta = std::move(nr.beta);
  st.lambda = lambda;
  st.theta = model.theta();
  st.loglik = nr.obj.loglik;
  st.deviance = nr.obj.deviance;
  st.damping_clamped = nr.obj.state.damping_clamped;
  st.lml = laml_or_neg_inf(model, st);
  return st;
}

std::vector<double> default_lambda(const DeathModel& model, const Eigen::VectorXd& beta) {
  std::vector<double> zero(static_cast<std::size_t>(model.n_lambda()), 0.0);
  const ObjectiveValue obj = penalized_objective(model, beta, zero, 2);
  std::vector<double> lambda(zero.size(), 1.0);
  if (!std::isfinite(obj.value)) return lambda;
  for (std::size_t m = 0; m < lambda.size(); ++m) {
    const auto& pen = model.penalties()[m];
    const auto k = pen.matrix.rows();
    const double th = obj.hessian.block(pen.offset, pen.offset, k, k).diagonal().cwiseAbs().sum();
    const double ts = pen.matrix.trace();
    if (th > 0.0 && ts > 0.0) lambda[m] = std::clamp(0.1 * th / ts, 1e-6, 1e8);
  }
  return lambda;
}

// Generalized Fellner-Schall proposal.
std::vector<double> fellner_schall(const DeathModel& model, const FitState& st) {
  const auto geom = detail::penalty_geometry(model, st.lambda);
  const Eigen::LLT<Eigen::MatrixXd> llt(st.precision());
  if (llt.info() != Eigen::Success) throw DomainError("H + S is not positive definite");
  const Eigen::MatrixXd ainv = llt.solve(Eigen::MatrixXd::Identity(model.n_coef(), model.n_coef()));
  std::vector<double> out(st.lambda.size());
  for (std::size_t m = 0; m < st.lambda.size(); ++m) {
    const auto& pen = model.penalties()[m];
    const auto k = pen.matrix.rows();
    const double t1 = (geom.pinv.block(pen.offset, pen.offset, k, k) * pen.matrix).trace();
    const double t2 = (ainv.block(pen.offset, pen.offset, k, k) * pen.matrix).trace();
    const Eigen::VectorXd b = st.beta.segment(pen.offset, k);
    const double quad = b.dot(pen.matrix * b);
    double factor = (t1 - t2) / std::max(quad, 1e-300);
    if (!std::isfinite(factor) || factor <= 0.0) factor = 1e-3;
    factor = std::clamp(factor, 1e-3, 1e3);
    out[m] = std::clamp(st.lambda[m] * factor, kLambdaMin, kLambdaMax);
  }
  return out;
}

FitState fit_lambda(const DeathModel& model, const FitOptions& opt, Eigen::VectorXd start,
                    std::vector<double> lambda) {
  std::ostringstream trace;
  FitState st = make_state(model, newton(model, std::move(start), lambda, opt), lambda);
  if (!std::isfinite(st.lml)) throw DomainError("H + S is not positive definite at the initial fit");
  st.lml_trace.push_back(st.lml);
  if (opt.fixed_lambda || model.n_lambda() == 0) return st;

  for (int outer = 0; outer < opt.max_outer; ++outer) {
    st.outer_iterations = outer + 1;
    const std::vector<double> proposal = fellner_schall(model, st);
    std::vector<double> trial = proposal;
    bool accepted = false;
    FitState next;
    for (int h = 0; h < 12; ++h) {
      try {
        next = make_state(model, newton(model, st.beta, trial, opt), trial);
        if (next.lml >= st.lml) {
          accepted = true;
          break;
        }
      } catch (const std::exception&) {
      }
      for (std::size_t m = 0; m < trial.size(); ++m) {
        trial[m] = std::sqrt(trial[m] * st.lambda[m]);
      }
    }
    double max_step = 0.0;
    if (accepted) {
      for (std::size_t m = 0; m < trial.size(); ++m) {
        max_step = std::max(max_step, std::abs(std::log(trial[m] / st.lambda[m])));
      }
    }
    trace << outer << ": lml " << st.lml << " max|dlog lambda| " << max_step
          << (accepted ? "" : " (rejected)") << '\n';
    if (!accepted) break;  // no ascent direction left at this precision
    const double gain = next.lml - st.lml;
    const auto trace_so_far = std::move(st.lml_trace);
    st = std::move(next);
    st.lml_trace = trace_so_far;
    st.lml_trace.push_back(st.lml);
    st.outer_iterations = outer + 1;
    // Components pinned at the bounds have vanished or are unpenalized.
    bool all_pinned = true;
    for (double l : st.lambda) all_pinned = all_pinned && (l >= kLambdaMax || l <= kLambdaMin);
    if (max_step < opt.log_lambda_tol || all_pinned || gain < 1e-9 * (1.0 + std::abs(st.lml))) {
      return st;
    }
  }
  if (st.outer_iterations >= opt.max_outer) {
    throw ConvergenceError("smoothing parameter iteration limit reached", trace.str());
  }
  return st;
}

}  // namespace

double laplace_marginal(const DeathModel& model, const FitState& st) {
  const auto geom = detail::penalty_geometry(model, st.lambda);
  const double pen = st.beta.dot(st.penalty * st.beta);
  return st.loglik - 0.5 * pen + 0.5 * geom.log_pdet - 0.5 * detail::logdet_spd(st.precision()) +
         0.5 * geom.null_dim * std::log(2.0 * std::numbers::pi);
}

FitState fit_fixed_lambda(const DeathModel& model, const std::vector<double>& lambda,
                          const FitOptions& options) {
  if (static_cast<int>(lambda.size()) != model.n_lambda()) {
    throw DimensionError("one smoothing parameter per penalty required");
  }
  const Eigen::VectorXd start = options.start ? *options.start : model.initial_beta(options.start_anchor);
  return make_state(model, newton(model, start, lambda, options), lambda);
}

FitState fit_empirical_bayes(const DeathModel& model, const FitOptions& options) {
  const Eigen::VectorXd start = options.start ? *options.start : model.initial_beta(options.start_anchor);
  if (options.start && start.size() != model.n_coef()) {
    throw DimensionError("starting coefficients have wrong length");
  }
  std::vector<double> lambda = options.initial_lambda;
  if (lambda.empty()) lambda = default_lambda(model, start);
  if (static_cast<int>(lambda.size()) != model.n_lambda()) {
    throw DimensionError("one smoothing parameter per penalty required");
  }
  for (double l : lambda) {
    if (!(l > 0.0)) throw InputError("smoothing parameters must be > 0");
  }

  if (!options.estimate_theta) return fit_lambda(model, options, start, lambda);
  if (model.kind() != ModelKind::basic) {
    throw InputError("theta is estimated on the basic model and frozen for the others");
  }

  DeathModel work = model;
  Eigen::VectorXd warm = start;
  std::vector<double> warm_lambda = lambda;
  std::optional<FitState> best;
  auto criterion = [&](double log_theta) {
    work.set_theta(std::exp(log_theta));
    try {
      FitState st = fit_lambda(work, options, warm, warm_lambda);
      warm = st.beta;
      warm_lambda = st.lambda;
      const double v = st.lml;
      if (!best || v > best->lml) best = std::move(st);
      return -v;
    } catch (const std::exception&) {
      return std::numeric_limits<double>::max();
    }
  };
  std::uintmax_t iters = 60;
  boost::math::tools::brent_find_minima(criterion, std::log(options.theta_min),
                                        std::log(options.theta_max), 16, iters);
  if (!best) throw ConvergenceError("no theta gave a finite Laplace criterion");
  return *best;
}

GaussianPosterior::GaussianPosterior(Eigen::VectorXd mean, const Eigen::MatrixXd& precision)
    : mean_(std::move(mean)), llt_(precision) {
  if (llt_.info() != Eigen::Success) throw DomainError("posterior precision is not positive definite");
  if (precision.rows() != mean_.size()) throw DimensionError("precision does not match mean");
}

Eigen::MatrixXd GaussianPosterior::covariance() const {
  return llt_.solve(Eigen::MatrixXd::Identity(mean_.size(), mean_.size()));
}

Eigen::MatrixXd GaussianPosterior::sample(int n, Rng& rng) const {
  std::normal_distribution<double> z;
  const auto p = mean_.size();
  Eigen::MatrixXd out(n, p);
  Eigen::VectorXd e(p);
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) e(j) = z(rng);
    out.row(i) = (mean_ + llt_.matrixU().solve(e)).transpose();
  }
  return out;
}

double GaussianPosterior::log_density(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd d = llt_.matrixU() * (x - mean_);
  return -0.5 * d.squaredNorm();
}

GaussianPosterior posterior_gaussian(const FitState& fit) {
  return GaussianPosterior(fit.beta, fit.precision());
}

// ---------------------------------------------------------------------------

Bands pointwise_bands(const Eigen::MatrixXd& paths) {
  const auto n = paths.cols();
  Bands b{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n),
          Eigen::VectorXd(n)};
  std::vector<double> col;
  for (Eigen::Index j = 0; j < n; ++j) {
    col.clear();
    for (Eigen::Index i = 0; i < paths.rows(); ++i) {
      if (!std::isnan(paths(i, j))) col.push_back(paths(i, j));
    }
    std::sort(col.begin(), col.end());
    auto q = [&](double p) {
      if (col.empty()) return std::numeric_limits<double>::quiet_NaN();
      const double h = p * static_cast<double>(col.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(h));
      const auto hi = std::min(lo + 1, col.size() - 1);
      return col[lo] + (h - static_cast<double>(lo)) * (col[hi] - col[lo]);
    };
    b.q025(j) = q(0.025);
    b.q16(j) = q(0.16);
    b.median(j) = q(0.5);
    b.q84(j) = q(0.84);
    b.q975(j) = q(0.975);
  }
  return b;
}

std::vector<double> peak_day_distribution(const Eigen::MatrixXd& paths, Eigen::Index last) {
  std::vector<double> p(static_cast<std::size_t>(paths.cols()), 0.0);
  if (paths.rows() == 0 || paths.cols() == 0) return p;
  const Eigen::Index end = last < 0 ? paths.cols() : std::min(last + 1, paths.cols());
  for (Eigen::Index i = 0; i < paths.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < end; ++j) {
      if (paths(i, j) > paths(i, best)) best = j;
    }
    p[static_cast<std::size_t>(best)] += 1.0;
  }
  for (double& v : p) v /= static_cast<double>(paths.rows());
  return p;
}

int distribution_mode(const std::vector<double>& probabilities) {
  if (probabilities.empty()) return -1;
  return static_cast<int>(std::max_element(probabilities.begin(), probabilities.end()) -
                          probabilities.begin());
}

PosteriorEnsemble pool_over_durations(const DeathModel& model_template, const DurationEnsemble& ensemble,
                                      const PoolOptions& options) {
  const int r_count = static_cast<int>(ensemble.draws.size());
  if (r_count == 0) throw InputError("duration ensemble is empty");
  if (options.samples_per_draw < 1) throw InputError("samples_per_draw must be >= 1");

  struct Slot {
    bool ok = false;
    std::string error;
    FitState fit;
    Eigen::MatrixXd draws;
    Eigen::VectorXd ess;
    std::string warning;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(r_count));
  std::atomic<int> next{0};

  auto worker = [&] {
    for (int r = next++; r < r_count; r = next++) {
      Slot& s = slots[static_cast<std::size_t>(r)];
      try {
        const DeathModel m = model_template.with_distribution(ensemble.draws[static_cast<std::size_t>(r)]);
        s.fit = fit_empirical_bayes(m, options.fit);
        Rng rng = stream_rng(options.seed, static_cast<std::uint64_t>(r));
        if (options.sampler == SamplerKind::gaussian) {
          s.draws = posterior_gaussian(s.fit).sample(options.samples_per_draw, rng);
          s.ess = Eigen::VectorXd::Constant(m.n_coef(), options.samples_per_draw);
        } else {
          MhResult mh = mh_sample(m, s.fit, options.mh, rng);
          // Thin evenly to the common sample count.
          const auto len = mh.chain.rows();
          s.draws.resize(options.samples_per_draw, mh.chain.cols());
          for (int i = 0; i < options.samples_per_draw; ++i) {
            const auto idx = static_cast<Eigen::Index>((static_cast<double>(i) + 0.5) * len /
                                                       options.samples_per_draw);
            s.draws.row(i) = mh.chain.row(std::min(idx, len - 1));
          }
          s.ess = mh.ess;
          s.warning = mh.warning;
        }
        s.ok = true;
      } catch (const std::exception& e) {
        s.error = e.what();
      }
    }
  };

  unsigned n_threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(r_count));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  PosteriorEnsemble out;
  int failures = 0;
  std::vector<const Slot*> good;
  for (int r = 0; r < r_count; ++r) {
    const Slot& s = slots[static_cast<std::size_t>(r)];
    if (!s.ok) {
      ++failures;
      out.warnings.push_back("duration draw " + std::to_string(r) + " skipped: " + s.error);
      continue;
    }
    if (!s.warning.empty()) out.warnings.push_back("duration draw " + std::to_string(r) + ": " + s.warning);
    good.push_back(&s);
    out.fits.push_back(s.fit);
    out.fitted_draws.push_back(r);
  }
  if (good.empty() || failures > r_count / 10) {
    std::string msg = std::to_string(failures) + " of " + std::to_string(r_count) + " duration draws failed";
    if (!out.warnings.empty()) msg += "; first: " + out.warnings.front();
    throw ConvergenceError(msg);
  }

  const auto per = options.samples_per_draw;
  const auto p = good.front()->draws.cols();
  out.draws.resize(static_cast<Eigen::Index>(good.size()) * per, p);
  out.ess = Eigen::VectorXd::Zero(p);
  for (std::size_t g = 0; g < good.size(); ++g) {
    out.draws.middleRows(static_cast<Eigen::Index>(g) * per, per) = good[g]->draws;
    out.ess += good[g]->ess;
    out.tags.insert(out.tags.end(), static_cast<std::size_t>(per), out.fitted_draws[g]);
  }

  // f_c and R_t depend on the coefficients only, not on the duration law.
  const auto rows = out.draws.rows();
  out.incidence.resize(rows, model_template.n_incidence());
  const bool renewal = model_template.kind() == ModelKind::renewal;
  if (renewal) out.reproduction.resize(rows, model_template.n_incidence());
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::VectorXd b = out.draws.row(i).transpose();
    out.incidence.row(i) = model_template.smooth_path(b).transpose();
    if (renewal) out.reproduction.row(i) = model_template.reproduction_path(b).transpose();
  }
  return out;
}

}  // namespace backcalc
