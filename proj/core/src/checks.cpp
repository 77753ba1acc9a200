#include "backcalc/checks.hpp"

#include "backcalc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace backcalc {

void validate(const ScenarioSpec& s) {
  if (!(s.doubling_time > 0.0)) throw InputError("doubling time must be > 0");
  if (!(s.drop_factor > 0.0 && s.drop_factor <= 1.0)) throw InputError("drop factor must lie in (0, 1]");
  if (!(s.decay_rate > 0.0)) throw InputError("decay rate must be > 0");
  if (s.lockdown_day < 2 || s.lockdown_day >= s.horizon - 1) throw InputError("lockdown day outside horizon");
  if (!(s.peak > 0.0)) throw InputError("peak must be > 0");
}

Eigen::VectorXd scenario_incidence(const ScenarioSpec& s) {
  validate(s);
  Eigen::VectorXd f(s.horizon);
  const int top = s.lockdown_day - 1;
  for (int t = 0; t < s.horizon; ++t) {
    if (t <= top) {
      f(t) = s.peak * std::exp2((t - top) / s.doubling_time);
    } else {
      f(t) = s.peak * s.drop_factor * std::pow(s.decay_rate, t - s.lockdown_day);
    }
  }
  return f;
}

SimulatedDeaths simulate_from_incidence(const Eigen::VectorXd& expected, const DurationDist& dist,
                                        Rng& rng) {
  const auto n = expected.size();
  SimulatedDeaths out;
  out.truth = expected;
  out.infections.resize(n);
  Eigen::VectorXd deaths = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!(expected(j) >= 0.0)) throw InputError("expected incidence must be >= 0");
    const long count = expected(j) > 0.0 ? std::poisson_distribution<long>(expected(j))(rng) : 0;
    out.infections(j) = static_cast<double>(count);
    for (long c = 0; c < count; ++c) {
      const double d = dist.sample(rng);
      const auto i = j + static_cast<Eigen::Index>(std::lround(d)) - 1;
      if (i >= 0 && i < n) deaths(i) += 1.0;
    }
  }
  out.series = DeathSeries::from_counts(deaths);
  return out;
}

SimulatedDeaths simulate_extreme(const ScenarioSpec& spec, const DurationDist& dist, Rng& rng) {
  SimulatedDeaths out = simulate_from_incidence(scenario_incidence(spec), dist, rng);
  out.series.anchors["lockdown"] = incidence_date(out.series, spec.lockdown_day);
  return out;
}

Eigen::VectorXd simulate_nb_deaths(const Eigen::MatrixXd& delay, const Eigen::VectorXd& fc, double theta,
                                   Rng& rng, const Eigen::VectorXd& weekly) {
  if (!(theta > 0.0)) throw InputError("theta must be > 0");
  Eigen::VectorXd mu = delay * fc;
  if (weekly.size() > 0) mu.array() *= weekly.array().exp();
  Eigen::VectorXd y(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (!(mu(i) > 0.0)) {
      y(i) = 0.0;
      continue;
    }
    const double rate = std::gamma_distribution<double>(theta, mu(i) / theta)(rng);
    y(i) = rate > 0.0 ? static_cast<double>(std::poisson_distribution<long>(rate)(rng)) : 0.0;
  }
  return y;
}

double SanityEnvelope::coverage(const Eigen::VectorXd& observed) const {
  if (observed.size() != lower.size()) throw DimensionError("observed series length mismatch");
  int inside = 0;
  for (Eigen::Index i = 0; i < observed.size(); ++i) {
    if (observed(i) >= lower(i) && observed(i) <= upper(i)) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(observed.size());
}

SanityEnvelope forward_sanity(const Eigen::MatrixXd& delay, const Eigen::VectorXd& fc,
                              const Eigen::VectorXd& fw, double theta, int n_reps, std::uint64_t seed) {
  if (n_reps < 1) throw InputError("n_reps must be >= 1");
  SanityEnvelope env;
  env.mu = delay * fc;
  if (fw.size() > 0) env.mu.array() *= fw.array().exp();
  env.sims.resize(n_reps, env.mu.size());
  for (int r = 0; r < n_reps; ++r) {
    Rng rng = stream_rng(seed, static_cast<std::uint64_t>(r));
    env.sims.row(r) = simulate_nb_deaths(delay, fc, theta, rng, fw).transpose();
  }
  const Bands b = pointwise_bands(env.sims);
  env.lower = b.q025;
  env.median = b.median;
  env.upper = b.q975;
  return env;
}

int identifiable_end(const DeathModel& model) {
  const int last = model.n_incidence() - 1;
  if (model.kind() == ModelKind::basic) return last;
  // Column j reaches death day i through lag i - j + lead + 1.
  const double median = model.spec().dist.median();
  const int end = static_cast<int>(std::floor(model.n_obs() + model.spec().lead_days - median));
  return std::clamp(end, 0, last);
}

PeakAnalysis peak_analysis(const DeathModel& model, const DurationEnsemble& ensemble,
                           const PoolOptions& options) {
  PeakAnalysis out;
  out.posterior = pool_over_durations(model, ensemble, options);
  out.search_end = identifiable_end(model);
  out.peak = peak_day_distribution(out.posterior.incidence, out.search_end);
  out.mode = distribution_mode(out.peak);
  out.mode_probability = out.mode >= 0 ? out.peak[static_cast<std::size_t>(out.mode)] : 0.0;
  return out;
}

PeakAnalysis refit_dilated(const DeathSeries& series, ModelKind kind, const DurationEnsemble& ensemble,
                           ModelOptions options, int anchor, const PoolOptions& pool,
                           DilationWeights weights) {
  options.dilation_anchor = anchor;
  options.dilation = weights;
  const DeathModel model(build_spec(kind, series, ensemble.mean_dist, options), series.deaths);
  return peak_analysis(model, ensemble, pool);
}

StepVariantResult renewal_step_variant(const DeathSeries& series, const DurationDist& dist,
                                       ModelOptions options, int anchor, const FitOptions& fit) {
  options.step_anchor = anchor;
  const DeathModel model(build_spec(ModelKind::renewal, series, dist, options), series.deaths);
  FitOptions fo = fit;
  if (!fo.start_anchor) fo.start_anchor = anchor;
  StepVariantResult out;
  out.fit = fit_empirical_bayes(model, fo);
  out.r = model.reproduction_path(out.fit.beta);
  out.r_eve = out.r(anchor - 1);
  out.step = out.fit.beta(model.extra_offset());
  const auto n = out.r.size();
  const auto week = std::min<Eigen::Index>(7, n);
  for (Eigen::Index t = 0; t < n; ++t) {
    if (t >= week && t < n - week) continue;
    if (out.r(t) < 0.25 || out.r(t) > 4.0) out.boundary_artefact = true;
  }
  return out;
}

IfrAdjustment ifr_adjust(const DeathSeries& deaths, double rate, int start) {
  if (!(rate > 0.0)) throw InputError("rate must be > 0");
  if (start < 0 || start >= deaths.size()) throw InputError("start day outside the series");
  IfrAdjustment out;
  out.adjusted = deaths;
  out.ratio = Eigen::VectorXd::Ones(deaths.size());
  for (int t = start; t < deaths.size(); ++t) out.ratio(t) = std::pow(rate, -(t - start));
  out.adjusted.deaths = deaths.deaths.cwiseProduct(out.ratio);
  return out;
}

ImputationDemo naive_imputation_demo(const DeathModel& model, int n_reps, std::uint64_t seed,
                                     const FitOptions& fit) {
  if (model.kind() != ModelKind::incidence) throw InputError("imputation demo compares against the incidence model");
  if (n_reps < 1) throw InputError("n_reps must be >= 1");
  const DurationDist& dist = model.spec().dist;
  const Eigen::VectorXd& y = model.y();
  const int n = model.n_obs();
  const int lead = model.spec().lead_days;
  // Extra lead-in so that imputed infections before the grid are kept.
  const int extra = static_cast<int>(std::ceil(dist.quantile(0.999)));
  const int n_ext = model.n_incidence() + extra;

  Eigen::VectorXd imputed = Eigen::VectorXd::Zero(n_ext);
  for (int r = 0; r < n_reps; ++r) {
    Rng rng = stream_rng(seed, static_cast<std::uint64_t>(r));
    for (int i = 0; i < n; ++i) {
      const auto count = static_cast<long>(std::lround(y(i)));
      for (long c = 0; c < count; ++c) {
        const long lag = std::lround(dist.sample(rng));
        const long j = i + lead + extra - lag + 1;
        if (j >= 0 && j < n_ext) imputed(j) += 1.0;
      }
    }
  }
  imputed /= static_cast<double>(n_reps);

  ImputationDemo out;
  out.imputed = imputed.tail(model.n_incidence());
  out.implied = delay_matrix(dist, n, n_ext) * imputed;
  const Eigen::VectorXd mu_naive = out.implied.cwiseMax(1e-10);
  out.naive_deviance = nb_deviance(y, mu_naive, model.theta()).d.sum();

  const FitState st = fit_empirical_bayes(model, fit);
  out.proper_deviance = st.deviance;
  out.proper_incidence = model.smooth_path(st.beta);
  out.deviance_ratio = out.naive_deviance / std::max(out.proper_deviance, 1e-300);
  return out;
}

double max_drop_ratio(const Eigen::VectorXd& path, int centre) {
  double worst = 0.0;
  const int lo = std::max(0, centre - 3);
  const int hi = std::min(static_cast<int>(path.size()) - 1, centre + 3);
  for (int t = lo; t <= hi; ++t) {
    for (int h = 1; h <= 3 && t + h <= hi; ++h) {
      if (path(t + h) > 0.0) worst = std::max(worst, path(t) / path(t + h));
    }
  }
  return worst;
}

}  // namespace backcalc
