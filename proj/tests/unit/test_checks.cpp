#include "../common.hpp"

#include "backcalc/checks.hpp"

#include <doctest.h>

#include <boost/math/distributions/poisson.hpp>

#include <cmath>

using namespace backcalc;

TEST_CASE("extreme scenario doubles, drops and decays as specified") {
  ScenarioSpec s;
  const Eigen::VectorXd f = scenario_incidence(s);
  const int l = s.lockdown_day;
  CHECK(f.size() == s.horizon);
  CHECK(f(l - 1) == doctest::Approx(s.peak));
  CHECK(f(l - 1) / f(l - 4) == doctest::Approx(2.0));
  CHECK(f(l) / f(l - 1) == doctest::Approx(s.drop_factor));
  CHECK(f(l - 1) / f(l) == doctest::Approx(5.0));
  CHECK(f(l + 5) / f(l + 4) == doctest::Approx(s.decay_rate));
  s.drop_factor = 1.5;
  CHECK_THROWS_AS(validate(s), InputError);
  s = ScenarioSpec{};
  s.lockdown_day = s.horizon + 1;
  CHECK_THROWS_AS(validate(s), InputError);
}

TEST_CASE("simulated deaths have the discretized convolution as mean") {
  const auto dist = DurationDist::lognormal(2.6, 0.4);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(40);
  f(5) = 30.0;
  f(12) = 60.0;
  const int reps = 500;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(40), sq = Eigen::VectorXd::Zero(40);
  for (int r = 0; r < reps; ++r) {
    Rng rng = stream_rng(31, static_cast<std::uint64_t>(r));
    const Eigen::VectorXd y = simulate_from_incidence(f, dist, rng).series.deaths;
    sum += y;
    sq += y.cwiseProduct(y);
  }
  // Death on day j + round(D) - 1. Forty days are compared, so allow 4 SE.
  double total_expect = 0.0;
  for (int t = 0; t < 40; ++t) {
    double expect = 0.0;
    for (int j = 0; j <= t; ++j) expect += f(j) * day_bin_probability(dist, t - j + 1);
    const double mean = sum(t) / reps;
    const double var = sq(t) / reps - mean * mean;
    const double se = std::sqrt(std::max(var, expect) / reps);
    CHECK(std::abs(mean - expect) <= 4.0 * se + 1e-9);
    total_expect += expect;
  }
  const double total = sum.sum() / reps;
  CHECK(std::abs(total - total_expect) <= 3.0 * std::sqrt(total_expect / reps));
}

TEST_CASE("NB simulation mean and variance") {
  const Eigen::MatrixXd b = delay_matrix(DurationDist::lognormal(2.6, 0.4), 30);
  const Eigen::VectorXd fc = Eigen::VectorXd::Constant(30, 50.0);
  const Eigen::VectorXd mu = b * fc;
  const double theta = 5.0;
  const int reps = 4000;
  double s = 0.0, ss = 0.0;
  Rng rng = stream_rng(32, 0);
  for (int r = 0; r < reps; ++r) {
    const double y = simulate_nb_deaths(b, fc, theta, rng)(29);
    s += y;
    ss += y * y;
  }
  const double m = s / reps, v = ss / reps - m * m;
  const double var = mu(29) + mu(29) * mu(29) / theta;
  CHECK(std::abs(m - mu(29)) < 4.0 * std::sqrt(var / reps));
  CHECK(v == doctest::Approx(var).epsilon(0.12));
}

TEST_CASE("forward sanity envelope is deterministic and ordered") {
  const Eigen::MatrixXd b = delay_matrix(DurationDist::lognormal(2.8, 0.4), 50);
  const Eigen::VectorXd fc = backcalc::testing::smooth_wave(50, 20.0, 100.0);
  const SanityEnvelope a = forward_sanity(b, fc, {}, 10.0, 200, 7);
  const SanityEnvelope c = forward_sanity(b, fc, {}, 10.0, 200, 7);
  CHECK(a.sims == c.sims);
  CHECK(a.sims.rows() == 200);
  CHECK((a.mu - b * fc).cwiseAbs().maxCoeff() < 1e-9);
  for (int t = 0; t < 50; ++t) {
    CHECK(a.lower(t) <= a.median(t));
    CHECK(a.median(t) <= a.upper(t));
  }
  CHECK(a.coverage(a.median) == doctest::Approx(1.0));
  Eigen::VectorXd far = a.upper.array() + 1000.0;
  CHECK(a.coverage(far) == doctest::Approx(0.0));
}

TEST_CASE("IFR adjustment") {
  const DeathSeries s = DeathSeries::from_counts(Eigen::VectorXd::Constant(20, 10.0));
  const IfrAdjustment same = ifr_adjust(s, 1.0, 5);
  CHECK(same.adjusted.deaths == s.deaths);
  const IfrAdjustment a = ifr_adjust(s, 0.985, 5);
  for (int t = 0; t < 20; ++t) {
    const double ratio = t < 5 ? 1.0 : std::pow(0.985, -(t - 5));
    CHECK(a.ratio(t) == doctest::Approx(ratio));
    CHECK(a.adjusted.deaths(t) == doctest::Approx(10.0 * ratio));
  }
  CHECK(a.adjusted.dates == s.dates);
  CHECK_THROWS_AS(ifr_adjust(s, 0.0, 5), InputError);
  CHECK_THROWS_AS(ifr_adjust(s, 0.985, 25), InputError);
}

TEST_CASE("naive imputation of a steady series stays level") {
  const DeathSeries s = DeathSeries::from_counts(Eigen::VectorXd::Constant(120, 50.0));
  ModelOptions mo;
  mo.k = 10;
  mo.weekly = false;
  mo.theta = 50.0;
  const auto dist = DurationDist::lognormal(2.8, 0.4);
  const DeathModel m(build_spec(ModelKind::incidence, s, dist, mo), s.deaths);
  const ImputationDemo d = naive_imputation_demo(m, 20, 3);
  // Far from both ends every day receives on average one day's deaths.
  for (int t = 30; t < 80; ++t) CHECK(d.imputed(t) == doctest::Approx(50.0).epsilon(0.1));
  CHECK(d.implied.size() == 120);
  CHECK(d.deviance_ratio == doctest::Approx(d.naive_deviance / d.proper_deviance));
}

TEST_CASE("drop ratio looks three days either side") {
  Eigen::VectorXd p = Eigen::VectorXd::Constant(20, 10.0);
  p(11) = 4.0;
  CHECK(max_drop_ratio(p, 10) == doctest::Approx(2.5));
  p(11) = 10.0;
  p(15) = 1.0;  // outside the window
  CHECK(max_drop_ratio(p, 10) == doctest::Approx(1.0));
}

TEST_CASE("a scenario without a drop keeps growing") {
  ScenarioSpec s;
  s.drop_factor = 1.0;
  s.decay_rate = std::exp2(1.0 / s.doubling_time);
  const Eigen::VectorXd f = scenario_incidence(s);
  const double g = std::exp2(1.0 / s.doubling_time);
  // Lockdown day repeats the peak level, then growth continues at the same rate.
  for (int t = 0; t + 1 < s.horizon; ++t) {
    if (t == s.lockdown_day - 1) CHECK(f(t + 1) == doctest::Approx(f(t)));
    else CHECK(f(t + 1) / f(t) == doctest::Approx(g));
  }
}

TEST_CASE("forward simulation covers data from a well-fitting model") {
  const auto dist = DurationDist::lognormal(3.1, 0.45);
  const DeathSeries s = backcalc::testing::nb_series(backcalc::testing::smooth_wave(120, 40.0, 400.0), dist, 20.0, 5);
  ModelOptions mo;
  mo.theta = 20.0;
  const DeathModel m(build_spec(ModelKind::incidence, s, dist, mo), s.deaths);
  const FitState fit = fit_empirical_bayes(m);
  const LinkState st = m.predict(fit.beta);
  const SanityEnvelope e = forward_sanity(m.delay(), st.fc, st.fw, 20.0, 200, 1);
  CHECK(e.coverage(s.deaths) >= 0.9);
}

TEST_CASE("a huge theta gives Poisson envelopes") {
  const Eigen::MatrixXd b = delay_matrix(DurationDist::lognormal(2.8, 0.4), 60);
  const Eigen::VectorXd fc = Eigen::VectorXd::Constant(60, 400.0);
  const SanityEnvelope e = forward_sanity(b, fc, {}, 1e9, 4000, 3);
  const Eigen::VectorXd col = e.sims.col(59);
  const double m = col.mean(), v = (col.array() - m).square().sum() / (col.size() - 1.0);
  CHECK(v / m == doctest::Approx(1.0).epsilon(0.08));
  const boost::math::poisson_distribution<double> pois(e.mu(59));
  CHECK(e.lower(59) == doctest::Approx(boost::math::quantile(pois, 0.025)).epsilon(0.03));
  CHECK(e.upper(59) == doctest::Approx(boost::math::quantile(pois, 0.975)).epsilon(0.03));
}

TEST_CASE("IFR adjustment slows the decline of the tail") {
  const DeathSeries s = DeathSeries::from_counts(Eigen::VectorXd::LinSpaced(40, 200.0, 10.0));
  const IfrAdjustment a = ifr_adjust(s, 0.985, 10);
  for (int t = 11; t < 40; ++t) CHECK(a.ratio(t) > a.ratio(t - 1));
  for (int t = 11; t < 40; ++t)
    CHECK(a.adjusted.deaths(t) / a.adjusted.deaths(t - 1) > s.deaths(t) / s.deaths(t - 1));
}

TEST_CASE("step variant with a zero step is the relaxed renewal model") {
  const auto dist = DurationDist::lognormal(3.0, 0.45);
  const DeathSeries s = backcalc::testing::nb_series(backcalc::testing::smooth_wave(80, 35.0, 300.0), dist, 20.0, 9);
  ModelOptions mo;
  mo.k = 12;
  const DeathModel relaxed(build_spec(ModelKind::renewal, s, dist, mo), s.deaths);
  mo.step_anchor = 40;
  const DeathModel stepped(build_spec(ModelKind::renewal, s, dist, mo), s.deaths);
  REQUIRE(stepped.n_coef() == relaxed.n_coef() + 1);
  const Eigen::VectorXd beta = relaxed.initial_beta(40);
  Eigen::VectorXd with_step(stepped.n_coef());
  with_step << beta.head(relaxed.extra_offset()), 0.0, beta.tail(relaxed.n_coef() - relaxed.extra_offset());
  CHECK(backcalc::testing::rel_error(stepped.predict(with_step).mu, relaxed.predict(beta).mu) < 1e-14);
}

TEST_CASE("a step placed before a smooth peak still finds a large drop") {
  const auto dist = DurationDist::lognormal(3.19, 0.44);
  const DeathSeries s = backcalc::testing::nb_series(backcalc::testing::smooth_wave(110, 40.0, 500.0), dist, 20.0, 500);
  ModelOptions mo;
  mo.theta = 20.0;
  const StepVariantResult r = renewal_step_variant(s, dist, mo, 35);
  // R falls by more than a third at a date where nothing happened.
  CHECK(std::exp(r.step) < 2.0 / 3.0);
}

TEST_CASE("naive imputation is faithful only at equilibrium") {
  const DeathSeries s = DeathSeries::from_counts(Eigen::VectorXd::Constant(120, 50.0));
  ModelOptions mo;
  mo.k = 10;
  mo.weekly = false;
  mo.theta = 50.0;
  const DeathModel m(build_spec(ModelKind::incidence, s, DurationDist::lognormal(2.8, 0.4), mo), s.deaths);
  const ImputationDemo d = naive_imputation_demo(m, 20, 3);
  // The last weeks lose infections whose deaths fall after the data end.
  const int edge = static_cast<int>(std::ceil(m.spec().dist.quantile(0.95)));
  for (int t = 40; t < 120 - edge; ++t) CHECK(d.implied(t) == doctest::Approx(50.0).epsilon(0.1));
  CHECK(d.implied(119) < 45.0);
}

TEST_CASE("imputed incidence falls less steeply than the deconvolution after a drop") {
  ScenarioSpec spec;
  const DurationEnsemble ens = duration_ensemble(1, 2020);
  Rng rng = stream_rng(60, 0);
  const SimulatedDeaths sim = simulate_extreme(spec, ens.mean_dist, rng);
  ModelOptions mo;
  mo.theta = 50.0;
  const DeathModel m(build_spec(ModelKind::incidence, sim.series, ens.mean_dist, mo), sim.series.deaths);
  const ImputationDemo d = naive_imputation_demo(m, 20, 4);
  const int l = spec.lockdown_day;
  // Fall over the week after lockdown, on the log scale.
  const double naive = std::log(d.imputed(l - 1) / d.imputed(l + 6));
  const double proper = std::log(d.proper_incidence(l - 1) / d.proper_incidence(l + 6));
  CHECK(naive < proper);
}
