#include "../common.hpp"

#include "backcalc/inference.hpp"
#include "backcalc/pipeline.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace backcalc;
using backcalc::testing::rel_error;

namespace {

struct Fixture {
  DeathSeries series;
  DurationDist dist = DurationDist::lognormal(3.0, 0.45);
  ModelOptions options;
  Fixture() {
    series = backcalc::testing::nb_series(backcalc::testing::smooth_wave(70, 30.0, 400.0), dist, 20.0, 21);
    options.k = 14;
    options.theta = 20.0;
  }
  DeathModel model(ModelKind kind = ModelKind::incidence) const {
    return DeathModel(build_spec(kind, series, dist, options), series.deaths);
  }
};

// Type-7 quantile by sorting.
double quantile7(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (v.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

}  // namespace

TEST_CASE("penalized Newton reaches a stationary point") {
  const Fixture fx;
  const DeathModel m = fx.model();
  const std::vector<double> lambda(static_cast<std::size_t>(m.n_lambda()), 50.0);
  const FitState fit = fit_fixed_lambda(m, lambda);
  const LinkState st = m.predict(fit.beta, 1);
  const NbDeviance dev = nb_deviance(m.y(), st.mu, m.theta());
  const Eigen::VectorXd grad = -0.5 * st.jacobian.transpose() * dev.d1 - fit.penalty * fit.beta;
  const Eigen::VectorXd scale = (0.5 * st.jacobian.transpose() * dev.d1.cwiseAbs()).cwiseAbs();
  CHECK(grad.cwiseAbs().maxCoeff() < 1e-5 * (1.0 + scale.maxCoeff()));
  CHECK(fit.deviance == doctest::Approx(dev.d.sum()).epsilon(1e-10));
  CHECK(fit.lambda == lambda);
}

TEST_CASE("Fellner-Schall iterations never lower the Laplace criterion") {
  const Fixture fx;
  for (ModelKind kind : {ModelKind::basic, ModelKind::incidence}) {
    const FitState fit = fit_empirical_bayes(fx.model(kind));
    REQUIRE(fit.lml_trace.size() >= 2);
    for (std::size_t i = 1; i < fit.lml_trace.size(); ++i)
      CHECK(fit.lml_trace[i] >= fit.lml_trace[i - 1] - 1e-6 * std::abs(fit.lml_trace[i - 1]));
    CHECK(fit.lml == doctest::Approx(laplace_marginal(fx.model(kind), fit)).epsilon(1e-9));
  }
}

TEST_CASE("theta search recovers the simulation dispersion roughly") {
  const Fixture fx;
  FitOptions o;
  o.estimate_theta = true;
  const FitState fit = fit_empirical_bayes(fx.model(ModelKind::basic), o);
  CHECK(fit.theta > 6.0);
  CHECK(fit.theta < 80.0);
}

TEST_CASE("Gaussian posterior draws have the inverse precision as covariance") {
  Eigen::Matrix3d p;
  p << 4.0, 1.0, 0.5, 1.0, 3.0, -0.4, 0.5, -0.4, 2.0;
  const Eigen::Vector3d mean(1.0, -2.0, 0.5);
  const GaussianPosterior g(mean, p);
  CHECK(rel_error(g.covariance(), p.inverse()) < 1e-12);
  Rng rng = stream_rng(8, 0);
  const Eigen::MatrixXd x = g.sample(200000, rng);
  const Eigen::RowVectorXd m = x.colwise().mean();
  const Eigen::MatrixXd c = (x.rowwise() - m).transpose() * (x.rowwise() - m) / (x.rows() - 1.0);
  CHECK(rel_error(m.transpose(), mean) < 0.01);
  CHECK(rel_error(c, p.inverse()) < 0.02);
  CHECK(g.log_density(mean) > g.log_density(mean + Eigen::Vector3d(0.1, 0.0, 0.0)));
}

TEST_CASE("bands are type-7 quantiles per column, ignoring NaN") {
  Rng rng = stream_rng(9, 0);
  std::normal_distribution<double> z;
  Eigen::MatrixXd paths(37, 4);
  for (auto& v : paths.reshaped()) v = z(rng);
  paths(3, 2) = std::numeric_limits<double>::quiet_NaN();
  const Bands b = pointwise_bands(paths);
  for (int c = 0; c < 4; ++c) {
    std::vector<double> col;
    for (int r = 0; r < 37; ++r)
      if (!std::isnan(paths(r, c))) col.push_back(paths(r, c));
    CHECK(b.q025(c) == doctest::Approx(quantile7(col, 0.025)));
    CHECK(b.q16(c) == doctest::Approx(quantile7(col, 0.16)));
    CHECK(b.median(c) == doctest::Approx(quantile7(col, 0.5)));
    CHECK(b.q84(c) == doctest::Approx(quantile7(col, 0.84)));
    CHECK(b.q975(c) == doctest::Approx(quantile7(col, 0.975)));
  }
}

TEST_CASE("peak day distribution counts row argmax with earliest ties") {
  Eigen::MatrixXd p(4, 3);
  p << 1, 3, 2,
       5, 5, 1,
       0, 1, 2,
       1, 4, 4;
  const auto d = peak_day_distribution(p);
  REQUIRE(d.size() == 3);
  CHECK(d[0] == doctest::Approx(0.25));
  CHECK(d[1] == doctest::Approx(0.5));
  CHECK(d[2] == doctest::Approx(0.25));
  CHECK(distribution_mode(d) == 1);
}

TEST_CASE("ESS of iid and AR(1) chains") {
  Rng rng = stream_rng(10, 0);
  std::normal_distribution<double> z;
  const int n = 100000;
  Eigen::VectorXd iid(n), ar(n);
  const double rho = 0.8;
  double prev = 0.0;
  for (int i = 0; i < n; ++i) {
    iid(i) = z(rng);
    prev = rho * prev + std::sqrt(1 - rho * rho) * z(rng);
    ar(i) = prev;
  }
  CHECK(effective_sample_size(iid) == doctest::Approx(n).epsilon(0.08));
  CHECK(effective_sample_size(ar) == doctest::Approx(n * (1 - rho) / (1 + rho)).epsilon(0.12));
  Eigen::MatrixXd both(n, 2);
  both << iid, ar;
  const Eigen::VectorXd e = effective_sample_sizes(both);
  CHECK(e(0) == doctest::Approx(effective_sample_size(iid)));
  CHECK(e(1) == doctest::Approx(effective_sample_size(ar)));
}

TEST_CASE("MH chain on a Gaussian target reproduces its moments") {
  Eigen::Matrix2d cov;
  cov << 1.0, 0.6, 0.6, 2.0;
  const Eigen::Vector2d mean(0.5, -1.0);
  const Eigen::Matrix2d prec = cov.inverse();
  auto logp = [&](const Eigen::VectorXd& x) {
    const Eigen::VectorXd d = x - mean;
    return -0.5 * d.dot(prec * d);
  };
  MhOptions o;
  o.n_samples = 60000;
  Rng rng = stream_rng(11, 0);
  // Deliberately wrong proposal moments.
  const MhResult r = mh_sample(logp, Eigen::Vector2d(0.0, 0.0), 1.5 * cov, o, rng);
  CHECK(r.chain.rows() == 60000);
  const Eigen::RowVectorXd m = r.chain.colwise().mean();
  const Eigen::MatrixXd c = (r.chain.rowwise() - m).transpose() * (r.chain.rowwise() - m) / (r.chain.rows() - 1.0);
  CHECK(std::abs(m(0) - 0.5) < 0.03);
  CHECK(std::abs(m(1) + 1.0) < 0.04);
  CHECK(rel_error(c, cov) < 0.05);
  CHECK(r.accept_independence > 0.3);
  CHECK(r.min_ess > 5000.0);
}

TEST_CASE("pooling is reproducible and independent of the thread count") {
  const Fixture fx;
  const DeathModel m = fx.model();
  const DurationEnsemble ens = duration_ensemble(3, 5);
  PoolOptions o;
  o.samples_per_draw = 50;
  o.seed = 4;
  o.threads = 1;
  const PosteriorEnsemble a = pool_over_durations(m, ens, o);
  o.threads = 3;
  const PosteriorEnsemble b = pool_over_durations(m, ens, o);
  CHECK(a.draws.rows() == 150);
  CHECK(a.incidence.rows() == 150);
  CHECK(a.incidence.cols() == m.n_incidence());
  CHECK(std::count(a.tags.begin(), a.tags.end(), 2) == 50);
  CHECK(a.draws == b.draws);
  CHECK(a.incidence == b.incidence);
  CHECK(a.fits.size() == 3);
}

TEST_CASE("pooling over many duration draws widens the bands") {
  // Sample series, conditional on the first draw versus pooled over 100.
  RunConfig c;
  const DeathSeries s = load_series(c);
  const DurationEnsemble one = duration_ensemble(1, 1);
  const DurationEnsemble many = duration_ensemble(100, 1);
  ModelOptions mo;
  mo.theta = 25.0;
  const DeathModel m(build_spec(ModelKind::incidence, s, one.mean_dist, mo), s.deaths);
  PoolOptions o;
  o.samples_per_draw = 2000;
  const Bands b1 = pointwise_bands(pool_over_durations(m, one, o).incidence);
  o.samples_per_draw = 40;
  const Bands b100 = pointwise_bands(pool_over_durations(m, many, o).incidence);
  int wider = 0;
  for (Eigen::Index t = 0; t < b1.median.size(); ++t)
    if (b100.q975(t) - b100.q025(t) >= b1.q975(t) - b1.q025(t)) ++wider;
  CHECK(wider >= 0.9 * b1.median.size());
}

TEST_CASE("a single draw is conditional inference") {
  const Fixture fx;
  const DeathModel m = fx.model();
  DurationEnsemble same;
  same.mean_dist = fx.dist;
  same.draws = {fx.dist, fx.dist, fx.dist, fx.dist};
  DurationEnsemble one = same;
  one.draws.resize(1);
  PoolOptions o;
  o.samples_per_draw = 2000;
  const Bands b1 = pointwise_bands(pool_over_durations(m, one, o).incidence);
  o.samples_per_draw = 500;
  const Bands b4 = pointwise_bands(pool_over_durations(m, same, o).incidence);
  const Eigen::VectorXd w1 = b1.q975 - b1.q025;
  // Monte Carlo error of a 2.5% quantile from 2000 draws is a few percent of the width.
  CHECK(((b4.q975 - b1.q975).cwiseAbs().array() <= 0.15 * w1.array()).all());
  CHECK(((b4.median - b1.median).cwiseAbs().array() <= 0.1 * w1.array()).all());
}

TEST_CASE("an overwhelming penalty leaves a straight line") {
  const Fixture fx;
  ModelOptions o = fx.options;
  o.weekly = false;
  const DeathModel m(build_spec(ModelKind::basic, fx.series, fx.dist, o), fx.series.deaths);
  const FitState fit = fit_fixed_lambda(m, {1e12});
  const Eigen::VectorXd f = m.smooth_path(fit.beta).array().log();
  double worst = 0.0;
  for (Eigen::Index i = 1; i + 1 < f.size(); ++i) worst = std::max(worst, std::abs(f(i + 1) - 2 * f(i) + f(i - 1)));
  CHECK(worst < 1e-6);
}

TEST_CASE("no penalty and a full basis interpolate the data") {
  Eigen::VectorXd y(24);
  for (int i = 0; i < 24; ++i) y(i) = 20.0 + 10.0 * std::sin(i / 2.0) + (i % 3);
  const DeathSeries s = DeathSeries::from_counts(y);
  ModelOptions o;
  o.k = 24;
  o.weekly = false;
  o.theta = 10.0;
  const DeathModel m(build_spec(ModelKind::basic, s, DurationDist::lognormal(3.0, 0.45), o), s.deaths);
  FitOptions fo;
  fo.max_newton = 500;
  const FitState fit = fit_fixed_lambda(m, {1e-10}, fo);
  CHECK(fit.deviance < 1e-6);
}

TEST_CASE("penalized Hessian is positive semi-definite at the optimum") {
  const Fixture fx;
  for (ModelKind kind : {ModelKind::basic, ModelKind::incidence, ModelKind::renewal}) {
    CAPTURE(to_string(kind));
    FitOptions fo;
    if (kind == ModelKind::renewal) fo.start_anchor = 30;
    const FitState fit = fit_empirical_bayes(fx.model(kind), fo);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.precision());
    CHECK(es.eigenvalues().minCoeff() > -1e-6 * es.eigenvalues().maxCoeff());
  }
}

TEST_CASE("basic model credible intervals cover the true smooth") {
  // f with a weekly effect, theta = 15, n = 120, 100 replicates.
  const int n = 120;
  Eigen::VectorXd f(n), fw(n);
  for (int i = 0; i < n; ++i) {
    f(i) = std::log(backcalc::testing::smooth_wave(n, 50.0, 300.0)(i));
    fw(i) = 0.15 * std::sin(2.0 * M_PI * i / 7.0);
  }
  long covered = 0, total = 0;
  for (int r = 0; r < 100; ++r) {
    Rng rng = stream_rng(50, static_cast<std::uint64_t>(r));
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      const double mu = std::exp(f(i) + fw(i));
      std::gamma_distribution<double> g(15.0, mu / 15.0);
      y(i) = static_cast<double>(std::poisson_distribution<long>(g(rng))(rng));
    }
    const DeathSeries s = DeathSeries::from_counts(y);
    ModelOptions o;
    o.theta = 15.0;
    const DeathModel m(build_spec(ModelKind::basic, s, DurationDist::lognormal(3.0, 0.45), o), s.deaths);
    const FitState fit = fit_empirical_bayes(m);
    const Eigen::MatrixXd v = posterior_gaussian(fit).covariance();
    const Eigen::MatrixXd& x = m.spec().f_term.design;
    const Eigen::VectorXd fhat = x * fit.beta.head(m.f_size());
    const Eigen::MatrixXd vf = v.topLeftCorner(m.f_size(), m.f_size());
    // The weekly term has mean zero over a week, so f is identified up to that.
    for (int i = 0; i < n; ++i) {
      const double se = std::sqrt(x.row(i).dot(vf * x.row(i).transpose()));
      ++total;
      if (std::abs(fhat(i) - f(i)) <= 1.96 * se) ++covered;
    }
  }
  CHECK(static_cast<double>(covered) / static_cast<double>(total) >= 0.9);
}

TEST_CASE("Poisson data drive theta to its upper range") {
  const int n = 120;
  const Eigen::VectorXd truth = backcalc::testing::smooth_wave(n, 40.0, 400.0);
  Rng rng = stream_rng(51, 0);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = static_cast<double>(std::poisson_distribution<long>(truth(i))(rng));
  const DeathSeries s = DeathSeries::from_counts(y);
  FitOptions fo;
  fo.estimate_theta = true;
  const FitState fit =
      fit_empirical_bayes(DeathModel(build_spec(ModelKind::basic, s, DurationDist::lognormal(3.0, 0.45), {}), y), fo);
  CHECK(fit.theta > 100.0);
}

TEST_CASE("Gaussian posterior of a fitted model") {
  const Fixture fx;
  const FitState fit = fit_empirical_bayes(fx.model());
  const GaussianPosterior g = posterior_gaussian(fit);
  Rng rng = stream_rng(52, 0);
  const Eigen::MatrixXd x = g.sample(100000, rng);
  const Eigen::RowVectorXd m = x.colwise().mean();
  const Eigen::MatrixXd v = fit.precision().inverse();
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    CHECK(std::abs(m(j) - fit.beta(j)) <= 4.0 * std::sqrt(v(j, j) / 100000.0));
  const Eigen::MatrixXd c = (x.rowwise() - m).transpose() * (x.rowwise() - m) / (x.rows() - 1.0);
  CHECK((c - v).norm() / v.norm() < 0.05);
  Rng again = stream_rng(52, 0);
  CHECK(g.sample(5, again) == x.topRows(5));
}

TEST_CASE("MH chain halves agree") {
  const Fixture fx;
  const DeathModel m = fx.model();
  const FitState fit = fit_empirical_bayes(m);
  MhOptions o;
  o.n_samples = 20000;
  const auto var = [](const Eigen::VectorXd& c) { return (c.array() - c.mean()).square().sum() / (c.size() - 1.0); };
  // Neighbouring spline coefficients move together, so one excursion shows up
  // in several z-scores; pool chains and bound the exceedance rate.
  int bad = 0, total = 0;
  for (std::uint64_t seed = 53; seed < 59; ++seed) {
    Rng rng = stream_rng(seed, 0);
    const MhResult r = mh_sample(m, fit, o, rng);
    const Eigen::Index half = r.chain.rows() / 2;
    const Eigen::MatrixXd a = r.chain.topRows(half), b = r.chain.bottomRows(half);
    const Eigen::VectorXd ea = effective_sample_sizes(a), eb = effective_sample_sizes(b);
    for (Eigen::Index j = 0; j < r.chain.cols(); ++j, ++total) {
      const double se = std::sqrt(var(a.col(j)) / ea(j) + var(b.col(j)) / eb(j));
      if (std::abs(a.col(j).mean() - b.col(j).mean()) >= 3.0 * se) ++bad;
    }
  }
  CHECK(bad <= total / 20);
}

TEST_CASE("peak distribution of identical and two-bump draws") {
  Eigen::MatrixXd same(10, 30);
  const Eigen::VectorXd wave = backcalc::testing::smooth_wave(30, 12.0);
  for (int i = 0; i < 10; ++i) same.row(i) = wave.transpose();
  const auto d = peak_day_distribution(same);
  CHECK(d[12] == 1.0);

  Eigen::MatrixXd two(40, 30);
  for (int i = 0; i < 40; ++i) {
    const double early = i < 10 ? 2.0 : 1.0;  // 25% peak at day 8
    for (int t = 0; t < 30; ++t)
      two(i, t) = early * std::exp(-0.5 * std::pow((t - 8) / 2.0, 2)) + 1.5 * std::exp(-0.5 * std::pow((t - 22) / 2.0, 2));
  }
  const auto p = peak_day_distribution(two);
  CHECK(p[8] == doctest::Approx(0.25));
  CHECK(p[22] == doctest::Approx(0.75));
  // Search limited to the first 15 columns.
  const auto q = peak_day_distribution(two, 14);
  CHECK(q[8] == doctest::Approx(1.0));
}

TEST_CASE("adaptive smoothing fits a kinked series at least as well") {
  const int n = 160;
  Eigen::VectorXd truth(n);
  for (int t = 0; t < n; ++t) truth(t) = t < 80 ? 50.0 + 10.0 * std::sin(t / 12.0) : 50.0 * std::exp(-0.08 * (t - 80)) + 8.0;
  Rng rng = stream_rng(54, 0);
  Eigen::VectorXd y(n);
  for (int t = 0; t < n; ++t) y(t) = static_cast<double>(std::poisson_distribution<long>(truth(t))(rng));
  const DeathSeries s = DeathSeries::from_counts(y);
  ModelOptions o;
  o.k = 40;
  o.weekly = false;
  o.theta = 100.0;
  const DeathModel single(build_spec(ModelKind::basic, s, DurationDist::lognormal(3.0, 0.45), o), y);
  o.adaptive_components = 4;
  const DeathModel adaptive(build_spec(ModelKind::basic, s, DurationDist::lognormal(3.0, 0.45), o), y);
  CHECK(adaptive.n_lambda() == 4);
  const FitState a = fit_empirical_bayes(adaptive), b = fit_empirical_bayes(single);
  CHECK(a.deviance <= b.deviance * (1.0 + 1e-3));
}
