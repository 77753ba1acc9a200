#include "../common.hpp"

#include "backcalc/models.hpp"

#include <doctest.h>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/negative_binomial.hpp>

#include <cmath>

using namespace backcalc;
using backcalc::testing::fd_gradient;
using backcalc::testing::fd_jacobian;
using backcalc::testing::rel_error;

namespace {

DeathSeries wave_series(int n, std::uint64_t seed) {
  return backcalc::testing::nb_series(backcalc::testing::smooth_wave(n, 25.0, 300.0),
                                      DurationDist::lognormal(3.0, 0.45), 20.0, seed);
}

}  // namespace

TEST_CASE("NB log likelihood matches the Boost negative binomial") {
  Eigen::VectorXd y(5), mu(5);
  y << 0, 3, 17, 250, 1;
  mu << 0.7, 4.2, 11.0, 300.0, 2.5;
  for (double theta : {0.5, 3.0, 40.0}) {
    double oracle = 0.0;
    for (int i = 0; i < 5; ++i) {
      const boost::math::negative_binomial_distribution<double> nb(theta, theta / (theta + mu(i)));
      oracle += std::log(boost::math::pdf(nb, y(i)));
    }
    CHECK(nb_loglik(y, mu, theta) == doctest::Approx(oracle).epsilon(1e-10));
  }
}

TEST_CASE("NB deviance is zero at the data and its derivatives match differences") {
  Eigen::VectorXd y(4);
  y << 0, 2, 40, 7;
  const double theta = 6.0;
  const Eigen::VectorXd at_y = y.cwiseMax(1e-300);
  const NbDeviance zero = nb_deviance(y, y.array().max(1e-12).matrix(), theta);
  for (int i = 1; i < 4; ++i) CHECK(std::abs(zero.d(i)) < 1e-9);

  Eigen::VectorXd mu(4);
  mu << 0.8, 3.1, 33.0, 9.0;
  const NbDeviance dev = nb_deviance(y, mu, theta);
  for (int i = 0; i < 4; ++i) {
    const double h = 1e-5 * mu(i);
    Eigen::VectorXd up = mu, dn = mu;
    up(i) += h;
    dn(i) -= h;
    const NbDeviance a = nb_deviance(y, up, theta), b = nb_deviance(y, dn, theta);
    CHECK(dev.d1(i) == doctest::Approx((a.d(i) - b.d(i)) / (2 * h)).epsilon(1e-6));
    CHECK(dev.d2(i) == doctest::Approx((a.d1(i) - b.d1(i)) / (2 * h)).epsilon(1e-6));
  }
  // Deviance is -2 times the log likelihood up to terms free of mu.
  Eigen::VectorXd mu2 = mu * 1.3;
  const double ddev = nb_deviance(y, mu2, theta).d.sum() - dev.d.sum();
  const double dll = nb_loglik(y, mu2, theta) - nb_loglik(y, mu, theta);
  CHECK(ddev == doctest::Approx(-2.0 * dll).epsilon(1e-10));
}

TEST_CASE("generation interval discretizes the gamma law") {
  const Eigen::VectorXd g = generation_interval(60);
  const boost::math::gamma_distribution<double> law(6.5 * 0.62 * 0.62, 1.0 / (0.62 * 0.62));
  CHECK(g(0) == doctest::Approx(boost::math::cdf(law, 1.5)).epsilon(1e-12));
  CHECK(g(4) == doctest::Approx(boost::math::cdf(law, 5.5) - boost::math::cdf(law, 4.5)).epsilon(1e-12));
  CHECK(g.sum() == doctest::Approx(boost::math::cdf(law, 60.5)).epsilon(1e-12));
  CHECK(boost::math::mean(law) == doctest::Approx(6.5));
}

TEST_CASE("incidence dates sit one day before the death day, shifted by the lead") {
  const DeathSeries s = DeathSeries::from_counts(Eigen::VectorXd::Ones(10));
  CHECK(incidence_date(s, 3) == s.dates[3] - std::chrono::days{1});
  CHECK(incidence_index(s, s.dates[5] - std::chrono::days{1}) == 5);
  CHECK(incidence_index(s, s.dates[5] - std::chrono::days{1}, 4) == 9);
  CHECK(incidence_date(s, 9, 4) == s.dates[5] - std::chrono::days{1});
  CHECK(s.day_of_week()[0] == 1.0);
  CHECK(s.index_of(s.dates[7]) == 7);
}

TEST_CASE("model kinds parse and print") {
  for (auto k : {ModelKind::basic, ModelKind::incidence, ModelKind::renewal})
    CHECK(model_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(model_kind_from_string("seir"), InputError);
}

TEST_CASE("mu Jacobian and second derivatives match finite differences") {
  const DeathSeries s = wave_series(60, 11);
  ModelOptions mo;
  mo.k = 12;
  mo.theta = 20.0;
  for (ModelKind kind : {ModelKind::basic, ModelKind::incidence, ModelKind::renewal}) {
    CAPTURE(to_string(kind));
    const DeathModel m(build_spec(kind, s, DurationDist::lognormal(3.0, 0.45), mo), s.deaths);
    Rng rng = stream_rng(3, 0);
    std::normal_distribution<double> z(0.0, 0.02);
    Eigen::VectorXd beta = m.initial_beta(kind == ModelKind::renewal ? std::optional<int>(30) : std::nullopt);
    for (auto& b : beta) b += z(rng);
    const LinkState st = m.predict(beta, 2);
    const auto mu = [&](const Eigen::VectorXd& b) { return m.predict(b).mu; };
    CHECK(rel_error(st.jacobian, fd_jacobian(mu, beta, 1e-6)) < 1e-5);

    Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(m.n_obs(), 0.5, 1.5);
    const Eigen::MatrixXd h = m.weighted_mu_hessian(st, w);
    const auto wj = [&](const Eigen::VectorXd& b) -> Eigen::VectorXd {
      return m.predict(b, 1).jacobian.transpose() * w;
    };
    CHECK(rel_error(h, fd_jacobian(wj, beta, 1e-6)) < 1e-5);
    CHECK(rel_error(h, h.transpose()) < 1e-12);
  }
}

TEST_CASE("incidence model reproduces the delay convolution") {
  const DeathSeries s = wave_series(40, 12);
  ModelOptions mo;
  mo.k = 10;
  mo.weekly = false;
  const auto dist = DurationDist::lognormal(3.0, 0.45);
  const DeathModel m(build_spec(ModelKind::incidence, s, dist, mo), s.deaths);
  const Eigen::VectorXd beta = m.initial_beta();
  const LinkState st = m.predict(beta);
  CHECK(rel_error(st.mu, delay_matrix(dist, 40) * st.fc) < 1e-12);
  CHECK(rel_error(st.fc, m.smooth_path(beta)) < 1e-12);
}

TEST_CASE("renewal recursion follows c_t = R_t S_t/N sum g_j c_{t-j}") {
  const DeathSeries s = wave_series(50, 13);
  ModelOptions mo;
  mo.k = 10;
  mo.weekly = false;
  mo.population = 1e5;
  const DeathModel m(build_spec(ModelKind::renewal, s, DurationDist::lognormal(3.0, 0.45), mo), s.deaths);
  const Eigen::VectorXd beta = m.initial_beta(25);
  const auto path = m.renewal(beta, 0);
  const Eigen::VectorXd r = m.reproduction_path(beta);
  const Eigen::VectorXd g = generation_interval(m.spec().generation_horizon);
  const int t = 45;
  double conv = 0.0, cum = 0.0;
  for (int j = 1; j <= std::min<int>(t, static_cast<int>(g.size())); ++j) conv += g(j - 1) * path.c(t - j);
  for (int u = 0; u < t; ++u) cum += path.c(u);
  const double expect = r(t) * std::max(0.0, 1.0 - cum / mo.population) * conv;
  CHECK(path.c(t) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(rel_error(m.smooth_path(beta), (mo.ifr * path.c).cwiseMax(0.0)) < 1e-12);
}

TEST_CASE("model construction validates its inputs") {
  const DeathSeries s = wave_series(30, 14);
  ModelOptions mo;
  mo.k = 40;
  CHECK_THROWS(build_spec(ModelKind::incidence, s, DurationDist::lognormal(3.0, 0.45), mo));
  mo.k = 8;
  mo.theta = -1.0;
  CHECK_THROWS(DeathModel(build_spec(ModelKind::incidence, s, DurationDist::lognormal(3.0, 0.45), mo), s.deaths));
}

TEST_CASE("NB deviance hand values") {
  Eigen::VectorXd y(1), mu(1);
  y << 0;
  mu << 1;
  CHECK(nb_deviance(y, mu, 2.0).d(0) == doctest::Approx(2.0 * (0.0 - 2.0 * std::log(2.0 / 3.0))).epsilon(1e-14));
  y << 7;
  mu << 7;
  CHECK(std::abs(nb_deviance(y, mu, 0.7).d1(0)) < 1e-14);
  mu << 4.2;
  const double h = 1e-6;
  Eigen::VectorXd up = mu, dn = mu;
  up(0) += h;
  dn(0) -= h;
  const double fd = (nb_deviance(y, up, 3.1).d(0) - nb_deviance(y, dn, 3.1).d(0)) / (2 * h);
  CHECK(nb_deviance(y, mu, 3.1).d1(0) == doctest::Approx(fd).epsilon(1e-7));
}

TEST_CASE("basic model at zero coefficients predicts one death a day") {
  const DeathSeries s = wave_series(40, 15);
  ModelOptions mo;
  mo.k = 8;
  const DeathModel m(build_spec(ModelKind::basic, s, DurationDist::lognormal(3.0, 0.45), mo), s.deaths);
  const LinkState st = m.predict(Eigen::VectorXd::Zero(m.n_coef()));
  CHECK((st.mu.array() - 1.0).abs().maxCoeff() < 1e-14);
}

TEST_CASE("weekly term vanishes on data without a weekly cycle") {
  const DeathSeries s = backcalc::testing::nb_series(backcalc::testing::smooth_wave(120, 40.0, 400.0),
                                                     DurationDist::lognormal(3.1, 0.45), 20.0, 5);
  ModelOptions mo;
  mo.theta = 20.0;
  const DeathModel m(build_spec(ModelKind::basic, s, DurationDist::lognormal(3.1, 0.45), mo), s.deaths);
  const FitState fit = fit_empirical_bayes(m);
  CHECK(m.predict(fit.beta).fw.cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("identity delay turns the incidence model into a GAM on incidence") {
  const DeathSeries s = wave_series(40, 16);
  ModelOptions mo;
  mo.k = 10;
  mo.weekly = false;
  const DeathModel m(build_spec(ModelKind::incidence, s, DurationDist::point_mass(1.0), mo), s.deaths);
  CHECK(m.delay().isIdentity(0.0));
  Eigen::VectorXd beta = m.initial_beta();
  const LinkState st = m.predict(beta);
  CHECK(rel_error(st.mu, st.fc) < 1e-14);
}

TEST_CASE("constant incidence gives constant expected deaths after burn-in") {
  const DeathSeries s = DeathSeries::from_counts(Eigen::VectorXd::Constant(200, 10.0));
  ModelOptions mo;
  mo.k = 10;
  mo.weekly = false;
  const auto dist = DurationDist::lognormal(3.19, 0.44);
  const DeathModel m(build_spec(ModelKind::incidence, s, dist, mo), s.deaths);
  // Coefficients of log f_c = log 50 (constants lie in the basis span).
  const Eigen::VectorXd beta = Eigen::VectorXd::Constant(m.n_coef(), std::log(50.0));
  const LinkState st = m.predict(beta);
  CHECK((st.fc.array() - 50.0).abs().maxCoeff() < 1e-9);
  for (int i = 120; i < 200; ++i) CHECK(st.mu(i) == doctest::Approx(st.mu(199)).epsilon(0.01));
  CHECK(st.mu(199) == doctest::Approx(50.0).epsilon(0.01));
}

TEST_CASE("renewal with R = 1 and a huge population settles") {
  const DeathSeries s = DeathSeries::from_counts(Eigen::VectorXd::Constant(120, 10.0));
  ModelOptions mo;
  mo.k = 10;
  mo.weekly = false;
  mo.population = 1e15;
  const DeathModel m(build_spec(ModelKind::renewal, s, DurationDist::lognormal(3.0, 0.45), mo), s.deaths);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(m.n_coef());
  beta(0) = std::log(100.0);
  CHECK((m.reproduction_path(beta).array() - 1.0).abs().maxCoeff() < 1e-14);
  const auto p = m.renewal(beta, 0);
  for (int t = 60; t < m.n_incidence(); ++t) CHECK(p.c(t) == doctest::Approx(p.c(m.n_incidence() - 1)).epsilon(0.01));
}

TEST_CASE("generation interval weights over 60 days sum to one") {
  CHECK(generation_interval(60).sum() == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("renewal sensitivities of c_T match differences") {
  const DeathSeries s = wave_series(50, 17);
  ModelOptions mo;
  mo.k = 10;
  mo.weekly = false;
  const DeathModel m(build_spec(ModelKind::renewal, s, DurationDist::lognormal(3.0, 0.45), mo), s.deaths);
  Eigen::VectorXd beta = m.initial_beta(25);
  Rng rng = stream_rng(18, 0);
  std::normal_distribution<double> z(0.0, 0.05);
  for (auto& b : beta) b += z(rng);
  const auto p = m.renewal(beta, 1);
  const int last = m.n_incidence() - 1;
  const auto ct = [&](const Eigen::VectorXd& b) { return m.renewal(b, 0).c(last); };
  const Eigen::VectorXd fd = backcalc::testing::fd_gradient(ct, beta, 1e-6);
  CHECK(rel_error(p.dc.row(last).transpose().head(fd.size()), fd) < 1e-5);
}
