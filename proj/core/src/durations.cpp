#include "backcalc/durations.hpp"

#include "backcalc/errors.hpp"
#include "minimize.hpp"

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/lognormal.hpp>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace backcalc {

namespace detail {

namespace {
struct Callback {
  const std::function<double(const Eigen::VectorXd&)>* f;
};

double gsl_trampoline(const gsl_vector* v, void* params) {
  const auto* cb = static_cast<Callback*>(params);
  Eigen::VectorXd x(static_cast<Eigen::Index>(v->size));
  for (std::size_t i = 0; i < v->size; ++i) x(static_cast<Eigen::Index>(i)) = gsl_vector_get(v, i);
  const double value = (*cb->f)(x);
  return std::isfinite(value) ? value : std::numeric_limits<double>::max();
}
}  // namespace

SimplexResult simplex_minimize(const std::function<double(const Eigen::VectorXd&)>& objective,
                               const Eigen::VectorXd& start, double step,
                               int max_iter, double size_tol) {
  gsl_set_error_handler_off();
  const auto n = static_cast<std::size_t>(start.size());
  Callback cb{&objective};
  gsl_multimin_function fn{&gsl_trampoline, n, &cb};

  gsl_vector* x = gsl_vector_alloc(n);
  gsl_vector* steps = gsl_vector_alloc(n);
  for (std::size_t i = 0; i < n; ++i) {
    gsl_vector_set(x, i, start(static_cast<Eigen::Index>(i)));
    gsl_vector_set(steps, i, step);
  }
  gsl_multimin_fminimizer* s =
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
  gsl_multimin_fminimizer_set(s, &fn, x, steps);

  SimplexResult out;
  for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    const double size = gsl_multimin_fminimizer_size(s);
    if (gsl_multimin_test_size(size, size_tol) == GSL_SUCCESS) {
      out.converged = true;
      break;
    }
  }
  out.x.resize(start.size());
  for (std::size_t i = 0; i < n; ++i) out.x(static_cast<Eigen::Index>(i)) = gsl_vector_get(s->x, i);
  out.value = s->fval;

  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(steps);
  gsl_vector_free(x);
  return out;
}

}  // namespace detail

namespace {

constexpr double kOnsetToHospitalMean = 7.7;
constexpr double kOnsetToHospitalSd = 6.1;

double logit(double p) { return std::log(p / (1.0 - p)); }
double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

DurationDist DurationDist::lognormal(double mu, double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(mu)) {
    throw InputError("lognormal needs finite mu and sigma >= 0");
  }
  return {Family::lognormal, mu, sigma};
}

DurationDist DurationDist::gamma(double shape, double scale) {
  if (!(shape > 0.0 && scale > 0.0)) throw InputError("gamma shape and scale must be > 0");
  return {Family::gamma, shape, scale};
}

DurationDist DurationDist::point_mass(double location) {
  if (!(location >= 0.0)) throw InputError("point mass location must be >= 0");
  return {Family::point_mass, location, 0.0};
}

DurationDist DurationDist::lognormal_from_moments(double mean, double sd) {
  if (!(mean > 0.0 && sd > 0.0)) throw InputError("mean and sd must be > 0");
  const double s2 = std::log1p(sd * sd / (mean * mean));
  return lognormal(std::log(mean) - 0.5 * s2, std::sqrt(s2));
}

DurationDist DurationDist::gamma_from_moments(double mean, double sd) {
  if (!(mean > 0.0 && sd > 0.0)) throw InputError("mean and sd must be > 0");
  return gamma((mean / sd) * (mean / sd), sd * sd / mean);
}

bool DurationDist::degenerate() const {
  return family == Family::point_mass ||
         (family == Family::lognormal && param2 == 0.0);
}

double DurationDist::pdf(double x) const {
  if (x <= 0.0 || degenerate()) return 0.0;
  if (family == Family::lognormal) {
    return boost::math::pdf(boost::math::lognormal_distribution<>(param1, param2), x);
  }
  return boost::math::pdf(boost::math::gamma_distribution<>(param1, param2), x);
}

double DurationDist::cdf(double x) const {
  if (degenerate()) {
    const double at = family == Family::point_mass ? param1 : std::exp(param1);
    return x >= at ? 1.0 : 0.0;
  }
  if (x <= 0.0) return 0.0;
  if (family == Family::lognormal) {
    return boost::math::cdf(boost::math::lognormal_distribution<>(param1, param2), x);
  }
  return boost::math::cdf(boost::math::gamma_distribution<>(param1, param2), x);
}

double DurationDist::quantile(double p) const {
  if (degenerate()) return family == Family::point_mass ? param1 : std::exp(param1);
  if (family == Family::lognormal) {
    return boost::math::quantile(boost::math::lognormal_distribution<>(param1, param2), p);
  }
  return boost::math::quantile(boost::math::gamma_distribution<>(param1, param2), p);
}

double DurationDist::mean() const {
  switch (family) {
    case Family::lognormal:
      return std::exp(param1 + 0.5 * param2 * param2);
    case Family::gamma:
      return param1 * param2;
    case Family::point_mass:
      return param1;
  }
  return 0.0;
}

double DurationDist::sd() const {
  switch (family) {
    case Family::lognormal:
      return mean() * std::sqrt(std::expm1(param2 * param2));
    case Family::gamma:
      return std::sqrt(param1) * param2;
    case Family::point_mass:
      return 0.0;
  }
  return 0.0;
}

double DurationDist::median() const { return quantile(0.5); }

double DurationDist::sample(Rng& rng) const {
  switch (family) {
    case Family::lognormal: {
      if (param2 == 0.0) return std::exp(param1);
      std::lognormal_distribution<double> d(param1, param2);
      return d(rng);
    }
    case Family::gamma: {
      std::gamma_distribution<double> d(param1, param2);
      return d(rng);
    }
    case Family::point_mass:
      return param1;
  }
  return 0.0;
}

std::array<PublishedModel, 3> published_models() {
  return {{
      {"verity", DurationDist::gamma_from_moments(17.8, 8.44), 24},
      {"wu", DurationDist::gamma_from_moments(20.0, 10.0), 41},
      {"linton", DurationDist::lognormal_from_moments(20.2, 11.6), 34},
  }};
}

DurationDist incubation_model() { return DurationDist::lognormal(1.63, 0.50); }

DurationDist fit_lognormal_ml(std::span<const double> sample) {
  if (sample.size() < 2) throw InputError("lognormal fit needs >= 2 values");
  double sum = 0.0;
  for (double x : sample) {
    if (!(x > 0.0)) throw InputError("lognormal fit needs positive data");
    sum += std::log(x);
  }
  const double mu = sum / static_cast<double>(sample.size());
  double ss = 0.0;
  for (double x : sample) {
    const double d = std::log(x) - mu;
    ss += d * d;
  }
  return DurationDist::lognormal(mu, std::sqrt(ss / static_cast<double>(sample.size())));
}

namespace {

double positive_draw(const DurationDist& d, Rng& rng) {
  for (;;) {
    const double x = d.sample(rng);
    if (x > 0.0) return x;
  }
}

}  // namespace

DurationDist combine_onset_to_death(Rng& rng) {
  std::vector<double> pooled;
  pooled.reserve(99);
  for (const auto& m : published_models()) {
    for (int i = 0; i < m.sample_size; ++i) pooled.push_back(positive_draw(m.dist, rng));
  }
  return fit_lognormal_ml(pooled);
}

DurationDist convolve_to_infection(const DurationDist& onset2death,
                                   const DurationDist& incubation, Rng& rng,
                                   int n) {
  if (n < 2) throw InputError("Monte-Carlo sample size must be >= 2");
  std::vector<double> sum(static_cast<std::size_t>(n));
  for (auto& s : sum) s = onset2death.sample(rng) + incubation.sample(rng);
  return fit_lognormal_ml(sum);
}

DurationDist mean_infection_to_death(Rng& rng) {
  const auto models = published_models();
  int total = 0;
  for (const auto& m : models) total += m.sample_size;
  std::vector<double> pooled;
  pooled.reserve(kKlSampleSize);
  for (const auto& m : models) {
    const int count = kKlSampleSize * m.sample_size / total;
    for (int i = 0; i < count; ++i) pooled.push_back(positive_draw(m.dist, rng));
  }
  return convolve_to_infection(fit_lognormal_ml(pooled), incubation_model(), rng);
}

DurationEnsemble duration_ensemble(int replicates, std::uint64_t seed) {
  if (replicates < 1) throw InputError("ensemble needs at least one replicate");
  DurationEnsemble out;
  out.draws.reserve(static_cast<std::size_t>(replicates));
  for (int r = 0; r < replicates; ++r) {
    Rng rng = stream_rng(seed, static_cast<std::uint64_t>(r));
    out.draws.push_back(convolve_to_infection(combine_onset_to_death(rng),
                                              incubation_model(), rng));
  }
  Rng rng = stream_rng(seed, 0xffffffffULL);
  out.mean_dist = mean_infection_to_death(rng);
  return out;
}

Eigen::MatrixXd delay_matrix(const DurationDist& dist, int n_days) {
  return delay_matrix(dist, n_days, n_days);
}

Eigen::MatrixXd delay_matrix(const DurationDist& dist, int n_deaths,
                             int n_incidence) {
  if (n_deaths < 1) throw InputError("delay matrix needs n_days >= 1");
  if (n_incidence < n_deaths) throw DimensionError("incidence grid shorter than death grid");
  const int lead = n_incidence - n_deaths;
  Eigen::VectorXd lag(n_incidence);
  if (dist.degenerate()) {
    // All mass on one whole-day lag.
    lag.setZero();
    const long at = std::lround(dist.quantile(0.5)) - 1;
    if (at >= 0 && at < n_incidence) lag(at) = 1.0;
  } else {
    for (int d = 0; d < n_incidence; ++d) lag(d) = dist.pdf(d + 1.0);
  }
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n_deaths, n_incidence);
  for (int i = 0; i < n_deaths; ++i) {
    // Incidence days 0 .. i + lead feed death day i.
    for (int j = 0; j <= i + lead; ++j) b(i, j) = lag(i + lead - j);
  }
  return b;
}

double DayTable::total() const {
  return std::accumulate(value.begin(), value.end(), 0.0);
}

DayTable read_day_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  DayTable t;
  std::string line;
  bool header = true;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream ss(line);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b)) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected two columns");
    }
    try {
      t.day.push_back(std::stoi(a));
      t.value.push_back(std::stod(b));
    } catch (const std::exception&) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": not numeric");
    }
  }
  return t;
}

void write_day_table(const std::filesystem::path& path, const DayTable& table,
                     const std::string& value_name, const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  if (!comment.empty()) {
    std::istringstream ss(comment);
    std::string line;
    while (std::getline(ss, line)) out << "# " << line << '\n';
  }
  out << "day," << value_name << '\n';
  out.precision(12);
  for (std::size_t i = 0; i < table.day.size(); ++i) {
    out << table.day[i] << ',' << table.value[i] << '\n';
  }
}

double day_bin_probability(const DurationDist& dist, int day) {
  const double lo = std::max(0.0, day - 0.5);
  const double hi = day + 0.5;
  if (hi <= 0.0) return 0.0;
  return dist.cdf(hi) - dist.cdf(lo);
}

namespace {

// Mixture parameters: [logit p_gamma, log shape, log scale, mu, log sigma].
struct MixtureParams {
  double p;
  DurationDist g;
  DurationDist l;
};

MixtureParams unpack(const Eigen::VectorXd& x) {
  return {expit(x(0)), DurationDist::gamma(std::exp(x(1)), std::exp(x(2))),
          DurationDist::lognormal(x(3), std::exp(x(4)))};
}

double mixture_loglik(const DayTable& h, const MixtureParams& m) {
  if (!(m.l.mean() > m.g.mean())) return -std::numeric_limits<double>::infinity();
  double ll = 0.0;
  for (std::size_t i = 0; i < h.day.size(); ++i) {
    if (h.value[i] <= 0.0) continue;
    const double q = m.p * day_bin_probability(m.g, h.day[i]) +
                     (1.0 - m.p) * day_bin_probability(m.l, h.day[i]);
    if (!(q > 0.0)) return -std::numeric_limits<double>::infinity();
    ll += h.value[i] * std::log(q);
  }
  return ll;
}

Eigen::VectorXd polish(const std::function<double(const Eigen::VectorXd&)>& f,
                       Eigen::VectorXd x, double* value) {
  // Restarted simplex: nmsimplex can stall on a degenerate simplex.
  double best = f(x);
  for (int restart = 0; restart < 6; ++restart) {
    auto r = detail::simplex_minimize(f, x, restart == 0 ? 0.3 : 0.05, 8000, 1e-9);
    const bool improved = r.value < best - 1e-10;
    if (r.value <= best) {
      best = r.value;
      x = r.x;
    }
    if (!improved && restart > 0) break;
  }
  if (value) *value = best;
  return x;
}

MixtureFit to_fit(const Eigen::VectorXd& x, double ll) {
  const auto m = unpack(x);
  return {m.g, m.l, m.p, ll};
}

}  // namespace

ChessMixtureResult fit_chess_mixture(const DayTable& histogram, double loglik_drop) {
  int distinct = 0;
  double n = 0.0;
  for (std::size_t i = 0; i < histogram.day.size(); ++i) {
    if (histogram.value[i] > 0.0) {
      ++distinct;
      n += histogram.value[i];
    }
    if (histogram.value[i] < 0.0 || histogram.day[i] < 0) {
      throw InputError("histogram needs non-negative days and counts");
    }
  }
  if (distinct < 2) throw InputError("histogram needs at least two distinct days");

  double mean = 0.0;
  for (std::size_t i = 0; i < histogram.day.size(); ++i) mean += histogram.day[i] * histogram.value[i];
  mean /= n;

  auto negll = [&](const Eigen::VectorXd& x) { return -mixture_loglik(histogram, unpack(x)); };

  // Multi-start over the gamma proportion and the short component's mean.
  Eigen::VectorXd best_x;
  double best = std::numeric_limits<double>::infinity();
  for (double p0 : {0.1, 0.3, 0.5}) {
    for (double gmean : {0.2 * mean, 0.4 * mean}) {
      const auto g = DurationDist::gamma_from_moments(std::max(gmean, 0.5), std::max(gmean, 0.5) * 0.7);
      const auto l = DurationDist::lognormal_from_moments(1.1 * mean, 0.6 * mean);
      Eigen::VectorXd x(5);
      x << logit(p0), std::log(g.param1), std::log(g.param2), l.param1, std::log(l.param2);
      double v = 0.0;
      x = polish(negll, x, &v);
      if (v < best) {
        best = v;
        best_x = x;
      }
    }
  }

  ChessMixtureResult out;
  out.loglik_drop = loglik_drop;
  out.mle = to_fit(best_x, -best);

  // Profile over logit(p) with the other four parameters re-maximized.
  Eigen::VectorXd warm = best_x.tail(4);
  auto profile = [&](double lp) {
    auto f = [&](const Eigen::VectorXd& rest) {
      Eigen::VectorXd x(5);
      x << lp, rest;
      return negll(x);
    };
    double v = 0.0;
    warm = polish(f, warm, &v);
    return -v;
  };
  const double target = out.mle.loglik - loglik_drop;
  const double lp_hat = best_x(0);
  double lo = lp_hat;
  double lo_ll = out.mle.loglik;
  double step = 0.25;
  double hi = lp_hat;
  double hi_ll = lo_ll;
  for (int i = 0; i < 60; ++i) {
    hi = lo;
    hi_ll = lo_ll;
    lo = hi - step;
    lo_ll = profile(lo);
    if (lo_ll < target) break;
    step *= 1.5;
  }
  if (lo_ll >= target) throw InputError("profile likelihood never dropped below target");
  // Bisection keeps the warm start moving monotonically.
  Eigen::VectorXd rest_at_root = warm;
  for (int i = 0; i < 40 && hi - lo > 1e-6; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double v = profile(mid);
    if (v < target) {
      lo = mid;
    } else {
      hi = mid;
      hi_ll = v;
      rest_at_root = warm;
    }
  }
  Eigen::VectorXd x(5);
  x << hi, rest_at_root;
  out.profiled = to_fit(x, hi_ll);
  return out;
}

DurationDist fit_lognormal_to_table(const DayTable& pf) {
  const double total = pf.total();
  if (std::abs(total - 1.0) > 0.02) {
    throw InputError("probability function sums to " + std::to_string(total) +
                     ", expected 1 +/- 0.02");
  }
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < pf.day.size(); ++i) {
    m1 += pf.day[i] * pf.value[i];
    m2 += double(pf.day[i]) * pf.day[i] * pf.value[i];
  }
  m1 /= total;
  m2 /= total;
  const auto start = DurationDist::lognormal_from_moments(m1, std::sqrt(std::max(m2 - m1 * m1, 1e-6)));
  auto neg = [&](const Eigen::VectorXd& x) {
    const auto d = DurationDist::lognormal(x(0), std::exp(x(1)));
    double v = 0.0;
    for (std::size_t i = 0; i < pf.day.size(); ++i) {
      if (pf.value[i] <= 0.0) continue;
      const double q = day_bin_probability(d, pf.day[i]);
      if (!(q > 0.0)) return std::numeric_limits<double>::infinity();
      v -= pf.value[i] * std::log(q);
    }
    return v;
  };
  Eigen::VectorXd x(2);
  x << start.param1, std::log(start.param2);
  x = polish(neg, x, nullptr);
  return DurationDist::lognormal(x(0), std::exp(x(1)));
}

IsaricResult isaric_infection_to_death(const DayTable& hosp2death_pf, Rng& rng) {
  IsaricResult out;
  out.hospital_to_death = fit_lognormal_to_table(hosp2death_pf);
  out.onset_to_hospital =
      DurationDist::lognormal_from_moments(kOnsetToHospitalMean, kOnsetToHospitalSd);
  out.onset_to_death_mean = out.hospital_to_death.mean() + out.onset_to_hospital.mean();
  out.onset_to_death_sd = std::hypot(out.hospital_to_death.sd(), out.onset_to_hospital.sd());

  const auto inc = incubation_model();
  std::vector<double> sum(kKlSampleSize);
  for (auto& s : sum) {
    s = out.hospital_to_death.sample(rng) + out.onset_to_hospital.sample(rng) + inc.sample(rng);
  }
  out.infection_to_death = fit_lognormal_ml(sum);
  return out;
}

std::filesystem::path data_dir() {
  if (const char* env = std::getenv("BACKCALC_DATA_DIR"); env && *env) return env;
  const std::filesystem::path source = BACKCALC_SOURCE_DATA_DIR;
  if (std::filesystem::exists(source / "sample_deaths.csv")) return source;
  return BACKCALC_INSTALL_DATA_DIR;
}

}  // namespace backcalc
