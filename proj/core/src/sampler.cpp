#include "backcalc/errors.hpp"
#include "backcalc/inference.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <vector>

namespace backcalc {

double effective_sample_size(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const auto n = x.size();
  if (n < 4) return static_cast<double>(n);
  const double mean = x.mean();
  // Autocovariance by zero-padded FFT.
  std::size_t m = 1;
  while (m < static_cast<std::size_t>(2 * n)) m <<= 1;
  std::vector<double> padded(m, 0.0);
  for (Eigen::Index i = 0; i < n; ++i) padded[static_cast<std::size_t>(i)] = x(i) - mean;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> freq;
  fft.fwd(freq, padded);
  for (auto& c : freq) c = std::complex<double>(std::norm(c), 0.0);
  std::vector<double> acov;
  fft.inv(acov, freq);
  const double g0 = acov[0] / static_cast<double>(n);
  if (!(g0 > 0.0)) return static_cast<double>(n);

  auto gamma = [&](Eigen::Index k) { return acov[static_cast<std::size_t>(k)] / static_cast<double>(n); };
  double tau = -g0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k + 1 < n; k += 2) {
    double pair = gamma(k) + gamma(k + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);  // monotone
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  tau = std::max(tau, 1e-12 * g0);
  return static_cast<double>(n) * g0 / tau;
}

Eigen::VectorXd effective_sample_sizes(const Eigen::MatrixXd& chain) {
  Eigen::VectorXd out(chain.cols());
  for (Eigen::Index j = 0; j < chain.cols(); ++j) out(j) = effective_sample_size(chain.col(j));
  return out;
}

MhResult mh_sample(const std::function<double(const Eigen::VectorXd&)>& log_target,
                   const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance,
                   const MhOptions& opt, Rng& rng) {
  const auto p = mean.size();
  if (covariance.rows() != p || covariance.cols() != p) throw DimensionError("covariance does not match mean");
  const Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) throw DomainError("proposal covariance is not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();

  std::normal_distribution<double> nz;
  std::uniform_real_distribution<double> unif;
  Eigen::VectorXd z(p);
  auto draw_z = [&] {
    for (Eigen::Index j = 0; j < p; ++j) z(j) = nz(rng);
  };
  auto log_q = [&](const Eigen::VectorXd& x) {
    return -0.5 * llt.matrixL().solve(x - mean).squaredNorm();
  };

  Eigen::VectorXd x = mean;
  double lp = log_target(x);
  if (!std::isfinite(lp)) throw DomainError("target density is not finite at the proposal mean");
  double lq = log_q(x);
  double log_s = std::log(opt.shrink);

  long ind_tries = 0, ind_acc = 0, rw_tries = 0, rw_acc = 0;
  auto step = [&](long t, bool adapting) {
    if (t % 2 == 0) {
      draw_z();
      const Eigen::VectorXd y = mean + l * z;
      const double lpy = log_target(y);
      const double lqy = -0.5 * z.squaredNorm();
      ++ind_tries;
      if (std::isfinite(lpy) && std::log(unif(rng)) < (lpy - lp) + (lq - lqy)) {
        x = y;
        lp = lpy;
        lq = lqy;
        ++ind_acc;
      }
    } else {
      draw_z();
      const Eigen::VectorXd y = x + std::exp(log_s) * (l * z);
      const double lpy = log_target(y);
      ++rw_tries;
      double accept = 0.0;
      if (std::isfinite(lpy)) accept = std::min(1.0, std::exp(lpy - lp));
      if (unif(rng) < accept) {
        x = y;
        lp = lpy;
        lq = log_q(y);
        ++rw_acc;
      }
      if (adapting) {
        log_s += (accept - opt.target_accept) / std::pow(static_cast<double>(rw_tries) + 1.0, 0.6);
        log_s = std::clamp(log_s, std::log(1e-4), std::log(10.0));
      }
    }
  };

  long t = 0;
  for (; t < opt.burn_in; ++t) step(t, opt.adapt);
  ind_tries = ind_acc = rw_tries = rw_acc = 0;

  MhResult out;
  std::vector<Eigen::VectorXd> kept;
  const int fixed = opt.n_samples;
  int target_len = fixed > 0 ? fixed : std::min(opt.batch, opt.max_samples);
  while (true) {
    while (static_cast<int>(kept.size()) < target_len) {
      step(t++, false);
      kept.push_back(x);
    }
    out.chain.resize(static_cast<Eigen::Index>(kept.size()), p);
    for (std::size_t i = 0; i < kept.size(); ++i) out.chain.row(static_cast<Eigen::Index>(i)) = kept[i].transpose();
    out.ess = effective_sample_sizes(out.chain);
    out.min_ess = out.ess.minCoeff();
    if (fixed > 0) break;
    if (out.min_ess >= opt.target_ess) {
      out.reached_target = true;
      break;
    }
    if (target_len >= opt.max_samples) break;
    target_len = std::min(target_len + opt.batch, opt.max_samples);
  }
  if (fixed == 0 && !out.reached_target) {
    out.warning = "minimum ESS " + std::to_string(out.min_ess) + " below target " +
                  std::to_string(opt.target_ess);
  }
  out.accept_independence = ind_tries ? static_cast<double>(ind_acc) / ind_tries : 0.0;
  out.accept_random_walk = rw_tries ? static_cast<double>(rw_acc) / rw_tries : 0.0;
  out.shrink = std::exp(log_s);
  const double overall = static_cast<double>(ind_acc + rw_acc) / std::max(1L, ind_tries + rw_tries);
  if (overall < 0.01) {
    throw ConvergenceError("Metropolis-Hastings acceptance below 1% after adaptation; try a smaller shrink factor");
  }
  return out;
}

MhResult mh_sample(const DeathModel& model, const FitState& fit, const MhOptions& options, Rng& rng) {
  const auto post = posterior_gaussian(fit);
  const std::vector<double> lambda = fit.lambda;
  DeathModel m = model;
  m.set_theta(fit.theta);
  auto target = [&](const Eigen::VectorXd& b) { return penalized_objective(m, b, lambda, 0).value; };
  return mh_sample(target, fit.beta, post.covariance(), options, rng);
}

}  // namespace backcalc
