#pragma once

#include "backcalc/models.hpp"
#include "backcalc/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace backcalc {

struct FitOptions {
  int max_newton = 200;
  int max_outer = 200;
  double grad_tol = 1e-6;        // relative to 1 + |objective|
  double log_lambda_tol = 1e-4;
  std::vector<double> initial_lambda;  // empty: scaled from the data
  std::optional<Eigen::VectorXd> start;
  std::optional<int> start_anchor;     // renewal initializer
  // Keep lambda at initial_lambda (no Fellner-Schall updates).
  bool fixed_lambda = false;
  // Basic model: choose theta by maximizing the Laplace criterion.
  bool estimate_theta = false;
  double theta_min = 0.05;
  double theta_max = 1e5;
};

struct FitState {
  Eigen::VectorXd beta;
  Eigen::MatrixXd hessian;  // H: negative Hessian of the log likelihood at beta
  Eigen::MatrixXd penalty;  // S_lambda
  std::vector<double> lambda;
  double theta = 0.0;
  double lml = 0.0;        // Laplace approximate log marginal likelihood
  double loglik = 0.0;
  double deviance = 0.0;
  int outer_iterations = 0;
  bool damping_clamped = false;
  std::vector<double> lml_trace;  // value after every accepted smoothing update

  Eigen::MatrixXd precision() const { return hessian + penalty; }
};

// Penalized Newton for beta at fixed lambda; step halving on the objective.
FitState fit_fixed_lambda(const DeathModel& model, const std::vector<double>& lambda,
                          const FitOptions& options = {});

// Alternating Newton / generalized Fellner-Schall updates. With
// estimate_theta (basic model), theta is chosen by Brent search over log theta
// on the Laplace criterion, refitting lambda at every trial theta.
FitState fit_empirical_bayes(const DeathModel& model, const FitOptions& options = {});

// l(beta) - beta'S beta/2 + log|S|_+/2 - log|H + S|/2 + M_p log(2 pi)/2.
double laplace_marginal(const DeathModel& model, const FitState& fit);

// Draws from N(beta_hat, (H + S)^-1).
class GaussianPosterior {
 public:
  GaussianPosterior(Eigen::VectorXd mean, const Eigen::MatrixXd& precision);

  const Eigen::VectorXd& mean() const { return mean_; }
  Eigen::MatrixXd covariance() const;
  // One draw per row.
  Eigen::MatrixXd sample(int n, Rng& rng) const;
  // log density up to a constant.
  double log_density(const Eigen::VectorXd& x) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

GaussianPosterior posterior_gaussian(const FitState& fit);

// ---------------------------------------------------------------------------
// Metropolis-Hastings with strictly alternating independence proposals from
// the Gaussian approximation and random-walk steps with covariance s^2 V.

struct MhOptions {
  int burn_in = 2000;
  double shrink = 0.4;
  double target_accept = 0.23;
  bool adapt = true;
  // Fixed chain length if > 0; otherwise extend in batches until the minimum
  // per-coefficient ESS reaches target_ess or max_samples is hit.
  int n_samples = 0;
  int target_ess = 5000;
  int batch = 10000;
  int max_samples = 400000;
};

struct MhResult {
  Eigen::MatrixXd chain;  // one sample per row
  Eigen::VectorXd ess;
  double min_ess = 0.0;
  double accept_independence = 0.0;
  double accept_random_walk = 0.0;
  double shrink = 0.0;
  bool reached_target = false;
  std::string warning;
};

MhResult mh_sample(const std::function<double(const Eigen::VectorXd&)>& log_target,
                   const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance,
                   const MhOptions& options, Rng& rng);

// Exact penalized posterior of `model` at the fit's lambda and theta.
MhResult mh_sample(const DeathModel& model, const FitState& fit, const MhOptions& options,
                   Rng& rng);

// Initial monotone sequence estimator; per column for a chain matrix.
double effective_sample_size(const Eigen::Ref<const Eigen::VectorXd>& x);
Eigen::VectorXd effective_sample_sizes(const Eigen::MatrixXd& chain);

// ---------------------------------------------------------------------------

enum class SamplerKind { gaussian, mh };

struct PoolOptions {
  int samples_per_draw = 1000;
  SamplerKind sampler = SamplerKind::gaussian;
  MhOptions mh;
  FitOptions fit;
  unsigned threads = 0;  // 0: hardware concurrency
  std::uint64_t seed = 1;
};

struct PosteriorEnsemble {
  Eigen::MatrixXd draws;         // coefficient samples, one per row
  std::vector<int> tags;         // duration draw of each row
  Eigen::VectorXd ess;           // summed over duration draws
  Eigen::MatrixXd incidence;     // f_c per sample (incidence grid)
  Eigen::MatrixXd reproduction;  // renewal R_t per sample, else empty
  std::vector<FitState> fits;    // per duration draw (failed draws omitted)
  std::vector<int> fitted_draws;
  std::vector<std::string> warnings;
};

// Fit and sample once per duration draw, then pool equal-size samples.
PosteriorEnsemble pool_over_durations(const DeathModel& model_template,
                                      const DurationEnsemble& ensemble,
                                      const PoolOptions& options);

struct Bands {
  Eigen::VectorXd q025, q16, median, q84, q975;
};

// Pointwise quantiles over rows; NaN entries are ignored.
Bands pointwise_bands(const Eigen::MatrixXd& paths);

// Frequency of each column being the row argmax (ties: earliest column),
// searching columns 0..last (all columns when last < 0).
std::vector<double> peak_day_distribution(const Eigen::MatrixXd& paths, Eigen::Index last = -1);
int distribution_mode(const std::vector<double>& probabilities);

}  // namespace backcalc
