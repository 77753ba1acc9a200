#pragma once

#include "backcalc/inference.hpp"
#include "backcalc/rng.hpp"
#include "backcalc/splines.hpp"

#include <Eigen/Dense>

namespace backcalc {

// Randomized PCR surveillance: daily binomial counts of N tests with
// positivity probability alpha * P(t), P' = f(t) - clearance * P.
struct PcrModel {
  double clearance = 0.1;    // 1 / mean duration of positivity
  double sensitivity = 1.0;  // alpha
  int tests_per_day = 400;
  int k = 15;                // basis dimension for log f
  double step = 0.25;        // RK4 step (days)
};

void validate(const PcrModel& model);

// Prevalence at the end of each day for daily left-constant incidence f.
Eigen::VectorXd pcr_prevalence(const Eigen::VectorXd& f, const PcrModel& model);

struct PcrData {
  Eigen::VectorXd truth;       // incidence proportion per day
  Eigen::VectorXd prevalence;  // P at the end of each day
  Eigen::VectorXd counts;      // positives per day
};

PcrData simulate_pcr(const Eigen::VectorXd& f, const PcrModel& model, Rng& rng);

// Reference truth: a rise to about 1.3 new infections per 1000 per day, a
// decline, and a late resurgence.
Eigen::VectorXd pcr_reference_incidence(int horizon = 100);

struct PcrLikelihood {
  double loglik = 0.0;
  Eigen::VectorXd gradient;    // via the sensitivity equations
  Eigen::VectorXd prevalence;
};

// Binomial log likelihood of log f = X beta, with gradient from the joint
// state + sensitivity RK4 integration.
PcrLikelihood pcr_loglik(const Eigen::VectorXd& counts, const SmoothTerm& basis,
                         const Eigen::VectorXd& beta, const PcrModel& model);

struct PcrFit {
  Eigen::VectorXd beta;
  double lambda = 0.0;
  Eigen::MatrixXd hessian;  // finite-differenced negative log likelihood Hessian
  Eigen::VectorXd f;        // fitted incidence
  Eigen::VectorXd lower, upper;  // exp(log f -/+ 2 se)
  double lml = 0.0;
  bool boundary_warning = false;  // all-zero counts
};

PcrFit fit_pcr_incidence(const Eigen::VectorXd& counts, const PcrModel& model);

}  // namespace backcalc
