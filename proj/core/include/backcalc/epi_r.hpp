#pragma once

#include "backcalc/inference.hpp"

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace backcalc {

// gamma = 1 / mean days to infectivity, delta = 1 / mean infectious days.
struct SeirParams {
  double gamma = 1.0 / 3.0;
  double delta = 1.0 / 5.0;

  static SeirParams from_days(double days_to_infectivity, double days_infectious);
};

struct SeirOptions {
  double step = 0.05;
  double mask_threshold = 1e-8;  // relative to max I
};

struct SeirPath {
  Eigen::VectorXd exposed;     // E at integer days
  Eigen::VectorXd infectious;  // I at integer days
};

// RK4 for E' = f(t) - gamma E, I' = gamma E - delta I from E(0) = I(0) = 0.
SeirPath solve_seir(const std::function<double(double)>& forcing, const SeirParams& params,
                    int n_days, double step = 0.05);

// R(t) = f_c(t) / (delta I(t)), f_c interpolated log-linearly between positive days.
// Days where I is below the mask threshold are NaN.
Eigen::VectorXd r_from_incidence(const Eigen::VectorXd& fc, const SeirParams& params,
                                 const SeirOptions& options = {});

struct RSensitivity {
  Eigen::VectorXd central;  // at the supplied central parameters
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::vector<SeirParams> grid;
};

// Envelope over a grid of days-to-infectivity in [gamma_lo, gamma_hi] and
// infectious days in [delta_lo, delta_hi], `points` values per axis
// (inclusive ends). The central path is included in the envelope.
RSensitivity r_sensitivity(const Eigen::VectorXd& fc, double gamma_days_lo = 1.0,
                           double gamma_days_hi = 5.0, double delta_days_lo = 2.0,
                           double delta_days_hi = 10.0, int points = 5,
                           const SeirParams& central = {}, const SeirOptions& options = {});

// R path per row of `incidence` (one posterior draw per row).
Eigen::MatrixXd r_paths(const Eigen::MatrixXd& incidence, const SeirParams& params,
                        const SeirOptions& options = {});

Bands r_posterior(const PosteriorEnsemble& ensemble, const SeirParams& params,
                  const SeirOptions& options = {});

}  // namespace backcalc
