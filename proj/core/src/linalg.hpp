#pragma once

#include "backcalc/models.hpp"

#include <Eigen/Dense>

#include <span>

namespace backcalc::detail {

// log|A| for symmetric positive definite A; throws DomainError otherwise.
double logdet_spd(const Eigen::MatrixXd& a);

// Sum of the logs of the `rank` largest eigenvalues of symmetric s.
double penalty_log_pdet_unit(const Eigen::MatrixXd& s, int rank);

struct PenaltyGeometry {
  double log_pdet = 0.0;   // log|S_lambda|_+
  Eigen::MatrixXd pinv;    // S_lambda^- (block-wise, known rank)
  int null_dim = 0;        // total unpenalized dimension
};

PenaltyGeometry penalty_geometry(const DeathModel& model, std::span<const double> lambda);

}  // namespace backcalc::detail
