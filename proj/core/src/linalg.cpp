#include "linalg.hpp"

#include "backcalc/errors.hpp"

#include <cmath>

namespace backcalc::detail {

double logdet_spd(const Eigen::MatrixXd& a) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw DomainError("matrix is not positive definite");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double penalty_log_pdet_unit(const Eigen::MatrixXd& s, int rank) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  double out = 0.0;
  for (auto i = ev.size() - rank; i < ev.size(); ++i) out += std::log(std::max(ev(i), 1e-300));
  return out;
}

PenaltyGeometry penalty_geometry(const DeathModel& model, std::span<const double> lambda) {
  const int p = model.n_coef();
  PenaltyGeometry g;
  g.pinv = Eigen::MatrixXd::Zero(p, p);
  int penalized = 0;
  const auto& blocks = model.penalty_blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(blk.size, blk.size);
    for (std::size_t m = 0; m < model.penalties().size(); ++m) {
      const auto& pen = model.penalties()[m];
      if (pen.block == static_cast<int>(b)) s += lambda[m] * pen.matrix;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
    const Eigen::VectorXd& ev = eig.eigenvalues();
    const Eigen::MatrixXd& u = eig.eigenvectors();
    Eigen::MatrixXd pinv = Eigen::MatrixXd::Zero(blk.size, blk.size);
    for (int i = blk.size - blk.rank; i < blk.size; ++i) {
      const double e = std::max(ev(i), 1e-300);
      g.log_pdet += std::log(e);
      pinv += (u.col(i) / e) * u.col(i).transpose();
    }
    g.pinv.block(blk.offset, blk.offset, blk.size, blk.size) = pinv;
    penalized += blk.rank;
  }
  g.null_dim = p - penalized;
  return g;
}

}  // namespace backcalc::detail
