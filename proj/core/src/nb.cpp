#include "backcalc/errors.hpp"
#include "backcalc/models.hpp"

#include <cmath>

namespace backcalc {

NbDeviance nb_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double theta) {
  if (!(theta > 0.0)) throw DomainError("negative binomial theta must be > 0");
  const Eigen::Index n = y.size();
  NbDeviance out{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = mu(i);
    if (!(m > 0.0) || !std::isfinite(m)) {
      throw DomainError("negative binomial mean must be positive and finite");
    }
    const double yi = y(i);
    const double yt = yi + theta;
    const double mt = m + theta;
    out.d(i) = 2.0 * yi * std::log(std::max(1.0, yi) / m) - 2.0 * yt * std::log(yt / mt);
    out.d1(i) = 2.0 * (yt / mt - yi / m);
    out.d2(i) = 2.0 * (yi / (m * m) - yt / (mt * mt));
  }
  return out;
}

double nb_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double theta) {
  if (!(theta > 0.0)) throw DomainError("negative binomial theta must be > 0");
  double ll = 0.0;
  const double lg_theta = std::lgamma(theta);
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double m = mu(i);
    if (!(m > 0.0) || !std::isfinite(m)) {
      throw DomainError("negative binomial mean must be positive and finite");
    }
    const double yi = y(i);
    ll += std::lgamma(yi + theta) - lg_theta - std::lgamma(yi + 1.0) +
          theta * std::log(theta / (theta + m));
    if (yi > 0.0) ll += yi * std::log(m / (theta + m));
  }
  return ll;
}

}  // namespace backcalc
