#include "backcalc/models.hpp"

#include "backcalc/errors.hpp"

#include <boost/math/distributions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace backcalc {

namespace {

constexpr double kIncidenceFloor = 1e-12;

Eigen::VectorXd penalized_ls(const Eigen::MatrixXd& x, const Eigen::VectorXd& target,
                             const Eigen::MatrixXd& penalty) {
  Eigen::MatrixXd a = x.transpose() * x + penalty;
  a.diagonal().array() += 1e-8 * (1.0 + a.diagonal().maxCoeff());
  return a.ldlt().solve(x.transpose() * target);
}

}  // namespace

std::vector<double> DeathSeries::day_of_week() const {
  std::vector<double> out(static_cast<std::size_t>(size()));
  for (int i = 0; i < size(); ++i) {
    out[static_cast<std::size_t>(i)] =
        dates.empty() ? double(i % 7 + 1) : double(iso_weekday(dates[static_cast<std::size_t>(i)]));
  }
  return out;
}

int DeathSeries::index_of(Date d) const {
  for (std::size_t i = 0; i < dates.size(); ++i) {
    if (dates[i] == d) return static_cast<int>(i);
  }
  return -1;
}

DeathSeries DeathSeries::from_counts(const Eigen::VectorXd& y) {
  DeathSeries s;
  s.deaths = y;
  // 2 March 2020 was a Monday.
  const Date start{std::chrono::year_month_day{std::chrono::year{2020}, std::chrono::March,
                                               std::chrono::day{2}}};
  s.dates.reserve(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) s.dates.push_back(start + std::chrono::days{i});
  return s;
}

int incidence_index(const DeathSeries& series, Date date, int lead_days) {
  if (series.dates.empty()) throw InputError("series has no dates");
  return static_cast<int>((date - series.dates.front()).count()) + 1 + lead_days;
}

Date incidence_date(const DeathSeries& series, int index, int lead_days) {
  if (series.dates.empty()) throw InputError("series has no dates");
  return series.dates.front() + std::chrono::days{index - 1 - lead_days};
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::basic:
      return "basic";
    case ModelKind::incidence:
      return "incidence";
    case ModelKind::renewal:
      return "renewal";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "basic") return ModelKind::basic;
  if (name == "incidence") return ModelKind::incidence;
  if (name == "renewal") return ModelKind::renewal;
  throw InputError("unknown model kind '" + name + "' (basic|incidence|renewal)");
}

Eigen::VectorXd generation_interval(int horizon) {
  if (horizon < 2) throw InputError("generation interval horizon must be >= 2");
  const boost::math::gamma_distribution<> gi(6.5 * 0.62 * 0.62, 1.0 / (0.62 * 0.62));
  Eigen::VectorXd g(horizon);
  g(0) = boost::math::cdf(gi, 1.5);
  for (int j = 2; j <= horizon; ++j) {
    g(j - 1) = boost::math::cdf(gi, j + 0.5) - boost::math::cdf(gi, j - 0.5);
  }
  return g;
}

ModelSpec build_spec(ModelKind kind, const DeathSeries& series, const DurationDist& dist,
                     const ModelOptions& o) {
  const int n = series.size();
  const int lead = kind == ModelKind::basic ? 0 : o.lead_days;
  if (lead < 0) throw InputError("lead days must be >= 0");
  const int n_inc = n + lead;

  std::vector<double> grid = day_grid(n_inc);
  if (o.dilation_anchor) grid = dilate_grid(grid, *o.dilation_anchor, o.dilation);

  ModelSpec spec;
  spec.kind = kind;
  spec.f_term = o.adaptive_components > 1 ? adaptive_penalty(grid, o.k, o.adaptive_components)
                                          : cubic_basis(grid, o.k);
  if (o.weekly) {
    const auto dow = series.day_of_week();
    spec.fw_term = cyclic_basis(dow, 7.0, o.k_weekly);
  }
  spec.dist = dist;
  spec.theta = o.theta;
  spec.population = o.population;
  spec.ifr = o.ifr;
  spec.lead_days = lead;
  if (o.step_anchor) {
    if (kind != ModelKind::renewal) throw InputError("step variant applies to the renewal model only");
    if (*o.step_anchor < 1 || *o.step_anchor >= n_inc) throw InputError("step anchor outside grid");
    spec.extra_columns = Eigen::MatrixXd::Zero(n_inc, 1);
    spec.extra_columns.col(0).tail(n_inc - *o.step_anchor).setOnes();
  }
  return spec;
}

DeathModel::DeathModel(ModelSpec spec, Eigen::VectorXd y) : spec_(std::move(spec)), y_(std::move(y)) {
  if (!(spec_.theta > 0.0)) throw InputError("theta must be > 0");
  if (spec_.kind == ModelKind::renewal) {
    if (!(spec_.population > 0.0)) throw InputError("population must be > 0");
    if (!(spec_.ifr > 0.0 && spec_.ifr < 1.0)) throw InputError("ifr must lie in (0, 1)");
  }
  for (Eigen::Index i = 0; i < y_.size(); ++i) {
    if (!(y_(i) >= 0.0)) throw InputError("death counts must be non-negative");
  }
  const int n = n_obs();
  if (spec_.kind == ModelKind::basic) spec_.lead_days = 0;
  n_inc_ = n + spec_.lead_days;
  if (spec_.f_term.design.rows() != n_inc_) {
    throw DimensionError("smooth design rows must match the incidence grid");
  }
  if (spec_.fw_term && spec_.fw_term->design.rows() != n) {
    throw DimensionError("weekly design rows must match the death series");
  }
  if (spec_.extra_columns.size() > 0 && spec_.kind != ModelKind::renewal) {
    throw DimensionError("extra columns apply to the renewal model only");
  }
  if (spec_.extra_columns.size() > 0 && spec_.extra_columns.rows() != n_inc_) {
    throw DimensionError("extra columns need one row per incidence day");
  }

  f_offset_ = spec_.kind == ModelKind::renewal ? 1 : 0;
  theta_size_ = f_offset_ + f_size() + extra_size();
  w_offset_ = theta_size_;
  n_coef_ = theta_size_ + w_size();

  if (spec_.kind != ModelKind::basic) delay_ = delay_matrix(spec_.dist, n, n_inc_);
  if (spec_.kind == ModelKind::renewal) {
    gen_ = generation_interval(spec_.generation_horizon);
    r_design_ = Eigen::MatrixXd::Zero(n_inc_, theta_size_);
    r_design_.middleCols(1, f_size()) = spec_.f_term.design;
    if (extra_size() > 0) r_design_.rightCols(extra_size()) = spec_.extra_columns;
  }

  const int fs = f_size();
  blocks_.push_back({f_offset_, fs, fs - spec_.f_term.null_space_dim});
  for (const auto& s : spec_.f_term.penalties) penalties_.push_back({f_offset_, s, 0});
  if (spec_.fw_term) {
    blocks_.push_back({w_offset_, w_size(), w_size() - spec_.fw_term->null_space_dim});
    for (const auto& s : spec_.fw_term->penalties) {
      penalties_.push_back({w_offset_, s, static_cast<int>(blocks_.size()) - 1});
    }
  }
}

void DeathModel::set_theta(double theta) {
  if (!(theta > 0.0)) throw InputError("theta must be > 0");
  spec_.theta = theta;
}

Eigen::MatrixXd DeathModel::total_penalty(std::span<const double> lambda) const {
  if (static_cast<int>(lambda.size()) != n_lambda()) {
    throw DimensionError("one smoothing parameter per penalty required");
  }
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n_coef_, n_coef_);
  for (std::size_t m = 0; m < penalties_.size(); ++m) {
    const auto& p = penalties_[m];
    const auto k = p.matrix.rows();
    s.block(p.offset, p.offset, k, k) += lambda[m] * p.matrix;
  }
  return s;
}

DeathModel DeathModel::with_distribution(const DurationDist& dist) const {
  DeathModel copy = *this;
  copy.spec_.dist = dist;
  if (copy.spec_.kind != ModelKind::basic) copy.delay_ = delay_matrix(dist, n_obs(), n_inc_);
  return copy;
}

Eigen::VectorXd DeathModel::theta_block(const Eigen::VectorXd& beta) const {
  return beta.head(theta_size_);
}

DeathModel::RenewalPath DeathModel::renewal(const Eigen::VectorXd& beta, int order) const {
  const int t_len = n_inc_;
  const int q = theta_size_;
  const int horizon = static_cast<int>(gen_.size());
  const double n_pop = spec_.population;
  const Eigen::VectorXd theta = theta_block(beta);
  const Eigen::VectorXd log_r = r_design_ * theta;

  RenewalPath p;
  p.c = Eigen::VectorXd::Zero(t_len);
  if (order >= 1) p.dc = Eigen::MatrixXd::Zero(t_len, q);
  if (order >= 2) p.d2c.assign(static_cast<std::size_t>(t_len), Eigen::MatrixXd::Zero(q, q));

  p.c(0) = std::exp(theta(0));
  if (order >= 1) p.dc(0, 0) = p.c(0);
  if (order >= 2) p.d2c[0](0, 0) = p.c(0);

  double cum = 0.0;
  Eigen::VectorXd dcum = Eigen::VectorXd::Zero(q);
  Eigen::MatrixXd d2cum = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd ds(q), da(q), dr(q);
  Eigen::MatrixXd d2s(q, q);

  for (int t = 1; t < t_len; ++t) {
    cum += p.c(t - 1);
    if (order >= 1) dcum += p.dc.row(t - 1).transpose();
    if (order >= 2) d2cum += p.d2c[static_cast<std::size_t>(t - 1)];

    double s = 0.0;
    if (order >= 1) ds.setZero();
    if (order >= 2) d2s.setZero();
    for (int j = 1; j <= std::min(t, horizon); ++j) {
      const double g = gen_(j - 1);
      s += g * p.c(t - j);
      if (order >= 1) ds += g * p.dc.row(t - j).transpose();
      if (order >= 2) d2s += g * p.d2c[static_cast<std::size_t>(t - j)];
    }

    double a = 1.0 - cum / n_pop;
    bool clamped = false;
    if (a < 0.0) {
      a = 0.0;
      clamped = true;
      p.clamped = true;
    }
    const double r = std::exp(log_r(t));
    p.c(t) = a * r * s;
    if (order == 0) continue;

    const Eigen::VectorXd xr = r_design_.row(t).transpose();
    if (clamped) {
      da.setZero();
    } else {
      da = -dcum / n_pop;
    }
    dr = r * xr;
    p.dc.row(t) = (da * r * s + a * dr * s + a * r * ds).transpose();
    if (order < 2) continue;

    Eigen::MatrixXd& h = p.d2c[static_cast<std::size_t>(t)];
    if (!clamped) h.noalias() += (-r * s / n_pop) * d2cum;
    h.noalias() += (a * s * r) * (xr * xr.transpose());
    h.noalias() += (a * r) * d2s;
    h.noalias() += s * (da * dr.transpose() + dr * da.transpose());
    h.noalias() += r * (da * ds.transpose() + ds * da.transpose());
    h.noalias() += a * (dr * ds.transpose() + ds * dr.transpose());
  }
  return p;
}

LinkState DeathModel::predict(const Eigen::VectorXd& beta, int order) const {
  if (beta.size() != n_coef_) throw DimensionError("coefficient vector has wrong length");
  LinkState st;
  st.beta = beta;
  st.order = order;
  const int n = n_obs();

  const bool weekly = spec_.fw_term.has_value();
  st.fw = weekly ? Eigen::VectorXd(spec_.fw_term->design * beta.segment(w_offset_, w_size()))
                 : Eigen::VectorXd::Zero(n);

  if (spec_.kind == ModelKind::basic) {
    const Eigen::VectorXd f = spec_.f_term.design * beta.head(f_size());
    st.mu = (f + st.fw).array().exp();
    st.delta = st.mu;
    st.fc = f.array().exp();
    if (!st.mu.allFinite()) throw DomainError("numerical overflow in mu");
    if (order >= 1) {
      st.jacobian.resize(n, n_coef_);
      st.jacobian.leftCols(f_size()) = st.mu.asDiagonal() * spec_.f_term.design;
      if (weekly) st.jacobian.rightCols(w_size()) = st.mu.asDiagonal() * spec_.fw_term->design;
    }
    return st;
  }

  const int q = theta_size_;
  if (spec_.kind == ModelKind::incidence) {
    const Eigen::VectorXd eta = spec_.f_term.design * beta.head(f_size());
    st.fc = eta.array().exp();
    if (order >= 1) st.dfc = st.fc.asDiagonal() * spec_.f_term.design;
  } else {
    RenewalPath path = renewal(beta, order);
    st.damping_clamped = path.clamped;
    st.fc = spec_.ifr * path.c;
    if (order >= 1) st.dfc = spec_.ifr * path.dc;
    if (order >= 2) {
      st.d2fc = std::move(path.d2c);
      for (auto& m : st.d2fc) m *= spec_.ifr;
    }
  }
  if (!st.fc.allFinite()) throw DomainError("numerical overflow in fatal incidence");
  for (Eigen::Index j = 0; j < st.fc.size(); ++j) {
    if (st.fc(j) < kIncidenceFloor) {
      st.fc(j) = kIncidenceFloor;
      if (order >= 1) st.dfc.row(j).setZero();
      if (order >= 2 && !st.d2fc.empty()) st.d2fc[static_cast<std::size_t>(j)].setZero();
    }
  }

  st.delta = delay_ * st.fc;
  if ((st.delta.array() <= 0.0).any()) throw DomainError("expected deaths underflowed to zero");
  st.mu = st.delta.array() * st.fw.array().exp();
  if (!st.mu.allFinite()) throw DomainError("numerical overflow in mu");

  if (order >= 1) {
    st.jacobian.resize(n, n_coef_);
    const Eigen::VectorXd ratio = st.mu.array() / st.delta.array();
    st.jacobian.leftCols(q) = ratio.asDiagonal() * (delay_ * st.dfc);
    if (weekly) st.jacobian.rightCols(w_size()) = st.mu.asDiagonal() * spec_.fw_term->design;
  }
  return st;
}

Eigen::MatrixXd DeathModel::weighted_mu_hessian(const LinkState& st, const Eigen::VectorXd& w) const {
  if (st.order < 2 && spec_.kind == ModelKind::renewal) {
    throw InputError("weighted Hessian needs a state predicted with order 2");
  }
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n_coef_, n_coef_);
  const Eigen::VectorXd wmu = w.cwiseProduct(st.mu);
  if (spec_.kind == ModelKind::basic) {
    const auto& xf = spec_.f_term.design;
    h.topLeftCorner(f_size(), f_size()) = xf.transpose() * wmu.asDiagonal() * xf;
    if (spec_.fw_term) {
      const auto& xw = spec_.fw_term->design;
      h.block(w_offset_, w_offset_, w_size(), w_size()) = xw.transpose() * wmu.asDiagonal() * xw;
      const Eigen::MatrixXd fw = xf.transpose() * wmu.asDiagonal() * xw;
      h.block(0, w_offset_, f_size(), w_size()) = fw;
      h.block(w_offset_, 0, w_size(), f_size()) = fw.transpose();
    }
    return h;
  }

  const int q = theta_size_;
  const Eigen::VectorXd u = delay_.transpose() * (wmu.array() / st.delta.array()).matrix();
  if (spec_.kind == ModelKind::incidence) {
    const auto& xf = spec_.f_term.design;
    Eigen::VectorXd uf = u.cwiseProduct(st.fc);
    for (Eigen::Index j = 0; j < uf.size(); ++j) {
      if (st.dfc.row(j).isZero(0.0)) uf(j) = 0.0;  // floored
    }
    h.topLeftCorner(q, q) = xf.transpose() * uf.asDiagonal() * xf;
  } else {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(q, q);
    for (int t = 0; t < n_inc_; ++t) acc += u(t) * st.d2fc[static_cast<std::size_t>(t)];
    h.topLeftCorner(q, q) = acc;
  }
  if (spec_.fw_term) {
    const auto& xw = spec_.fw_term->design;
    h.block(w_offset_, w_offset_, w_size(), w_size()) = xw.transpose() * wmu.asDiagonal() * xw;
    const Eigen::MatrixXd cross = st.jacobian.leftCols(q).transpose() * w.asDiagonal() * xw;
    h.block(0, w_offset_, q, w_size()) = cross;
    h.block(w_offset_, 0, w_size(), q) = cross.transpose();
  }
  return h;
}

Eigen::VectorXd DeathModel::smooth_path(const Eigen::VectorXd& beta) const {
  if (spec_.kind == ModelKind::basic) {
    return (spec_.f_term.design * beta.head(f_size())).array().exp();
  }
  if (spec_.kind == ModelKind::incidence) {
    return (spec_.f_term.design * beta.head(f_size())).array().exp().max(kIncidenceFloor);
  }
  return (spec_.ifr * renewal(beta, 0).c).array().max(kIncidenceFloor);
}

Eigen::VectorXd DeathModel::reproduction_path(const Eigen::VectorXd& beta) const {
  if (spec_.kind != ModelKind::renewal) throw InputError("R_t path exists for the renewal model only");
  return (r_design_ * theta_block(beta)).array().exp();
}

Eigen::VectorXd DeathModel::initial_beta(std::optional<int> anchor) const {
  const int n = n_obs();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(n_coef_);
  // Lightly smoothed log deaths.
  Eigen::VectorXd ly(n);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    int c = 0;
    for (int d = std::max(0, i - 3); d <= std::min(n - 1, i + 3); ++d, ++c) s += y_(d);
    ly(i) = std::log(std::max(s / c, 0.5));
  }
  const auto& xf = spec_.f_term.design;
  const Eigen::MatrixXd s0 = spec_.f_term.total_penalty(
      std::vector<double>(spec_.f_term.penalties.size(), 1.0));
  const double total_y = std::max(y_.sum(), 1.0);

  if (spec_.kind == ModelKind::basic) {
    beta.head(f_size()) = penalized_ls(xf, ly, s0);
    return beta;
  }

  if (spec_.kind == ModelKind::incidence) {
    const int lag = std::max(1, static_cast<int>(std::lround(spec_.dist.median())));
    Eigen::VectorXd target(n_inc_);
    for (int j = 0; j < n_inc_; ++j) {
      const int i = std::clamp(j - spec_.lead_days - 1 + lag, 0, n - 1);
      target(j) = ly(i);
    }
    beta.head(f_size()) = penalized_ls(xf, target, s0);
    // B-splines sum to one: a constant shift rescales f_c.
    const Eigen::VectorXd mu = predict(beta, 0).mu;
    beta.head(f_size()).array() += std::log(total_y / mu.sum());
    return beta;
  }

  int a = 0;
  if (anchor) {
    a = *anchor;
  } else {
    Eigen::Index peak = 0;
    y_.maxCoeff(&peak);
    a = std::clamp(static_cast<int>(peak) + spec_.lead_days + 1 -
                       static_cast<int>(std::lround(spec_.dist.median())),
                   1, n_inc_ - 1);
  }
  Eigen::VectorXd log_r(n_inc_);
  for (int t = 0; t < n_inc_; ++t) log_r(t) = t < a ? std::log(3.0) : std::log(0.7);
  Eigen::MatrixXd xr = r_design_.rightCols(theta_size_ - 1);
  Eigen::MatrixXd pen = Eigen::MatrixXd::Zero(xr.cols(), xr.cols());
  pen.topLeftCorner(f_size(), f_size()) = 1e-3 * s0;
  beta.segment(1, theta_size_ - 1) = penalized_ls(xr, log_r, pen);
  beta(0) = 0.0;
  for (int it = 0; it < 3; ++it) {
    const Eigen::VectorXd mu = predict(beta, 0).mu;
    beta(0) += std::log(total_y / mu.sum());
  }
  return beta;
}

ObjectiveValue penalized_objective(const DeathModel& model, const Eigen::VectorXd& beta,
                                   std::span<const double> lambda, int order) {
  ObjectiveValue out;
  const Eigen::MatrixXd s = model.total_penalty(lambda);
  try {
    out.state = model.predict(beta, order);
    const NbDeviance dev = nb_deviance(model.y(), out.state.mu, model.theta());
    out.deviance = dev.d.sum();
    out.loglik = nb_loglik(model.y(), out.state.mu, model.theta());
    out.value = out.loglik - 0.5 * beta.dot(s * beta);
    if (!std::isfinite(out.value)) throw DomainError("non-finite objective");
    if (order >= 1) {
      out.gradient = -0.5 * out.state.jacobian.transpose() * dev.d1 - s * beta;
    }
    if (order >= 2) {
      const Eigen::MatrixXd& j = out.state.jacobian;
      Eigen::MatrixXd h = j.transpose() * dev.d2.asDiagonal() * j;
      h += model.weighted_mu_hessian(out.state, dev.d1);
      out.hessian = -0.5 * h - s;
      out.hessian = 0.5 * (out.hessian + out.hessian.transpose()).eval();
    }
  } catch (const DomainError&) {
    out.value = -std::numeric_limits<double>::infinity();
    out.loglik = out.value;
    out.deviance = std::numeric_limits<double>::infinity();
  }
  return out;
}

}  // namespace backcalc
