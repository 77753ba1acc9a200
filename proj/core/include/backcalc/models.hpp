#pragma once

#include "backcalc/dates.hpp"
#include "backcalc/durations.hpp"
#include "backcalc/splines.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace backcalc {

// Dated daily death counts. Counts are stored as doubles so that adjusted
// series (e.g. IFR-corrected) can be fitted; ingest enforces integrality.
struct DeathSeries {
  std::vector<Date> dates;
  Eigen::VectorXd deaths;
  std::map<std::string, Date> anchors;

  int size() const { return static_cast<int>(deaths.size()); }
  // ISO weekday of each day (1..7).
  std::vector<double> day_of_week() const;
  // Index of `d` in the series, or -1.
  int index_of(Date d) const;

  // Undated series starting on an arbitrary Monday.
  static DeathSeries from_counts(const Eigen::VectorXd& y);
};

// Incidence index j refers to infections on the day before death-day j - lead.
int incidence_index(const DeathSeries& series, Date date, int lead_days = 0);
Date incidence_date(const DeathSeries& series, int index, int lead_days = 0);

// ---------------------------------------------------------------------------
// Negative binomial deviance, variance mu + mu^2 / theta.

struct NbDeviance {
  Eigen::VectorXd d;   // D_i
  Eigen::VectorXd d1;  // dD_i / dmu_i
  Eigen::VectorXd d2;  // d^2 D_i / dmu_i^2
};

// D_i = 2 y log(max(1, y) / mu) - 2 (y + theta) log((y + theta) / (mu + theta)).
NbDeviance nb_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double theta);

// Full log likelihood, including the terms constant in mu.
double nb_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double theta);

// ---------------------------------------------------------------------------

enum class ModelKind { basic, incidence, renewal };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

// Renewal generation interval: gamma with shape 6.5 * 0.62^2 and scale
// 0.62^-2, g_1 = \int_0^1.5, g_j = \int_{j-.5}^{j+.5}, truncated at `horizon`.
Eigen::VectorXd generation_interval(int horizon = 60);

struct ModelSpec {
  ModelKind kind = ModelKind::incidence;
  // Smooth for f (basic), log f_c (incidence) or log R_t (renewal), on the
  // incidence grid (death grid for the basic model), possibly dilated.
  SmoothTerm f_term;
  // Weekly cycle evaluated at each death day's weekday; absent for data with
  // no reporting cycle.
  std::optional<SmoothTerm> fw_term;
  DurationDist dist = DurationDist::lognormal(3.2, 0.45);
  double theta = 10.0;
  double population = 6.7e7;  // renewal: initially susceptible N
  double ifr = 0.006;         // renewal: infection fatality rate
  int lead_days = 0;          // incidence grid starts this many days early
  // Renewal only: unpenalized log R_t columns (e.g. a step at an anchor),
  // one row per incidence day.
  Eigen::MatrixXd extra_columns;
  int generation_horizon = 60;
};

struct ModelOptions {
  int k = 30;
  int adaptive_components = 1;  // > 1 selects the adaptive smoother
  bool weekly = true;
  int k_weekly = 7;
  std::optional<int> dilation_anchor;  // incidence-grid index
  DilationWeights dilation;
  double theta = 10.0;
  double population = 6.7e7;
  double ifr = 0.006;
  int lead_days = 0;
  std::optional<int> step_anchor;  // renewal step variant, incidence-grid index
};

// Build bases and penalties for `kind` on the series' grid.
ModelSpec build_spec(ModelKind kind, const DeathSeries& series,
                     const DurationDist& dist, const ModelOptions& options);

// One smoothing parameter's penalty, embedded at `offset` in the coefficient
// vector. Penalties of the same smooth share `block`.
struct Penalty {
  int offset = 0;
  Eigen::MatrixXd matrix;
  int block = 0;
};

struct PenaltyBlock {
  int offset = 0;
  int size = 0;
  int rank = 0;  // rank of any positive combination of the block's penalties
};

// Model quantities at a coefficient vector.
struct LinkState {
  Eigen::VectorXd beta;
  Eigen::VectorXd mu;     // expected deaths
  Eigen::VectorXd delta;  // B f_c (incidence, renewal)
  Eigen::VectorXd fc;     // fatal incidence (incidence, renewal)
  Eigen::VectorXd fw;     // weekly effect per death day
  Eigen::MatrixXd jacobian;  // d mu / d beta, when order >= 1
  // d f_c / d theta for the incidence block, when order >= 1.
  Eigen::MatrixXd dfc;
  // Renewal, order 2: d^2 f_c(t) / d theta^2 for every incidence day.
  std::vector<Eigen::MatrixXd> d2fc;
  bool damping_clamped = false;
  int order = 0;
};

class DeathModel {
 public:
  DeathModel(ModelSpec spec, Eigen::VectorXd y);

  ModelKind kind() const { return spec_.kind; }
  const ModelSpec& spec() const { return spec_; }
  const Eigen::VectorXd& y() const { return y_; }
  double theta() const { return spec_.theta; }
  void set_theta(double theta);

  int n_obs() const { return static_cast<int>(y_.size()); }
  int n_incidence() const { return n_inc_; }
  int n_coef() const { return n_coef_; }

  // Coefficient layout.
  int f_offset() const { return f_offset_; }
  int f_size() const { return spec_.f_term.n_coef(); }
  int extra_offset() const { return f_offset_ + f_size(); }
  int extra_size() const { return static_cast<int>(spec_.extra_columns.cols()); }
  int w_offset() const { return w_offset_; }
  int w_size() const { return spec_.fw_term ? spec_.fw_term->n_coef() : 0; }

  const std::vector<Penalty>& penalties() const { return penalties_; }
  const std::vector<PenaltyBlock>& penalty_blocks() const { return blocks_; }
  int n_lambda() const { return static_cast<int>(penalties_.size()); }
  Eigen::MatrixXd total_penalty(std::span<const double> lambda) const;

  const Eigen::MatrixXd& delay() const { return delay_; }
  // Same model with another infection-to-death law.
  DeathModel with_distribution(const DurationDist& dist) const;

  // order 0: mu only; 1: + Jacobian; 2: + second-derivative caches.
  LinkState predict(const Eigen::VectorXd& beta, int order = 0) const;

  // sum_i w_i d^2 mu_i / d beta d beta^T at a state predicted with order 2.
  Eigen::MatrixXd weighted_mu_hessian(const LinkState& state, const Eigen::VectorXd& w) const;

  // exp(f) for the basic model, f_c otherwise (incidence-grid length).
  Eigen::VectorXd smooth_path(const Eigen::VectorXd& beta) const;
  // Renewal: R_t per incidence day.
  Eigen::VectorXd reproduction_path(const Eigen::VectorXd& beta) const;

  // Renewal: the recursion with its first (and optionally second) derivatives.
  struct RenewalPath {
    Eigen::VectorXd c;
    Eigen::MatrixXd dc;
    std::vector<Eigen::MatrixXd> d2c;
    bool clamped = false;
  };
  RenewalPath renewal(const Eigen::VectorXd& beta, int order) const;

  // Starting coefficients: log f_c matched to deaths shifted back by the
  // median delay (incidence), log R stepping from log 3 to log 0.7 at
  // `anchor` (renewal), or a smooth of log deaths (basic).
  Eigen::VectorXd initial_beta(std::optional<int> anchor = std::nullopt) const;

 private:
  Eigen::VectorXd theta_block(const Eigen::VectorXd& beta) const;

  ModelSpec spec_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd delay_;
  Eigen::VectorXd gen_;
  Eigen::MatrixXd r_design_;  // renewal: [0 | X^R | extra] per day (theta coords)
  std::vector<Penalty> penalties_;
  std::vector<PenaltyBlock> blocks_;
  int n_inc_ = 0;
  int n_coef_ = 0;
  int f_offset_ = 0;
  int w_offset_ = 0;
  int theta_size_ = 0;  // coefficients driving f_c
};

struct ObjectiveValue {
  double value = 0.0;     // l(beta) - beta' S beta / 2
  double loglik = 0.0;    // l(beta)
  double deviance = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;  // of `value`; negative definite near the optimum
  LinkState state;
};

// Penalized NB log likelihood with S_lambda = sum_m lambda_m S_m. order
// selects value only (0), + gradient (1), + Hessian (2). A non-finite value
// is reported as -inf so that callers can backtrack.
ObjectiveValue penalized_objective(const DeathModel& model, const Eigen::VectorXd& beta,
                                   std::span<const double> lambda, int order);

}  // namespace backcalc
