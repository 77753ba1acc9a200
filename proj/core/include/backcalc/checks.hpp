#pragma once

#include "backcalc/durations.hpp"
#include "backcalc/inference.hpp"
#include "backcalc/models.hpp"
#include "backcalc/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace backcalc {

// Growth with the given doubling time up to the day before lockdown, an
// instantaneous drop to drop_factor of that peak, then geometric decay.
// Indices are on the incidence grid of the simulated death series.
struct ScenarioSpec {
  double doubling_time = 3.0;
  double drop_factor = 0.2;
  double decay_rate = 0.95;  // fraction retained per day after lockdown
  int lockdown_day = 40;
  int horizon = 150;
  double peak = 5000.0;      // expected fatal infections the day before lockdown
};

void validate(const ScenarioSpec& spec);

// Expected fatal incidence of the scenario, one value per incidence index.
Eigen::VectorXd scenario_incidence(const ScenarioSpec& spec);

struct SimulatedDeaths {
  Eigen::VectorXd truth;       // expected fatal incidence
  Eigen::VectorXd infections;  // realized fatal infections
  DeathSeries series;
};

// Poisson fatal infections; each is assigned a duration drawn from `dist`
// and dies on day index + round(duration) - 1 when that falls in the series.
SimulatedDeaths simulate_extreme(const ScenarioSpec& spec, const DurationDist& dist, Rng& rng);

// Same mechanics for an arbitrary expected incidence path.
SimulatedDeaths simulate_from_incidence(const Eigen::VectorXd& expected_incidence,
                                        const DurationDist& dist, Rng& rng);

// Negative binomial deaths with mean B f_c (times exp(weekly) if given).
Eigen::VectorXd simulate_nb_deaths(const Eigen::MatrixXd& delay, const Eigen::VectorXd& fc,
                                   double theta, Rng& rng,
                                   const Eigen::VectorXd& weekly = {});

struct SanityEnvelope {
  Eigen::VectorXd mu;  // expected deaths under the median profile
  Eigen::MatrixXd sims;  // one simulated death series per row
  Eigen::VectorXd lower, median, upper;  // pointwise 2.5%, 50%, 97.5%
  // Share of days where `observed` lies inside [lower, upper].
  double coverage(const Eigen::VectorXd& observed) const;
};

// Death series simulated forward from a fatal incidence profile through the
// model's delay (and weekly effect `fw`, may be empty).
SanityEnvelope forward_sanity(const Eigen::MatrixXd& delay, const Eigen::VectorXd& fc,
                              const Eigen::VectorXd& fw, double theta, int n_reps,
                              std::uint64_t seed);

struct PeakAnalysis {
  PosteriorEnsemble posterior;
  std::vector<double> peak;  // probability per incidence index
  int mode = -1;
  double mode_probability = 0.0;
  int search_end = -1;       // last index searched
};

// Last incidence index whose infections have at least half of their deaths
// inside the observed series under the model's delay. Later days are
// informed by the smoothing prior alone and are left out of the peak search.
int identifiable_end(const DeathModel& model);

PeakAnalysis peak_analysis(const DeathModel& model, const DurationEnsemble& ensemble,
                           const PoolOptions& options);

// Rebuild the smooth on a grid dilated around `anchor` (incidence index)
// and refit.
PeakAnalysis refit_dilated(const DeathSeries& series, ModelKind kind, const DurationEnsemble& ensemble,
                           ModelOptions options, int anchor, const PoolOptions& pool,
                           DilationWeights weights = {});

struct StepVariantResult {
  FitState fit;
  Eigen::VectorXd r;      // R_t at the fitted coefficients
  double r_eve = 0.0;     // R on the day before the anchor
  double step = 0.0;      // log R jump at the anchor
  bool boundary_artefact = false;  // R outside [1/4, 4] in the first or last week
};

// Renewal model whose log R_t carries an unpenalized step at `anchor`.
StepVariantResult renewal_step_variant(const DeathSeries& series, const DurationDist& dist,
                                       ModelOptions options, int anchor,
                                       const FitOptions& fit = {});

struct IfrAdjustment {
  DeathSeries adjusted;
  Eigen::VectorXd ratio;  // adjusted / raw per day
};

// Deaths from day `start` on are scaled by rate^-(t - start), the ratio of
// expected deaths without to with a fatality rate falling by `rate` per day.
IfrAdjustment ifr_adjust(const DeathSeries& deaths, double rate, int start);

struct ImputationDemo {
  Eigen::VectorXd imputed;        // mean imputed infections per incidence index
  Eigen::VectorXd implied;        // B * imputed
  double naive_deviance = 0.0;
  double proper_deviance = 0.0;
  double deviance_ratio = 0.0;
  Eigen::VectorXd proper_incidence;  // deconvolution estimate
};

// Subtract independent duration draws from each death day, average over
// replicates, and push the result back through the delay. The proper fit is
// the empirical-Bayes fit of `model` (incidence kind).
ImputationDemo naive_imputation_demo(const DeathModel& model, int n_reps, std::uint64_t seed,
                                     const FitOptions& fit = {});

// Largest ratio imputed(t) / imputed(t + h), 1 <= h <= 3, with both days in
// [centre - 3, centre + 3].
double max_drop_ratio(const Eigen::VectorXd& path, int centre);

}  // namespace backcalc
