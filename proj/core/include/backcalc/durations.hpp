#pragma once

#include "backcalc/errors.hpp"
#include "backcalc/rng.hpp"

#include <Eigen/Dense>

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace backcalc {

enum class Family { lognormal, gamma, point_mass };

// Infection-to-death (or onset-to-death) duration law, in days.
//   lognormal:  param1 = log-scale mean mu, param2 = log-scale sd sigma
//   gamma:      param1 = shape, param2 = scale
//   point_mass: param1 = location
// A lognormal with sigma == 0 behaves as a point mass at exp(mu).
struct DurationDist {
  Family family = Family::lognormal;
  double param1 = 0.0;
  double param2 = 1.0;

  static DurationDist lognormal(double mu, double sigma);
  static DurationDist gamma(double shape, double scale);
  static DurationDist point_mass(double location);
  static DurationDist lognormal_from_moments(double mean, double sd);
  static DurationDist gamma_from_moments(double mean, double sd);

  double pdf(double x) const;
  double cdf(double x) const;
  double quantile(double p) const;
  double mean() const;
  double sd() const;
  double median() const;
  double sample(Rng& rng) const;

  bool degenerate() const;
};

struct PublishedModel {
  std::string name;
  DurationDist dist;
  int sample_size;
};

// Onset-to-death models from the literature, each with its sample size:
// gamma (mean 17.8, sd 8.44, n = 24), gamma (mean 20, sd 10, n = 41) and
// lognormal (mean 20.2, sd 11.6, n = 34).
std::array<PublishedModel, 3> published_models();

// Infection-to-onset: lognormal with log-scale mean 1.63 and sd 0.50.
DurationDist incubation_model();

// Maximum likelihood lognormal fit. Throws InputError on non-positive data.
DurationDist fit_lognormal_ml(std::span<const double> sample);

// Simulate the published studies at their sample sizes and fit a lognormal to
// the pooled 99 durations.
DurationDist combine_onset_to_death(Rng& rng);

inline constexpr int kKlSampleSize = 100000;

// Lognormal closest in KL divergence to the law of onset2death + incubation
// (independent), via ML on a Monte-Carlo sample from the sum.
DurationDist convolve_to_infection(const DurationDist& onset2death,
                                   const DurationDist& incubation, Rng& rng,
                                   int n = kKlSampleSize);

struct DurationEnsemble {
  std::vector<DurationDist> draws;
  DurationDist mean_dist;
};

// The pooled-study onset-to-death law fitted on a large sample and
// convolved with incubation (the "infinite sample" version of one
// ensemble draw).
DurationDist mean_infection_to_death(Rng& rng);

// R replicate infection-to-death laws; replicate r uses stream r of `seed`.
DurationEnsemble duration_ensemble(int replicates, std::uint64_t seed);

// B(i, j) = pdf(i - j + 1) for i >= j, zero above the diagonal. Element j of
// the incidence vector holds infections on the day before death-day j.
Eigen::MatrixXd delay_matrix(const DurationDist& dist, int n_days);

// Rectangular generalization: the incidence grid starts `n_incidence -
// n_deaths` days before the death grid, B(i, j) = pdf(i - j + lead + 1).
Eigen::MatrixXd delay_matrix(const DurationDist& dist, int n_deaths,
                             int n_incidence);

// Two-column table read from CSV ('#' lines are comments, first non-comment
// line is a header).
struct DayTable {
  std::vector<int> day;
  std::vector<double> value;
  double total() const;
};

DayTable read_day_table(const std::filesystem::path& path);
void write_day_table(const std::filesystem::path& path, const DayTable& table,
                     const std::string& value_name,
                     const std::string& comment = {});

// Probability of a duration falling in day bin d, [d - 0.5, d + 0.5) with
// the lower edge clipped at zero.
double day_bin_probability(const DurationDist& dist, int day);

struct MixtureFit {
  DurationDist gamma;      // short, hospital-acquired component
  DurationDist lognormal;  // community component, longer mean
  double gamma_proportion = 0.0;
  double loglik = 0.0;
};

struct ChessMixtureResult {
  MixtureFit mle;
  MixtureFit profiled;  // gamma proportion reduced until loglik = mle - drop
  double loglik_drop = 4.0;
};

// Gamma + lognormal mixture fitted by ML to onset-to-death day counts; then
// the gamma proportion is reduced, re-maximizing the remaining parameters,
// until the profile log-likelihood sits `loglik_drop` below the maximum.
ChessMixtureResult fit_chess_mixture(const DayTable& histogram,
                                     double loglik_drop = 4.0);

struct IsaricResult {
  DurationDist hospital_to_death;
  DurationDist onset_to_hospital;
  double onset_to_death_mean = 0.0;
  double onset_to_death_sd = 0.0;
  DurationDist infection_to_death;
};

// Lognormal KL fit to a tabulated hospitalization-to-death probability
// function, combined with lognormal onset-to-hospitalization (mean 7.7,
// sd 6.1) and incubation, all independent.
IsaricResult isaric_infection_to_death(const DayTable& hosp2death_pf, Rng& rng);

// Lognormal minimizing KL(table || lognormal) over the day bins.
DurationDist fit_lognormal_to_table(const DayTable& pf);

std::filesystem::path data_dir();

}  // namespace backcalc
