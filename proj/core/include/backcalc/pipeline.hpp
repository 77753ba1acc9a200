#pragma once

#include "backcalc/checks.hpp"
#include "backcalc/epi_r.hpp"
#include "backcalc/inference.hpp"
#include "backcalc/io.hpp"
#include "backcalc/models.hpp"
#include "backcalc/pcr.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace backcalc {

enum class DurationSource { meta, chess, isaric, file };

std::string to_string(DurationSource s);
DurationSource duration_source_from_string(const std::string& name);

struct RunConfig {
  std::filesystem::path input;  // empty: bundled sample series
  // Simulate the extreme scenario instead of reading `input`.
  bool extreme_scenario = false;
  ScenarioSpec scenario;

  ModelKind model = ModelKind::incidence;
  std::map<std::string, Date> anchors;
  DurationSource durations = DurationSource::meta;
  std::filesystem::path duration_file;  // day,probability table for `file`
  int ensemble = 20;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "backcalc_out";

  bool dilate = false;
  bool ifr_adjust = false;
  bool sanity = true;
  bool imputation_demo = false;
  bool step_variant = false;
  bool plots = true;

  std::string dilate_anchor = "lockdown";
  double ifr_rate = 0.985;
  // Hospital mortality improvement reported from 29 March 2020.
  Date ifr_start = Date{std::chrono::year{2020} / std::chrono::March / 29};
  int sanity_reps = 100;
  int imputation_reps = 20;

  SeirParams seir;
  double infectivity_days_lo = 1.0, infectivity_days_hi = 5.0;
  double infectious_days_lo = 2.0, infectious_days_hi = 10.0;

  int k = 30;
  bool weekly = true;
  int samples = 1000;
  SamplerKind sampler = SamplerKind::gaussian;
  unsigned threads = 0;
};

// Set one `key = value` entry; throws InputError for unknown keys or values.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

// Flat key = value file; '#' starts a comment. BACKCALC_OUTPUT_DIR, when set,
// overrides output_dir.
RunConfig load_config(const std::filesystem::path& path);
void apply_environment(RunConfig& config);

DurationEnsemble build_durations(const RunConfig& config);
DeathSeries load_series(const RunConfig& config, Eigen::VectorXd* truth = nullptr);

struct RunSummary {
  std::vector<double> lambda;
  double theta = 0.0;
  double min_ess = 0.0;
  double deviance = 0.0;
  Date peak_date{};
  double peak_probability = 0.0;
  std::optional<Date> dilated_peak_date;
  double dilated_peak_probability = 0.0;
  std::vector<std::filesystem::path> files;
  std::string report;
};

// Basic model for theta, then the requested model pooled over the duration
// ensemble; writes CSVs, the fit report and SVGs into config.output_dir.
RunSummary run_pipeline(const RunConfig& config);

// Plots regenerated from the CSVs in `dir` alone.
void render_plots(const std::filesystem::path& dir, const std::vector<double>& markers = {});

CsvTable pcr_table(const Eigen::VectorXd& counts, const Eigen::VectorXd* truth, const PcrFit* fit);

// Infection-to-death summaries of every duration source.
CsvTable durations_table(const RunConfig& config);

}  // namespace backcalc
