#include "backcalc/pipeline.hpp"

#include "backcalc/errors.hpp"
#include "backcalc/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace backcalc {

namespace {

std::string trim(std::string s) {
  const auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && issp(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && issp(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InputError(key + ": expected a boolean, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || !std::isfinite(x)) throw InputError(key + ": expected a number, got '" + v + "'");
  return x;
}

long long parse_int(const std::string& key, const std::string& v) {
  const double x = parse_double(key, v);
  if (x != std::floor(x)) throw InputError(key + ": expected an integer, got '" + v + "'");
  return static_cast<long long>(x);
}

std::vector<Date> grid_dates(const DeathModel& model, const DeathSeries& series) {
  std::vector<Date> out;
  if (model.kind() == ModelKind::basic) return series.dates;
  for (int j = 0; j < model.n_incidence(); ++j) out.push_back(incidence_date(series, j, model.spec().lead_days));
  return out;
}

Eigen::VectorXd masked_median(const Eigen::MatrixXd& paths) { return pointwise_bands(paths).median; }

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + format_number(x);
  return s;
}

}  // namespace

std::string to_string(DurationSource s) {
  switch (s) {
    case DurationSource::meta: return "meta";
    case DurationSource::chess: return "chess";
    case DurationSource::isaric: return "isaric";
    case DurationSource::file: return "file";
  }
  return "meta";
}

DurationSource duration_source_from_string(const std::string& name) {
  if (name == "meta") return DurationSource::meta;
  if (name == "chess") return DurationSource::chess;
  if (name == "isaric") return DurationSource::isaric;
  if (name == "file") return DurationSource::file;
  throw InputError("unknown duration source '" + name + "' (meta, chess, isaric, file)");
}

void apply_setting(RunConfig& config, const std::string& key_in, const std::string& value_in) {
  RunConfig c = config;  // left untouched on error
  const std::string key = trim(key_in), v = trim(value_in);
  if (key == "input") c.input = v;
  else if (key == "scenario") {
    if (v == "extreme") c.extreme_scenario = true;
    else if (v == "none" || v.empty()) c.extreme_scenario = false;
    else throw InputError("scenario: expected 'extreme' or 'none'");
  }
  else if (key == "scenario.doubling_time") c.scenario.doubling_time = parse_double(key, v);
  else if (key == "scenario.drop_factor") c.scenario.drop_factor = parse_double(key, v);
  else if (key == "scenario.decay_rate") c.scenario.decay_rate = parse_double(key, v);
  else if (key == "scenario.lockdown_day") c.scenario.lockdown_day = static_cast<int>(parse_int(key, v));
  else if (key == "scenario.horizon") c.scenario.horizon = static_cast<int>(parse_int(key, v));
  else if (key == "scenario.peak") c.scenario.peak = parse_double(key, v);
  else if (key == "model") c.model = model_kind_from_string(v);
  else if (key == "anchor" || key.rfind("anchor.", 0) == 0) {
    std::string name, date;
    if (key == "anchor") {
      const auto eq = v.find('=');
      if (eq == std::string::npos) throw InputError("anchor: expected name=YYYY-MM-DD");
      name = trim(v.substr(0, eq));
      date = trim(v.substr(eq + 1));
    } else {
      name = key.substr(7);
      date = v;
    }
    if (name.empty()) throw InputError("anchor name is empty");
    c.anchors[name] = parse_date(date);
  }
  else if (key == "durations") c.durations = duration_source_from_string(v);
  else if (key == "duration_file") c.duration_file = v;
  else if (key == "ensemble") c.ensemble = static_cast<int>(parse_int(key, v));
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, v));
  else if (key == "output_dir") c.output_dir = v;
  else if (key == "check.dilate") c.dilate = parse_bool(key, v);
  else if (key == "check.ifr_adjust") c.ifr_adjust = parse_bool(key, v);
  else if (key == "check.sanity") c.sanity = parse_bool(key, v);
  else if (key == "check.imputation_demo") c.imputation_demo = parse_bool(key, v);
  else if (key == "check.step_variant") c.step_variant = parse_bool(key, v);
  else if (key == "plots") c.plots = parse_bool(key, v);
  else if (key == "dilate_anchor") c.dilate_anchor = v;
  else if (key == "ifr.rate") c.ifr_rate = parse_double(key, v);
  else if (key == "ifr.start") c.ifr_start = parse_date(v);
  else if (key == "sanity.reps") c.sanity_reps = static_cast<int>(parse_int(key, v));
  else if (key == "imputation.reps") c.imputation_reps = static_cast<int>(parse_int(key, v));
  else if (key == "seir.infectivity_days") c.seir.gamma = 1.0 / parse_double(key, v);
  else if (key == "seir.infectious_days") c.seir.delta = 1.0 / parse_double(key, v);
  else if (key == "seir.infectivity_days_range" || key == "seir.infectious_days_range") {
    const auto colon = v.find(':');
    if (colon == std::string::npos) throw InputError(key + ": expected lo:hi");
    const double lo = parse_double(key, v.substr(0, colon)), hi = parse_double(key, v.substr(colon + 1));
    if (!(lo > 0.0 && hi >= lo)) throw InputError(key + ": need 0 < lo <= hi");
    if (key == "seir.infectivity_days_range") {
      c.infectivity_days_lo = lo;
      c.infectivity_days_hi = hi;
    } else {
      c.infectious_days_lo = lo;
      c.infectious_days_hi = hi;
    }
  }
  else if (key == "k") c.k = static_cast<int>(parse_int(key, v));
  else if (key == "weekly") c.weekly = parse_bool(key, v);
  else if (key == "samples") c.samples = static_cast<int>(parse_int(key, v));
  else if (key == "sampler") {
    if (v == "gaussian") c.sampler = SamplerKind::gaussian;
    else if (v == "mh") c.sampler = SamplerKind::mh;
    else throw InputError("sampler: expected 'gaussian' or 'mh'");
  }
  else if (key == "threads") c.threads = static_cast<unsigned>(parse_int(key, v));
  else throw InputError("unknown configuration key '" + key + "'");

  if (c.ensemble < 1) throw InputError("ensemble must be >= 1");
  if (c.samples < 1) throw InputError("samples must be >= 1");
  config = std::move(c);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  RunConfig c;
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError(path.string() + ":" + std::to_string(no) + ": expected key = value");
    try {
      apply_setting(c, line.substr(0, eq), line.substr(eq + 1));
    } catch (const InputError& e) {
      throw InputError(path.string() + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  // Relative paths in the file are relative to the file.
  const auto base = path.parent_path();
  if (!c.input.empty() && c.input.is_relative()) c.input = base / c.input;
  if (!c.duration_file.empty() && c.duration_file.is_relative()) c.duration_file = base / c.duration_file;
  return c;
}

void apply_environment(RunConfig& c) {
  if (const char* env = std::getenv("BACKCALC_OUTPUT_DIR"); env && *env) c.output_dir = env;
}

DurationEnsemble build_durations(const RunConfig& c) {
  if (c.durations == DurationSource::meta) return duration_ensemble(c.ensemble, c.seed);
  Rng rng = stream_rng(c.seed, 0xd0d0ULL);
  DurationDist dist;
  switch (c.durations) {
    case DurationSource::chess: {
      const auto chess = fit_chess_mixture(read_day_table(data_dir() / "chess_onset_to_death.csv"));
      dist = convolve_to_infection(chess.profiled.lognormal, incubation_model(), rng);
      break;
    }
    case DurationSource::isaric:
      dist = isaric_infection_to_death(read_day_table(data_dir() / "isaric_hospital_to_death.csv"), rng)
                 .infection_to_death;
      break;
    case DurationSource::file:
      if (c.duration_file.empty()) throw InputError("durations = file needs duration_file");
      dist = fit_lognormal_to_table(read_day_table(c.duration_file));
      break;
    case DurationSource::meta: break;
  }
  DurationEnsemble e;
  e.draws.assign(1, dist);
  e.mean_dist = dist;
  return e;
}

DeathSeries load_series(const RunConfig& c, Eigen::VectorXd* truth) {
  DeathSeries s;
  if (c.extreme_scenario) {
    Rng rng = stream_rng(c.seed, 0xe47e3eULL);
    Rng drng = stream_rng(c.seed, 0xffffffffULL);
    const auto sim = simulate_extreme(c.scenario, mean_infection_to_death(drng), rng);
    s = sim.series;
    if (truth) *truth = sim.truth;
  } else {
    s = ingest_deaths(c.input.empty() ? data_dir() / "sample_deaths.csv" : c.input);
  }
  for (const auto& [name, date] : c.anchors) s.anchors[name] = date;
  return s;
}

CsvTable pcr_table(const Eigen::VectorXd& counts, const Eigen::VectorXd* truth, const PcrFit* fit) {
  CsvTable t;
  std::vector<std::string> day;
  for (Eigen::Index d = 0; d < counts.size(); ++d) day.push_back(std::to_string(d));
  t.add_column("day", day);
  if (truth) t.add_column("truth", *truth);
  t.add_column("positives", counts);
  if (fit) {
    t.add_column("fitted", fit->f);
    t.add_column("lower", fit->lower);
    t.add_column("upper", fit->upper);
  }
  return t;
}

CsvTable durations_table(const RunConfig& c) {
  CsvTable t;
  std::vector<std::string> source, replicate;
  std::vector<double> mu, sigma, mean, sd;
  auto add = [&](const std::string& s, const std::string& r, const DurationDist& d) {
    source.push_back(s);
    replicate.push_back(r);
    mu.push_back(d.param1);
    sigma.push_back(d.param2);
    mean.push_back(d.mean());
    sd.push_back(d.sd());
  };
  const auto meta = duration_ensemble(c.ensemble, c.seed);
  add("meta", "mean", meta.mean_dist);
  for (std::size_t r = 0; r < meta.draws.size(); ++r) add("meta", std::to_string(r), meta.draws[r]);
  for (auto src : {DurationSource::chess, DurationSource::isaric}) {
    RunConfig cc = c;
    cc.durations = src;
    add(to_string(src), "mean", build_durations(cc).mean_dist);
  }
  auto vec = [](const std::vector<double>& v) {
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  t.add_column("source", source);
  t.add_column("replicate", replicate);
  t.add_column("mu", vec(mu));
  t.add_column("sigma", vec(sigma));
  t.add_column("mean", vec(mean));
  t.add_column("sd", vec(sd));
  return t;
}

void render_plots(const std::filesystem::path& dir, const std::vector<double>& markers) {
  namespace fs = std::filesystem;
  auto has = [&](const char* f) { return fs::exists(dir / f); };
  if (has("incidence.csv")) {
    plot_bands_csv(dir / "incidence.csv", dir / "incidence.svg", "Fatal incidence", "fatal infections per day",
                   markers);
  }
  if (has("r.csv")) plot_bands_csv(dir / "r.csv", dir / "r.svg", "Reproduction number", "R", markers, 1.0);
  if (has("peak_distribution.csv")) plot_peak_csv(dir / "peak_distribution.csv", dir / "peak_distribution.svg", markers);
  if (has("sanity_envelope.csv")) plot_sanity_csv(dir / "sanity_envelope.csv", dir / "sanity_envelope.svg");
  if (has("incidence_dilated.csv")) {
    plot_bands_csv(dir / "incidence_dilated.csv", dir / "incidence_dilated.svg", "Fatal incidence, dilated model",
                   "fatal infections per day", markers);
  }
  if (has("peak_distribution_dilated.csv")) {
    plot_peak_csv(dir / "peak_distribution_dilated.csv", dir / "peak_distribution_dilated.svg", markers);
  }
  if (has("incidence_ifr.csv")) {
    plot_bands_csv(dir / "incidence_ifr.csv", dir / "incidence_ifr.svg", "Fatal incidence, IFR-adjusted deaths",
                   "fatal infections per day", markers);
  }
  if (has("r_sensitivity.csv")) {
    const CsvTable t = read_csv(dir / "r_sensitivity.csv");
    const auto x = t.numeric("day");
    SvgPlot p("R under alternative SEIR durations", "day (0 = 13 March 2020)", "R");
    p.band(x, t.numeric("lower"), t.numeric("upper"), "#fdae6b", 0.6);
    p.line(x, t.numeric("central"), "#a63603", 2.0);
    p.hline(1.0, "#555");
    for (double m : markers) p.vline(m, "#555");
    p.save(dir / "r_sensitivity.svg");
  }
  if (has("imputation.csv")) {
    const CsvTable t = read_csv(dir / "imputation.csv");
    const auto x = t.numeric("day");
    SvgPlot p("Naive imputation against deconvolution", "day (0 = 13 March 2020)", "infections per day");
    p.line(x, t.numeric("imputed"), "#d62728", 1.5, true);
    p.line(x, t.numeric("deconvolved"), "#08306b", 2.0);
    if (std::find(t.header.begin(), t.header.end(), "truth") != t.header.end()) {
      p.line(x, t.numeric("truth"), "#555", 1.0);
    }
    for (double m : markers) p.vline(m, "#555");
    p.save(dir / "imputation.svg");
  }
}

RunSummary run_pipeline(const RunConfig& config) {
  namespace fs = std::filesystem;
  RunSummary out;
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  std::ostringstream rep;

  Eigen::VectorXd truth;
  const DeathSeries series = load_series(config, &truth);
  const DurationEnsemble ens = build_durations(config);
  rep << "series: " << series.size() << " days from " << format_date(series.dates.front()) << " to "
      << format_date(series.dates.back()) << ", " << format_number(series.deaths.sum()) << " deaths\n";
  rep << "durations: " << to_string(config.durations) << ", " << ens.draws.size()
      << " draws, mean law lognormal(" << format_number(ens.mean_dist.param1) << ", "
      << format_number(ens.mean_dist.param2) << "), mean " << format_number(ens.mean_dist.mean()) << " days\n";

  ModelOptions mo;
  mo.k = config.k;
  mo.weekly = config.weekly;

  // Dispersion from the basic model.
  FitOptions basic_fit;
  basic_fit.estimate_theta = true;
  const DeathModel basic(build_spec(ModelKind::basic, series, ens.mean_dist, mo), series.deaths);
  const FitState basic_state = fit_empirical_bayes(basic, basic_fit);
  mo.theta = basic_state.theta;
  out.theta = basic_state.theta;
  rep << "theta: " << format_number(out.theta) << " (basic model, Laplace criterion)\n";

  std::optional<int> anchor;
  if (auto it = series.anchors.find(config.dilate_anchor); it != series.anchors.end()) {
    anchor = incidence_index(series, it->second, mo.lead_days);
  }

  PoolOptions pool;
  pool.samples_per_draw = config.samples;
  pool.sampler = config.sampler;
  pool.threads = config.threads;
  pool.seed = config.seed;
  if (config.model == ModelKind::renewal && anchor) pool.fit.start_anchor = anchor;

  const DeathModel model(build_spec(config.model, series, ens.mean_dist, mo), series.deaths);
  const FitState central = fit_empirical_bayes(model, pool.fit);
  out.lambda = central.lambda;
  out.deviance = central.deviance;
  rep << "model: " << to_string(config.model) << ", k = " << config.k << (config.weekly ? ", weekly cycle" : "")
      << "\n";
  rep << "lambda: " << join(central.lambda) << "\n";
  rep << "deviance: " << format_number(central.deviance) << " (mean duration law)\n";
  rep << "laplace log marginal likelihood: " << format_number(central.lml) << "\n";

  PeakAnalysis main = peak_analysis(model, ens, pool);
  out.min_ess = main.posterior.ess.minCoeff();
  rep << "samples: " << main.posterior.draws.rows() << " pooled over " << main.posterior.fitted_draws.size()
      << " duration draws (" << (config.sampler == SamplerKind::mh ? "mh" : "gaussian") << ")\n";
  rep << "min effective sample size: " << format_number(out.min_ess) << "\n";
  for (const auto& w : main.posterior.warnings) rep << "warning: " << w << "\n";

  const auto dates = grid_dates(model, series);
  const auto write = [&](const std::string& name, const CsvTable& t) {
    write_csv(dir / name, t);
    out.files.push_back(dir / name);
  };

  Bands inc = pointwise_bands(main.posterior.incidence);
  CsvTable inc_table = bands_table(dates, inc);
  if (truth.size() == static_cast<Eigen::Index>(dates.size())) inc_table.add_column("truth", truth);
  write("incidence.csv", inc_table);
  write("peak_distribution.csv", peak_table(dates, main.peak));
  out.peak_date = dates[static_cast<std::size_t>(main.mode)];
  out.peak_probability = main.mode_probability;
  rep << "peak day mode: " << format_date(out.peak_date) << " (day " << figure_day(out.peak_date)
      << "), probability " << format_number(out.peak_probability) << "\n";
  if (main.search_end + 1 < static_cast<int>(dates.size())) {
    rep << "peak search ends " << format_date(dates[static_cast<std::size_t>(main.search_end)])
        << " (later infections have under half their deaths observed)\n";
  }
  for (const auto& [name, date] : series.anchors) {
    rep << "anchor " << name << ": " << format_date(date) << ", P(peak before) = ";
    double before = 0.0;
    for (std::size_t j = 0; j < dates.size(); ++j) {
      if (dates[j] < date) before += main.peak[j];
    }
    rep << format_number(before) << "\n";
  }

  // R: renewal paths directly, otherwise SEIR inversion of f_c.
  if (config.model == ModelKind::renewal) {
    write("r.csv", bands_table(dates, pointwise_bands(main.posterior.reproduction)));
  } else if (config.model == ModelKind::incidence) {
    write("r.csv", bands_table(dates, r_posterior(main.posterior, config.seir)));
    const RSensitivity sens =
        r_sensitivity(inc.median, config.infectivity_days_lo, config.infectivity_days_hi,
                      config.infectious_days_lo, config.infectious_days_hi, 5, config.seir);
    CsvTable st;
    std::vector<std::string> day, date;
    for (const auto& d : dates) {
      day.push_back(std::to_string(figure_day(d)));
      date.push_back(format_date(d));
    }
    st.add_column("day", day);
    st.add_column("date", date);
    st.add_column("central", sens.central);
    st.add_column("lower", sens.lower);
    st.add_column("upper", sens.upper);
    write("r_sensitivity.csv", st);
  }

  if (config.sanity) {
    if (config.model == ModelKind::basic) {
      rep << "sanity check skipped for the basic model\n";
    } else {
      const LinkState ls = model.predict(central.beta);
      const SanityEnvelope env = forward_sanity(model.delay(), masked_median(main.posterior.incidence), ls.fw,
                                                mo.theta, config.sanity_reps, config.seed);
      CsvTable st;
      std::vector<std::string> day, date;
      for (const auto& d : series.dates) {
        day.push_back(std::to_string(figure_day(d)));
        date.push_back(format_date(d));
      }
      st.add_column("day", day);
      st.add_column("date", date);
      st.add_column("observed", series.deaths);
      st.add_column("expected", env.mu);
      st.add_column("lower", env.lower);
      st.add_column("median", env.median);
      st.add_column("upper", env.upper);
      write("sanity_envelope.csv", st);
      rep << "sanity: observed inside the simulated 95% envelope on " << format_number(100.0 * env.coverage(series.deaths))
          << "% of days\n";
    }
  }

  if (config.dilate) {
    if (!anchor) throw InputError("dilation needs anchor '" + config.dilate_anchor + "'");
    if (config.model == ModelKind::basic) throw InputError("dilation applies to the incidence and renewal models");
    const PeakAnalysis dil = refit_dilated(series, config.model, ens, mo, *anchor, pool);
    write("incidence_dilated.csv", bands_table(dates, pointwise_bands(dil.posterior.incidence)));
    write("peak_distribution_dilated.csv", peak_table(dates, dil.peak));
    out.dilated_peak_date = dates[static_cast<std::size_t>(dil.mode)];
    out.dilated_peak_probability = dil.mode_probability;
    rep << "dilated peak day mode: " << format_date(*out.dilated_peak_date) << " (day "
        << figure_day(*out.dilated_peak_date) << "), probability " << format_number(dil.mode_probability) << "\n";
  }

  if (config.ifr_adjust) {
    const Date start = config.ifr_start;
    const int idx = series.index_of(start);
    if (idx < 0) throw InputError("ifr.start " + format_date(start) + " is outside the series");
    const IfrAdjustment adj = ifr_adjust(series, config.ifr_rate, idx);
    const DeathModel am(build_spec(config.model, adj.adjusted, ens.mean_dist, mo), adj.adjusted.deaths);
    const PeakAnalysis pa = peak_analysis(am, ens, pool);
    write("incidence_ifr.csv", bands_table(dates, pointwise_bands(pa.posterior.incidence)));
    const Date d = dates[static_cast<std::size_t>(pa.mode)];
    rep << "IFR-adjusted peak day mode (rate " << format_number(config.ifr_rate) << " from " << format_date(start)
        << "): " << format_date(d) << ", probability " << format_number(pa.mode_probability) << ", shift "
        << (d - out.peak_date).count() << " days\n";
  }

  if (config.imputation_demo) {
    ModelOptions io = mo;
    const DeathModel im(build_spec(ModelKind::incidence, series, ens.mean_dist, io), series.deaths);
    const ImputationDemo demo = naive_imputation_demo(im, config.imputation_reps, config.seed);
    const auto idates = grid_dates(im, series);
    CsvTable t;
    std::vector<std::string> day, date;
    for (const auto& d : idates) {
      day.push_back(std::to_string(figure_day(d)));
      date.push_back(format_date(d));
    }
    t.add_column("day", day);
    t.add_column("date", date);
    t.add_column("imputed", demo.imputed);
    t.add_column("deconvolved", demo.proper_incidence);
    if (truth.size() == static_cast<Eigen::Index>(idates.size())) t.add_column("truth", truth);
    write("imputation.csv", t);
    rep << "imputation demo: naive deviance " << format_number(demo.naive_deviance) << ", deconvolution deviance "
        << format_number(demo.proper_deviance) << ", ratio " << format_number(demo.deviance_ratio) << "\n";
  }

  if (config.step_variant) {
    if (!anchor) throw InputError("step variant needs anchor '" + config.dilate_anchor + "'");
    const StepVariantResult sv = renewal_step_variant(series, ens.mean_dist, mo, *anchor);
    rep << "renewal step variant: R on the eve of " << config.dilate_anchor << " " << format_number(sv.r_eve)
        << ", log R step " << format_number(sv.step)
        << (sv.boundary_artefact ? ", boundary artefact in the first or last week" : "") << "\n";
  }

  if (config.plots) {
    std::vector<double> markers;
    for (const auto& [name, date] : series.anchors) markers.push_back(figure_day(date));
    render_plots(dir, markers);
  }

  out.report = rep.str();
  {
    std::ofstream f(dir / "fit_report.txt", std::ios::binary);
    if (!f) throw InputError("cannot write " + (dir / "fit_report.txt").string());
    f << out.report;
  }
  out.files.push_back(dir / "fit_report.txt");
  return out;
}

}  // namespace backcalc
