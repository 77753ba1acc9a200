#include "backcalc/pipeline.hpp"
#include "backcalc/svg.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace backcalc;

namespace {

struct Common {
  std::string config;
  std::string input;
  std::string model;
  std::string durations;
  std::string output;
  std::vector<std::string> anchors;
  std::vector<std::string> settings;
  std::optional<std::uint64_t> seed;
  std::optional<int> ensemble;
  std::optional<int> samples;
  std::optional<unsigned> threads;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "key = value configuration file")->check(CLI::ExistingFile);
  app->add_option("-i,--input", c.input, "date,deaths CSV (default: bundled sample)");
  app->add_option("--model", c.model, "basic | incidence | renewal");
  app->add_option("--durations", c.durations, "meta | chess | isaric | file");
  app->add_option("-o,--output", c.output, "output directory");
  app->add_option("--anchor", c.anchors, "named date, name=YYYY-MM-DD (repeatable)");
  app->add_option("--set", c.settings, "any configuration key=value (repeatable)");
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--ensemble", c.ensemble, "number of duration draws");
  app->add_option("--samples", c.samples, "posterior samples per duration draw");
  app->add_option("--threads", c.threads, "worker threads (0: all cores)");
}

// File settings first, then flags, then the environment.
RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  for (const auto& s : c.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw InputError("--set expects key=value, got '" + s + "'");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (!c.input.empty()) cfg.input = c.input;
  if (!c.model.empty()) apply_setting(cfg, "model", c.model);
  if (!c.durations.empty()) apply_setting(cfg, "durations", c.durations);
  if (!c.output.empty()) cfg.output_dir = c.output;
  for (const auto& a : c.anchors) apply_setting(cfg, "anchor", a);
  if (c.seed) cfg.seed = *c.seed;
  if (c.ensemble) apply_setting(cfg, "ensemble", std::to_string(*c.ensemble));
  if (c.samples) apply_setting(cfg, "samples", std::to_string(*c.samples));
  if (c.threads) cfg.threads = *c.threads;
  apply_environment(cfg);
  return cfg;
}

int run(const RunConfig& cfg) {
  const RunSummary s = run_pipeline(cfg);
  std::cout << s.report;
  for (const auto& f : s.files) std::cout << "wrote " << f.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fatal incidence back-calculation from daily deaths"};
  app.require_subcommand(1);

  Common fit_opts;
  auto* fit = app.add_subcommand("fit", "fit a model and write incidence, R, peak and sanity outputs");
  add_common(fit, fit_opts);

  Common r_opts;
  std::string r_from;
  auto* r = app.add_subcommand("r", "reproduction number from fatal incidence via the SEIR model");
  add_common(r, r_opts);
  r->add_option("--from", r_from, "an incidence.csv written by fit (skip refitting)")->check(CLI::ExistingFile);

  auto* check = app.add_subcommand("check", "model checks");
  check->require_subcommand(1);
  Common check_opts;
  std::map<std::string, CLI::App*> checks;
  for (const char* name : {"dilate", "sanity", "imputation", "ifr"}) {
    checks[name] = check->add_subcommand(name);
    add_common(checks[name], check_opts);
  }
  checks["dilate"]->description("refit on a time axis dilated around the anchor");
  checks["sanity"]->description("simulate deaths forward from the median fatal incidence");
  checks["imputation"]->description("naive duration-subtraction imputation against deconvolution");
  checks["ifr"]->description("refit after correcting for a falling fatality rate");

  auto* pcr = app.add_subcommand("pcr", "randomized PCR surveillance");
  pcr->require_subcommand(1);
  PcrModel pm;
  int days = 100;
  std::uint64_t pcr_seed = 1;
  std::string pcr_out = "pcr.csv", pcr_in, pcr_dir = "pcr_out";
  auto* pcr_sim = pcr->add_subcommand("simulate", "simulate daily positives from the reference incidence");
  auto* pcr_fit = pcr->add_subcommand("fit", "reconstruct incidence from daily positives");
  for (auto* sc : {pcr_sim, pcr_fit}) {
    sc->add_option("--tests", pm.tests_per_day, "tests per day");
    sc->add_option("--clearance", pm.clearance, "1 / mean days of positivity");
    sc->add_option("--sensitivity", pm.sensitivity, "test sensitivity");
  }
  pcr_sim->add_option("--days", days, "horizon");
  pcr_sim->add_option("--seed", pcr_seed, "random seed");
  pcr_sim->add_option("-o,--output", pcr_out, "CSV to write");
  pcr_fit->add_option("-i,--input", pcr_in, "CSV with a positives column")->required()->check(CLI::ExistingFile);
  pcr_fit->add_option("-k", pm.k, "basis dimension");
  pcr_fit->add_option("-o,--output", pcr_dir, "output directory");

  auto* dur = app.add_subcommand("durations", "infection-to-death distributions");
  dur->require_subcommand(1);
  auto* dur_build = dur->add_subcommand("build", "build the duration ensemble and source summaries");
  Common dur_opts;
  add_common(dur_build, dur_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) return run(resolve(fit_opts));

    if (r->parsed()) {
      RunConfig cfg = resolve(r_opts);
      if (r_from.empty()) {
        if (cfg.model == ModelKind::basic) throw InputError("R needs the incidence or renewal model");
        cfg.sanity = false;
        return run(cfg);
      }
      const CsvTable t = read_csv(r_from);
      const Bands b = bands_from_table(t);
      const RSensitivity sens =
          r_sensitivity(b.median, cfg.infectivity_days_lo, cfg.infectivity_days_hi, cfg.infectious_days_lo,
                        cfg.infectious_days_hi, 5, cfg.seir);
      CsvTable out;
      out.add_column("day", t.text("day"));
      out.add_column("date", t.text("date"));
      out.add_column("central", sens.central);
      out.add_column("lower", sens.lower);
      out.add_column("upper", sens.upper);
      const auto dir = std::filesystem::path(cfg.output_dir);
      write_csv(dir / "r_sensitivity.csv", out);
      if (cfg.plots) render_plots(dir);
      std::cout << "wrote " << (dir / "r_sensitivity.csv").string() << "\n";
      return 0;
    }

    if (check->parsed()) {
      RunConfig cfg = resolve(check_opts);
      cfg.sanity = checks["sanity"]->parsed();
      cfg.dilate = checks["dilate"]->parsed();
      cfg.imputation_demo = checks["imputation"]->parsed();
      cfg.ifr_adjust = checks["ifr"]->parsed();
      return run(cfg);
    }

    if (pcr_sim->parsed()) {
      Rng rng = stream_rng(pcr_seed, 0);
      const PcrData data = simulate_pcr(pcr_reference_incidence(days), pm, rng);
      write_csv(pcr_out, pcr_table(data.counts, &data.truth, nullptr));
      std::cout << "wrote " << pcr_out << "\n";
      return 0;
    }

    if (pcr_fit->parsed()) {
      const CsvTable t = read_csv(pcr_in);
      const auto pos = t.numeric("positives");
      const Eigen::VectorXd counts = Eigen::Map<const Eigen::VectorXd>(pos.data(), static_cast<Eigen::Index>(pos.size()));
      std::optional<Eigen::VectorXd> truth;
      if (std::find(t.header.begin(), t.header.end(), "truth") != t.header.end()) {
        const auto tr = t.numeric("truth");
        truth = Eigen::Map<const Eigen::VectorXd>(tr.data(), static_cast<Eigen::Index>(tr.size()));
      }
      const PcrFit f = fit_pcr_incidence(counts, pm);
      const auto dir = std::filesystem::path(pcr_dir);
      write_csv(dir / "pcr_fit.csv", pcr_table(counts, truth ? &*truth : nullptr, &f));
      plot_pcr_csv(dir / "pcr_fit.csv", dir / "pcr_fit.svg");
      std::cout << "lambda " << format_number(f.lambda) << ", laplace log marginal likelihood " << format_number(f.lml)
                << (f.boundary_warning ? ", warning: all counts zero" : "") << "\n";
      std::cout << "wrote " << (dir / "pcr_fit.csv").string() << "\n";
      return 0;
    }

    if (dur_build->parsed()) {
      const RunConfig cfg = resolve(dur_opts);
      const auto dir = std::filesystem::path(cfg.output_dir);
      write_csv(dir / "durations.csv", durations_table(cfg));
      std::cout << "wrote " << (dir / "durations.csv").string() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
