#include "fedmix/cli.hpp"

#include "fedmix/datagen.hpp"
#include "fedmix/em.hpp"
#include "fedmix/harness.hpp"
#include "fedmix/io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <ostream>
#include <sstream>
#include <thread>

namespace fedmix::cli {
namespace {

struct Options {
  std::string config;
  std::string data;
  std::string out;
  std::string preset;
  std::optional<int> reps;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::size_t> n;
  std::string m_grid;
  std::optional<double> alpha;
  std::optional<std::string> matching;
};

unsigned resolve_threads(const std::optional<unsigned> &flag) {
  if (flag) return std::max(1u, *flag);
  if (const char *env = std::getenv("FEDMIX_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (const std::exception &) {
    }
    throw ValidationError("FEDMIX_THREADS", "expected a positive integer");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<std::size_t> parse_grid(const std::string &text) {
  std::vector<std::size_t> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (used != item.size() || used == 0 || v < 1) throw ValidationError("m-grid", "bad entry '" + item + "'");
    grid.push_back(static_cast<std::size_t>(v));
  }
  if (grid.empty()) throw ValidationError("m-grid", "empty list");
  return grid;
}

void print_diagnostics(const MixtureParams &truth, std::ostream &err) {
  if (truth.K() < 2) {
    err << "K = 1: separations undefined\n";
    return;
  }
  const auto sep = separations(truth);
  char buf[160];
  std::snprintf(buf, sizeof buf, "K=%zu d=%zu sigma=%.6g delta_min=%.6g delta_max=%.6g snr=%.6g\n", truth.K(),
                truth.dim(), truth.sigma(), sep.delta_min, sep.delta_max, sep.delta_min / truth.sigma());
  err << buf;
}

const MixtureParams &require_truth(const io::RunConfig &cfg) {
  if (!cfg.truth) throw ValidationError("thetas", "config must provide thetas and sigma");
  return *cfg.truth;
}

int cmd_gen(const Options &opt, std::ostream &err) {
  const auto cfg = io::load_config(opt.config);
  const auto &truth = require_truth(cfg);
  if (!cfg.m) throw ValidationError("m", "missing");
  if (!cfg.n) throw ValidationError("n", "missing");
  const GenSpec spec{truth, *cfg.m, *cfg.n, cfg.em.seed};
  const auto data = sample_dataset(spec);
  print_diagnostics(truth, err);
  io::save_dataset(opt.out, data, {spec.m, spec.n, truth.dim(), truth.K(), truth.sigma(), spec.seed});
  return kOk;
}

int cmd_fit(const Options &opt, std::ostream &err) {
  const auto loaded = io::load_dataset(opt.data);
  const auto cfg = io::load_config(opt.config);
  const auto &truth = require_truth(cfg);

  std::optional<MixtureParams> init;
  if (cfg.init) {
    init.emplace(*cfg.init, truth.sigma());
  } else if (cfg.alpha) {
    init.emplace(init_within_ball(truth, *cfg.alpha, cfg.em.seed));
  } else {
    init.emplace(truth);
  }
  if (init->K() != truth.K()) throw ValidationError("init", "component count differs from thetas");

  std::optional<MixtureParams> reference;
  if (loaded.data.labeled()) reference = truth;
  const auto trace = fit(loaded.data, *init, cfg.em, reference, resolve_threads(opt.threads));
  err << "iterations=" << trace.iterates.size() - 1 << " converged_at="
      << (trace.converged_at ? std::to_string(*trace.converged_at) : "none") << '\n';
  io::write_file(opt.out, io::trace_to_json(trace).dump(2) + "\n");
  return kOk;
}

int cmd_sweep(const Options &opt, std::ostream &out, std::ostream &err) {
  Preset preset;
  EMConfig em;
  if (!opt.preset.empty() && !opt.config.empty()) throw ValidationError("preset", "give --preset or --config, not both");
  if (!opt.preset.empty()) {
    preset = make_preset(opt.preset);
  } else if (!opt.config.empty()) {
    const auto cfg = io::load_config(opt.config);
    em = cfg.em;
    preset.name = "custom";
    preset.variants.push_back({require_truth(cfg), cfg.n.value_or(5)});
    if (cfg.m) preset.m_grid = {*cfg.m};
    if (cfg.alpha) preset.alpha = *cfg.alpha;
  } else {
    throw ValidationError("preset", "one of --preset or --config is required");
  }
  if (opt.reps) preset.reps = *opt.reps;
  if (opt.seed) em.seed = *opt.seed;
  if (opt.alpha) preset.alpha = *opt.alpha;
  if (opt.matching) em.matching = parse_matching(*opt.matching);
  if (opt.n)
    for (auto &v : preset.variants) v.n = *opt.n;
  if (!opt.m_grid.empty()) preset.m_grid = parse_grid(opt.m_grid);
  check_preset(preset);

  const auto threads = resolve_threads(opt.threads);
  err << "preset=" << preset.name << " reps=" << preset.reps << " seed=" << em.seed << " threads=" << threads
      << " m_grid=";
  for (std::size_t i = 0; i < preset.m_grid.size(); ++i) err << (i ? "," : "") << preset.m_grid[i];
  err << '\n';

  const auto records = sweep(preset, em, threads);
  std::ostringstream csv;
  write_sweep_csv(csv, records);
  io::write_file(opt.out, csv.str());

  char buf[320];
  for (const auto &r : records) {
    std::snprintf(buf, sizeof buf,
                  "point preset=%s m=%zu n=%zu K=%zu d=%zu snr=%.6g delta_max=%.6g mean_max_error=%.6g "
                  "mean_iters=%.6g censored=%d failures=%d valid=%d\n",
                  r.preset.c_str(), r.point.m, r.point.n, r.point.K, r.point.d, r.point.snr, r.point.delta_max,
                  r.mean_max_error, r.mean_iters, r.censored, r.failures, r.valid ? 1 : 0);
    out << buf;
    if (!r.valid) err << "warning: m=" << r.point.m << " has " << r.failures << " failed replications\n";
  }
  return kOk;
}

}  // namespace

int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
  CLI::App app{"Federated mixture of linear regressions: data generation, EM fitting, experiment sweeps"};
  app.require_subcommand(1);
  Options opt;

  auto *gen = app.add_subcommand("gen", "Sample a synthetic federated dataset (JSON lines)");
  gen->add_option("--config", opt.config, "Run config JSON")->required();
  gen->add_option("--out", opt.out, "Output dataset path")->required();

  auto *fitc = app.add_subcommand("fit", "Run EM on a dataset and write the trace as JSON");
  fitc->add_option("--data", opt.data, "Dataset path")->required();
  fitc->add_option("--config", opt.config, "Run config JSON")->required();
  fitc->add_option("--out", opt.out, "Output trace path")->required();
  fitc->add_option("--threads", opt.threads, "Worker threads");

  auto *sw = app.add_subcommand("sweep", "Replicate EM over a grid of client counts and write CSV");
  sw->add_option("--preset", opt.preset, "fig2a, fig2b, fig3, fig4, fig5 or fig6");
  sw->add_option("--config", opt.config, "Run config JSON (instead of --preset)");
  sw->add_option("--reps", opt.reps, "Replications per grid point")->check(CLI::PositiveNumber);
  sw->add_option("--seed", opt.seed, "Base seed");
  sw->add_option("--out", opt.out, "Output CSV path")->required();
  sw->add_option("--threads", opt.threads, "Worker threads (default: FEDMIX_THREADS or all cores)");
  sw->add_option("--n", opt.n, "Samples per client, overriding the preset")->check(CLI::PositiveNumber);
  sw->add_option("--m-grid", opt.m_grid, "Comma-separated client counts");
  sw->add_option("--alpha", opt.alpha, "Initialization radius as a fraction of delta_min");
  sw->add_option("--matching", opt.matching, "aligned or best_permutation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError &e) {
    err << e.what() << '\n';
    return kValidation;
  }

  try {
    if (*gen) return cmd_gen(opt, err);
    if (*fitc) return cmd_fit(opt, err);
    return cmd_sweep(opt, out, err);
  } catch (const ValidationError &e) {
    err << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const io::IoError &e) {
    err << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const SingularDesign &e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const NumericalError &e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumerical;
  }
}

}  // namespace fedmix::cli
