#include "fedmix/harness.hpp"

#include "fedmix/datagen.hpp"
#include "fedmix/em.hpp"
#include "fedmix/metrics.hpp"
#include "fedmix/parallel.hpp"
#include "fedmix/rng.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace fedmix {
namespace {

Vector constant(std::size_t d, double c) { return Vector::Constant(static_cast<Eigen::Index>(d), c); }

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

PresetVariant variant(std::vector<Vector> thetas, std::size_t n) { return {MixtureParams(std::move(thetas), 1.0), n}; }

double round2(double x) { return std::round(x * 100.0) / 100.0; }

// Every variant's diagnostic must round (2 decimals) to one of the quoted values.
void expect_values(const Preset &p, const std::vector<double> &got, const std::vector<double> &want,
                   const char *what) {
  for (double g : got) {
    if (std::find(want.begin(), want.end(), round2(g)) == want.end())
      throw ValidationError(p.name, std::string(what) + " " + std::to_string(g) + " is not one of the documented values");
  }
}

struct Moments {
  double mean = 0.0;
  double std = 0.0;
};

// Sample standard deviation; zero for a single value.
Moments moments(const std::vector<double> &xs) {
  Moments out;
  if (xs.empty()) return out;
  out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

}  // namespace

const std::vector<std::string> &preset_names() {
  static const std::vector<std::string> names{"fig2a", "fig2b", "fig3", "fig4", "fig5", "fig6"};
  return names;
}

Preset make_preset(const std::string &name) {
  Preset p;
  p.name = name;
  if (name == "fig2a" || name == "fig2b") {
    p.variants.push_back(variant({constant(5, 3.0), constant(5, 0.0), constant(5, -3.0)},
                                 name == "fig2a" ? 5 : 100));
  } else if (name == "fig3") {
    p.variants.push_back(variant({vec2(10, 10), vec2(-10, -10)}, 5));
    p.variants.push_back(variant({vec2(-14, 14), vec2(14, 14), vec2(-14, -14), vec2(14, -14)}, 5));
    p.variants.push_back(variant({vec2(-14, 24), vec2(14, 24), vec2(28, 0), vec2(14, -24),
                                  vec2(-14, -24), vec2(-28, 0)}, 5));
    p.variants.push_back(variant({vec2(-14, 34), vec2(14, 34), vec2(34, 14), vec2(34, -14),
                                  vec2(14, -34), vec2(-14, -34), vec2(-34, -14), vec2(-34, 14)}, 5));
  } else if (name == "fig4") {
    constexpr std::pair<std::size_t, double> kDims[] = {{2, 10.0}, {4, 7.0}, {6, 6.0}, {8, 5.0}};
    for (auto [dim, c] : kDims) {
      p.variants.push_back(variant({constant(dim, c), constant(dim, -c)}, 5));
    }
  } else if (name == "fig5") {
    for (double c : {0.5, 1.0, 4.0, 8.0})
      p.variants.push_back(variant({constant(3, c), constant(3, -c), constant(3, 0.0)}, 3));
  } else if (name == "fig6") {
    for (double c : {10.0, 30.0, 60.0, 120.0})
      p.variants.push_back(variant({constant(3, 1.0), constant(3, -1.0), constant(3, c)}, 5));
  } else {
    std::string valid;
    for (const auto &n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ValidationError("preset", "unknown preset '" + name + "'; valid presets: " + valid);
  }
  check_preset(p);
  return p;
}

void check_preset(const Preset &p) {
  if (p.variants.empty()) throw ValidationError(p.name, "no variants");
  if (p.reps < 1) throw ValidationError("reps", "must be >= 1");
  if (!(p.alpha > 0.0 && p.alpha <= 0.25)) throw ValidationError("alpha", "must lie in (0, 1/4]");
  if (p.m_grid.empty()) throw ValidationError("m_grid", "empty grid");
  for (auto m : p.m_grid)
    if (m < 1) throw ValidationError("m_grid", "grid values must be >= 1");
  for (const auto &v : p.variants) {
    if (v.n < 1) throw ValidationError("n", "must be >= 1");
    if (v.truth.K() < 2) throw ValidationError("thetas", "presets need K >= 2");
  }

  std::vector<double> snrs, dmax;
  for (const auto &v : p.variants) {
    snrs.push_back(snr(v.truth));
    dmax.push_back(separations(v.truth).delta_max);
  }
  if (p.name == "fig3" || p.name == "fig4") {
    for (double s : snrs)
      if (std::abs(s - 28.0) > 1.5) throw ValidationError(p.name, "SNR " + std::to_string(s) + " is not close to 28");
  } else if (p.name == "fig5") {
    expect_values(p, snrs, {0.87, 1.73, 6.93, 13.86}, "SNR");
  } else if (p.name == "fig6") {
    expect_values(p, dmax, {19.05, 53.69, 105.66, 209.58}, "delta_max");
  }
}

std::uint64_t replication_seed(std::uint64_t base, std::uint64_t rep_index) {
  return rng::derive_seed(base, rep_index);
}

ReplicationResult run_replication(const MixtureParams &truth, std::size_t m, std::size_t n,
                                  double alpha, const EMConfig &cfg, std::uint64_t rep_index) {
  const auto seed = replication_seed(cfg.seed, rep_index);
  const auto data = sample_dataset({truth, m, n, rng::derive_seed(seed, 0)});
  const auto init = init_within_ball(truth, alpha, rng::derive_seed(seed, 1));
  try {
    const auto trace = fit(data, init, cfg, truth);
    return {trace.max_errors->back(), iterations_to_converge(trace)};
  } catch (const SingularDesign &e) {
    throw SingularDesign(e.component(), std::string(e.what()) + " [rep " + std::to_string(rep_index) +
                                            ", m " + std::to_string(m) + ", n " + std::to_string(n) + "]");
  }
}

std::vector<SweepRecord> sweep(const Preset &preset, const EMConfig &cfg, unsigned threads) {
  check_preset(preset);
  cfg.validate();
  std::vector<std::size_t> grid = preset.m_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  const auto reps = static_cast<std::size_t>(preset.reps);
  const auto points = preset.variants.size() * grid.size();
  std::vector<std::optional<ReplicationResult>> results(points * reps);

  parallel_for(results.size(), threads, [&](std::size_t task) {
    const auto point = task / reps;
    const auto rep = task % reps;
    const auto &v = preset.variants[point / grid.size()];
    try {
      results[task] = run_replication(v.truth, grid[point % grid.size()], v.n, preset.alpha, cfg, rep);
    } catch (const SingularDesign &) {
    } catch (const NumericalError &) {
    }
  });

  std::vector<SweepRecord> records;
  records.reserve(points);
  for (std::size_t point = 0; point < points; ++point) {
    const auto &v = preset.variants[point / grid.size()];
    const auto sep = separations(v.truth);
    SweepRecord r;
    r.preset = preset.name;
    r.point = {grid[point % grid.size()], v.n, v.truth.K(), v.truth.dim(), sep.delta_min / v.truth.sigma(),
               sep.delta_max};
    r.sigma = v.truth.sigma();
    r.delta_min = sep.delta_min;
    r.alpha = preset.alpha;
    r.reps = preset.reps;
    r.seed = cfg.seed;

    std::vector<double> errors, iters;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      const auto &res = results[point * reps + rep];
      if (!res) {
        ++r.failures;
        continue;
      }
      errors.push_back(res->max_error);
      if (res->iters) {
        iters.push_back(*res->iters);
      } else {
        ++r.censored;
        iters.push_back(cfg.max_iters);
      }
    }
    r.valid = r.failures * 10 <= r.reps;
    const auto e = moments(errors);
    const auto it = moments(iters);
    r.mean_max_error = e.mean;
    r.std_max_error = e.std;
    r.mean_iters = it.mean;
    r.std_iters = it.std;
    records.push_back(std::move(r));
  }
  return records;
}

void write_sweep_csv(std::ostream &out, const std::vector<SweepRecord> &records) {
  out << "preset,m,n,K,d,sigma,snr,delta_min,delta_max,alpha,reps,censored,"
         "mean_max_error,std_max_error,mean_iters,std_iters,seed\n";
  char buf[512];
  for (const auto &r : records) {
    std::snprintf(buf, sizeof buf,
                  "%s,%zu,%zu,%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d,%.17g,%.17g,%.17g,%.17g,%" PRIu64 "\n",
                  r.preset.c_str(), r.point.m, r.point.n, r.point.K, r.point.d, r.sigma, r.point.snr,
                  r.delta_min, r.point.delta_max, r.alpha, r.reps, r.censored, r.mean_max_error,
                  r.std_max_error, r.mean_iters, r.std_iters, r.seed);
    out << buf;
  }
}

}  // namespace fedmix
