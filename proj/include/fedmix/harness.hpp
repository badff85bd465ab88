#pragma once

// Replication engine and the synthetic experiment presets (effect of n, K, d,
// SNR and maximum separation on error and iteration count as m grows).

#include "fedmix/model.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace fedmix {

struct PresetVariant {
  MixtureParams truth;
  std::size_t n;
};

struct Preset {
  std::string name;
  std::vector<PresetVariant> variants;
  int reps = 100;
  double alpha = 0.2;
  std::vector<std::size_t> m_grid{25, 50, 100, 200, 400, 800, 1600};
};

/// fig2a fig2b fig3 fig4 fig5 fig6
[[nodiscard]] const std::vector<std::string> &preset_names();

/// Builds a named preset and runs check_preset on it. Throws ValidationError
/// for an unknown name.
[[nodiscard]] Preset make_preset(const std::string &name);

/// Verifies the separation diagnostics each built-in preset is meant to have:
/// fig3/fig4 SNR near 28, fig5 SNR in {0.87, 1.73, 6.93, 13.86}, fig6
/// delta_max in {19.05, 53.69, 105.66, 209.58}. A subset of the variants is
/// accepted. Other names only get the structural checks.
void check_preset(const Preset &preset);

/// Replication seed for rep_index under base; datasets and initializations
/// derive from it with distinct tags.
[[nodiscard]] std::uint64_t replication_seed(std::uint64_t base, std::uint64_t rep_index);

struct ReplicationResult {
  double max_error;
  std::optional<int> iters;
};

/// Generates a dataset, draws a ball initialization, runs EM and reports the
/// final max error (under cfg.matching) with the iteration count. A
/// SingularDesign is rethrown with rep_index, m and n in its message.
[[nodiscard]] ReplicationResult run_replication(const MixtureParams &truth, std::size_t m,
                                                std::size_t n, double alpha, const EMConfig &cfg,
                                                std::uint64_t rep_index);

/// Runs preset.reps replications at every (variant, m) point. Censored runs
/// count as cfg.max_iters iterations. A point where more than 10% of the
/// replications failed comes back with valid = false.
[[nodiscard]] std::vector<SweepRecord> sweep(const Preset &preset, const EMConfig &cfg,
                                             unsigned threads = 1);

/// Header plus one row per record, floats with 17 significant digits.
void write_sweep_csv(std::ostream &out, const std::vector<SweepRecord> &records);

}  // namespace fedmix
