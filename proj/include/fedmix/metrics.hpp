#pragma once

#include "fedmix/model.hpp"

#include <optional>

namespace fedmix {

/// Largest per-component distance between est and truth.
///   aligned:          max_k ||est_k - truth_k||
///   best_permutation: min over relabelings pi of max_k ||est_pi(k) - truth_k||
/// best_permutation enumerates all K! relabelings and requires K <= 8.
[[nodiscard]] double max_param_error(const MixtureParams &est, const MixtureParams &truth,
                                     MatchingPolicy policy = MatchingPolicy::aligned);

/// The iteration at which the stopping rule fired; absent for a run that
/// exhausted max_iters.
[[nodiscard]] std::optional<int> iterations_to_converge(const EMTrace &trace);

}  // namespace fedmix
