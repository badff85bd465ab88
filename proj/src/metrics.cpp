#include "fedmix/metrics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

namespace fedmix {

double max_param_error(const MixtureParams &est, const MixtureParams &truth, MatchingPolicy policy) {
  if (est.K() != truth.K()) throw ValidationError("thetas", "component counts differ");
  if (est.dim() != truth.dim()) throw ValidationError("thetas", "dimensions differ");
  const auto K = est.K();

  if (policy == MatchingPolicy::aligned) {
    double worst = 0.0;
    for (std::size_t k = 0; k < K; ++k) worst = std::max(worst, (est.theta(k) - truth.theta(k)).norm());
    return worst;
  }

  if (K > 8) throw ValidationError("matching", "best_permutation supports K <= 8");
  // dist(a, b) = ||est_a - truth_b||
  Matrix dist(K, K);
  for (std::size_t a = 0; a < K; ++a)
    for (std::size_t b = 0; b < K; ++b) dist(a, b) = (est.theta(a) - truth.theta(b)).norm();

  std::vector<std::size_t> perm(K);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double worst = 0.0;
    for (std::size_t k = 0; k < K && worst < best; ++k) worst = std::max(worst, dist(perm[k], k));
    best = std::min(best, worst);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::optional<int> iterations_to_converge(const EMTrace &trace) { return trace.converged_at; }

}  // namespace fedmix
