#include "fedmix/model.hpp"

#include <algorithm>
#include <cmath>

namespace fedmix {

MixtureParams::MixtureParams(std::vector<Vector> thetas, double sigma)
    : thetas_(std::move(thetas)), sigma_(sigma) {
  if (thetas_.empty()) throw ValidationError("thetas", "need at least one component");
  const auto d = thetas_.front().size();
  if (d < 1) throw ValidationError("thetas", "dimension must be >= 1");
  for (const auto &t : thetas_) {
    if (t.size() != d) throw ValidationError("thetas", "components have differing dimensions");
    if (!t.allFinite()) throw ValidationError("thetas", "non-finite coefficient");
  }
  if (!(sigma_ > 0.0) || !std::isfinite(sigma_))
    throw ValidationError("sigma", "must be positive and finite");
}

bool operator==(const MixtureParams &a, const MixtureParams &b) {
  if (a.sigma_ != b.sigma_ || a.K() != b.K()) return false;
  for (std::size_t k = 0; k < a.K(); ++k) {
    if (a.thetas_[k].size() != b.thetas_[k].size() || a.thetas_[k] != b.thetas_[k]) return false;
  }
  return true;
}

ClientBatch::ClientBatch(std::optional<int> label, Matrix xs, Vector ys)
    : label_(label), xs_(std::move(xs)), ys_(std::move(ys)) {
  if (ys_.size() < 1) throw ValidationError("ys", "client needs at least one sample");
  if (xs_.rows() != ys_.size()) throw ValidationError("xs", "row count differs from len(ys)");
  if (xs_.cols() < 1) throw ValidationError("xs", "dimension must be >= 1");
  if (label_ && *label_ < 0) throw ValidationError("z", "label must be non-negative");
}

FederatedDataset::FederatedDataset(std::vector<ClientBatch> clients, std::size_t dim,
                                   std::optional<std::size_t> K)
    : clients_(std::move(clients)), dim_(dim) {
  if (clients_.empty()) throw ValidationError("clients", "need at least one client");
  if (dim_ < 1) throw ValidationError("d", "dimension must be >= 1");
  for (const auto &c : clients_) {
    if (c.dim() != dim_) throw ValidationError("xs", "client dimension differs from dataset d");
    if (K && c.label() && static_cast<std::size_t>(*c.label()) >= *K)
      throw ValidationError("z", "label outside [1, K]");
  }
}

bool FederatedDataset::labeled() const noexcept {
  return std::all_of(clients_.begin(), clients_.end(),
                     [](const ClientBatch &c) { return c.label().has_value(); });
}

std::string to_string(MatchingPolicy p) {
  return p == MatchingPolicy::aligned ? "aligned" : "best_permutation";
}

MatchingPolicy parse_matching(const std::string &s) {
  if (s == "aligned") return MatchingPolicy::aligned;
  if (s == "best_permutation") return MatchingPolicy::best_permutation;
  throw ValidationError("matching", "expected 'aligned' or 'best_permutation', got '" + s + "'");
}

void EMConfig::validate() const {
  if (max_iters < 1) throw ValidationError("max_iters", "must be >= 1");
  if (!(param_tol > 0.0)) throw ValidationError("param_tol", "must be > 0");
  if (!(solver_tol > 0.0)) throw ValidationError("solver_tol", "must be > 0");
}

}  // namespace fedmix
