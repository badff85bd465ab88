#pragma once

// Federated EM for a mixture of K linear regressions with a per-client latent
// label. Mixing weights are fixed at 1/K and sigma is known.

#include "fedmix/model.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace fedmix {

/// The M-step system for one component is not numerically positive definite.
class SingularDesign : public std::runtime_error {
public:
  SingularDesign(std::size_t component, const std::string &what)
      : std::runtime_error(what), component_(component) {}

  /// 0-based component index.
  [[nodiscard]] std::size_t component() const noexcept { return component_; }

private:
  std::size_t component_;
};

/// fit hit a non-finite log-likelihood; carries the trace up to that point.
class FitAborted : public NumericalError {
public:
  FitAborted(const std::string &what, EMTrace partial)
      : NumericalError(what), partial_(std::move(partial)) {}

  [[nodiscard]] const EMTrace &partial() const noexcept { return partial_; }

private:
  EMTrace partial_;
};

/// m x K posterior weights; each row is a probability vector.
class Responsibilities {
public:
  explicit Responsibilities(Matrix w);

  [[nodiscard]] const Matrix &weights() const noexcept { return w_; }
  [[nodiscard]] double operator()(std::size_t j, std::size_t k) const { return w_(j, k); }
  [[nodiscard]] std::size_t num_clients() const noexcept { return static_cast<std::size_t>(w_.rows()); }
  [[nodiscard]] std::size_t K() const noexcept { return static_cast<std::size_t>(w_.cols()); }

private:
  Matrix w_;
};

/// S[j][k] = sum_i (y_i^j - <x_i^j, theta_k>)^2.
[[nodiscard]] Matrix residual_sums(const FederatedDataset &data, const MixtureParams &params);

/// Stable softmax of -S/(2 sigma^2) for one row of residual sums.
[[nodiscard]] Vector client_posterior(const Vector &residual_row, double sigma);

[[nodiscard]] Responsibilities e_step(const FederatedDataset &data, const MixtureParams &params);

/// Solves the K weighted normal equations
///   (sum_j w_jk X_j^T X_j) theta_k = sum_j w_jk X_j^T y_j
/// by Cholesky. Throws SingularDesign when the smallest pivot falls below
/// solver_tol * trace / d. sigma is carried through unchanged.
[[nodiscard]] MixtureParams m_step(const FederatedDataset &data, const Responsibilities &resp,
                                   double sigma, double solver_tol = 1e-12, unsigned threads = 1);

/// Average per-client log marginal likelihood with uniform mixing weights:
///   (1/m) sum_j [ log((1/K) sum_k exp(-S_jk / (2 sigma^2))) - (n_j/2) log(2 pi sigma^2) ].
/// The covariate density does not depend on theta and is left out.
[[nodiscard]] double log_likelihood(const FederatedDataset &data, const MixtureParams &params);

/// theta_k = truth_k + r u with u uniform on the sphere and r uniform in the
/// ball of radius alpha * delta_min. alpha must lie in (0, 1/4].
[[nodiscard]] MixtureParams init_within_ball(const MixtureParams &truth, double alpha,
                                             std::uint64_t seed);

/// Runs EM from init until max_k ||theta^{t+1} - theta^t|| <= cfg.param_tol or
/// cfg.max_iters M-steps. With truth, also records the max parameter error of
/// every iterate under cfg.matching.
[[nodiscard]] EMTrace fit(const FederatedDataset &data, const MixtureParams &init,
                          const EMConfig &cfg,
                          const std::optional<MixtureParams> &truth = std::nullopt,
                          unsigned threads = 1);

/// One population-EM update approximated with mc_clients fresh clients of n
/// samples each drawn from truth. Equal to m_step(e_step(.)) on
/// sample_dataset({truth, mc_clients, n, seed}), without storing the dataset.
[[nodiscard]] MixtureParams population_em_step_mc(const MixtureParams &current,
                                                  const MixtureParams &truth, std::size_t n,
                                                  std::size_t mc_clients, std::uint64_t seed,
                                                  double solver_tol = 1e-12, unsigned threads = 1);

}  // namespace fedmix
