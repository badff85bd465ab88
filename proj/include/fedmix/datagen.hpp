#pragma once

// Synthetic federated mixture-of-regressions data and the separation
// diagnostics of a set of true centers.

#include "fedmix/model.hpp"

#include <cstdint>
#include <utility>

namespace fedmix {

struct GenSpec {
  MixtureParams truth;
  std::size_t m = 1;
  std::size_t n = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Client j of the dataset described by spec. The label is drawn uniformly
/// over the K components, covariates are N(0, I_d), noise is N(0, sigma^2)
/// and y = <x, theta_label> + noise. Depends only on (spec.seed, j).
[[nodiscard]] ClientBatch sample_client(const GenSpec &spec, std::size_t j);

/// All m clients; bit-identical for equal specs.
[[nodiscard]] FederatedDataset sample_dataset(const GenSpec &spec);

struct Separations {
  double delta_min;
  double delta_max;
};

/// Minimum and maximum pairwise Euclidean distance between centers. K >= 2.
[[nodiscard]] Separations separations(const MixtureParams &truth);

/// delta_min / sigma.
[[nodiscard]] double snr(const MixtureParams &truth);

}  // namespace fedmix
