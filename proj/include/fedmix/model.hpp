#pragma once

// Domain types shared by the data generator, the EM core, the metrics and the
// experiment harness. Everything here is an immutable value once constructed.

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedmix {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Invariant violation on construction. field() names the offending field.
class ValidationError : public std::invalid_argument {
public:
  ValidationError(std::string field, const std::string &what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}

  [[nodiscard]] const std::string &field() const noexcept { return field_; }

private:
  std::string field_;
};

/// Non-finite or otherwise unusable numbers encountered mid-computation.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// K regression coefficient vectors of common dimension d plus the noise
/// standard deviation sigma.
class MixtureParams {
public:
  MixtureParams(std::vector<Vector> thetas, double sigma);

  [[nodiscard]] const std::vector<Vector> &thetas() const noexcept { return thetas_; }
  [[nodiscard]] const Vector &theta(std::size_t k) const { return thetas_.at(k); }
  [[nodiscard]] double sigma() const noexcept { return sigma_; }
  [[nodiscard]] std::size_t K() const noexcept { return thetas_.size(); }
  [[nodiscard]] std::size_t dim() const noexcept { return static_cast<std::size_t>(thetas_.front().size()); }

  /// Same sigma, new coefficient vectors (re-validated).
  [[nodiscard]] MixtureParams with_thetas(std::vector<Vector> thetas) const {
    return {std::move(thetas), sigma_};
  }

  friend bool operator==(const MixtureParams &a, const MixtureParams &b);

private:
  std::vector<Vector> thetas_;
  double sigma_;
};

/// One client's private sample. Rows of xs are the covariate vectors x_i.
/// label is the 0-based latent component; absent for unlabeled data.
class ClientBatch {
public:
  ClientBatch(std::optional<int> label, Matrix xs, Vector ys);

  [[nodiscard]] const std::optional<int> &label() const noexcept { return label_; }
  [[nodiscard]] const Matrix &xs() const noexcept { return xs_; }
  [[nodiscard]] const Vector &ys() const noexcept { return ys_; }
  [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(ys_.size()); }
  [[nodiscard]] std::size_t dim() const noexcept { return static_cast<std::size_t>(xs_.cols()); }

private:
  std::optional<int> label_;
  Matrix xs_;
  Vector ys_;
};

class FederatedDataset {
public:
  /// K, when given, bounds the labels: every present label must lie in [0, K).
  FederatedDataset(std::vector<ClientBatch> clients, std::size_t dim,
                   std::optional<std::size_t> K = std::nullopt);

  [[nodiscard]] const std::vector<ClientBatch> &clients() const noexcept { return clients_; }
  [[nodiscard]] const ClientBatch &client(std::size_t j) const { return clients_.at(j); }
  [[nodiscard]] std::size_t num_clients() const noexcept { return clients_.size(); }
  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] bool labeled() const noexcept;

private:
  std::vector<ClientBatch> clients_;
  std::size_t dim_;
};

enum class MatchingPolicy { aligned, best_permutation };

[[nodiscard]] std::string to_string(MatchingPolicy p);
[[nodiscard]] MatchingPolicy parse_matching(const std::string &s);

struct EMConfig {
  int max_iters = 200;
  double param_tol = 1e-6;
  double solver_tol = 1e-12;
  std::uint64_t seed = 0;
  MatchingPolicy matching = MatchingPolicy::aligned;

  /// Throws ValidationError naming the first bad field.
  void validate() const;
};

struct EMTrace {
  std::vector<MixtureParams> iterates;  // [0] is the initialization
  std::vector<double> loglik;           // one per iterate
  std::optional<int> converged_at;
  std::optional<std::vector<double>> max_errors;
};

struct GridPoint {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t K = 0;
  std::size_t d = 0;
  double snr = 0.0;
  double delta_max = 0.0;
};

struct SweepRecord {
  std::string preset;
  GridPoint point;
  double sigma = 1.0;
  double delta_min = 0.0;
  double alpha = 0.2;
  int reps = 1;
  int censored = 0;
  int failures = 0;
  bool valid = true;
  double mean_max_error = 0.0;
  double std_max_error = 0.0;
  double mean_iters = 0.0;
  double std_iters = 0.0;
  std::uint64_t seed = 0;
};

}  // namespace fedmix
