#include "fedmix/em.hpp"

#include "fedmix/datagen.hpp"
#include "fedmix/metrics.hpp"
#include "fedmix/parallel.hpp"
#include "fedmix/rng.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace fedmix {
namespace {

// Clients per reduction leaf. Fixed so that the summation order, and hence
// every bit of the result, is independent of the thread count.
constexpr std::size_t kBlockSize = 64;

std::size_t block_count(std::size_t m) { return (m + kBlockSize - 1) / kBlockSize; }

Vector client_residuals(const ClientBatch &client, const MixtureParams &params) {
  Vector s(params.K());
  for (std::size_t k = 0; k < params.K(); ++k)
    s[k] = (client.ys() - client.xs() * params.theta(k)).squaredNorm();
  return s;
}

void check_dims(const FederatedDataset &data, const MixtureParams &params) {
  if (data.dim() != params.dim())
    throw ValidationError("thetas", "dimension " + std::to_string(params.dim()) +
                                        " does not match data dimension " + std::to_string(data.dim()));
}

struct NormalEquations {
  std::vector<Matrix> gram;
  std::vector<Vector> rhs;

  NormalEquations(std::size_t K, std::size_t d)
      : gram(K, Matrix::Zero(d, d)), rhs(K, Vector::Zero(d)) {}

  void add_client(const ClientBatch &client, const Vector &w) {
    const Matrix xtx = client.xs().transpose() * client.xs();
    const Vector xty = client.xs().transpose() * client.ys();
    for (std::size_t k = 0; k < gram.size(); ++k) {
      gram[k].noalias() += w[k] * xtx;
      rhs[k].noalias() += w[k] * xty;
    }
  }

  void merge(const NormalEquations &other) {
    for (std::size_t k = 0; k < gram.size(); ++k) {
      gram[k] += other.gram[k];
      rhs[k] += other.rhs[k];
    }
  }
};

std::vector<Vector> solve(const NormalEquations &ne, double solver_tol) {
  std::vector<Vector> thetas;
  thetas.reserve(ne.gram.size());
  for (std::size_t k = 0; k < ne.gram.size(); ++k) {
    const Matrix &A = ne.gram[k];
    const auto d = static_cast<double>(A.rows());
    const double scale = A.trace() / d;
    auto fail = [&](const std::string &why) {
      std::ostringstream msg;
      msg << "singular design for component " << k + 1 << ": " << why
          << " (too few samples, or a component with vanishing weight)";
      throw SingularDesign(k, msg.str());
    };
    if (!A.allFinite() || !(scale > 0.0)) fail("zero or non-finite weighted Gram matrix");
    const Eigen::LLT<Matrix> llt(A);
    if (llt.info() != Eigen::Success) fail("matrix is not positive definite");
    const double min_pivot = llt.matrixLLT().diagonal().array().square().minCoeff();
    if (min_pivot < solver_tol * scale) fail("smallest pivot below solver_tol * trace / d");
    thetas.push_back(llt.solve(ne.rhs[k]));
  }
  return thetas;
}

Matrix residual_sums_parallel(const FederatedDataset &data, const MixtureParams &params,
                              unsigned threads) {
  check_dims(data, params);
  const auto m = data.num_clients();
  Matrix s(m, params.K());
  parallel_for(block_count(m), threads, [&](std::size_t b) {
    const auto end = std::min(m, (b + 1) * kBlockSize);
    for (std::size_t j = b * kBlockSize; j < end; ++j) {
      const Vector row = client_residuals(data.client(j), params);
      if (!row.allFinite())
        throw NumericalError("non-finite residuals for client " + std::to_string(j + 1));
      s.row(j) = row.transpose();
    }
  });
  return s;
}

Responsibilities posteriors(const Matrix &s, double sigma) {
  Matrix w(s.rows(), s.cols());
  for (Eigen::Index j = 0; j < s.rows(); ++j) w.row(j) = client_posterior(s.row(j).transpose(), sigma).transpose();
  return Responsibilities(std::move(w));
}

double log_likelihood_from_residuals(const FederatedDataset &data, const Matrix &s, double sigma) {
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  const double log_norm = std::log(2.0 * std::numbers::pi * sigma * sigma);
  const double log_k = std::log(static_cast<double>(s.cols()));
  double total = 0.0;
  for (Eigen::Index j = 0; j < s.rows(); ++j) {
    const Eigen::ArrayXd logits = -s.row(j).array() * inv2s2;
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits - mx).exp().sum());
    const auto n_j = static_cast<double>(data.client(static_cast<std::size_t>(j)).size());
    total += lse - log_k - 0.5 * n_j * log_norm;
  }
  return total / static_cast<double>(s.rows());
}

double max_change(const MixtureParams &a, const MixtureParams &b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.K(); ++k) worst = std::max(worst, (a.theta(k) - b.theta(k)).norm());
  return worst;
}

}  // namespace

Responsibilities::Responsibilities(Matrix w) : w_(std::move(w)) {
  if (w_.rows() < 1 || w_.cols() < 1) throw ValidationError("w", "empty responsibility matrix");
  for (Eigen::Index j = 0; j < w_.rows(); ++j) {
    const auto row = w_.row(j);
    if ((row.array() < 0.0).any() || (row.array() > 1.0).any() || !row.allFinite())
      throw ValidationError("w", "entry outside [0, 1] in row " + std::to_string(j + 1));
    if (std::abs(row.sum() - 1.0) > 1e-12)
      throw ValidationError("w", "row " + std::to_string(j + 1) + " does not sum to 1");
  }
}

Matrix residual_sums(const FederatedDataset &data, const MixtureParams &params) {
  return residual_sums_parallel(data, params, 1);
}

Vector client_posterior(const Vector &residual_row, double sigma) {
  const Eigen::ArrayXd logits = -residual_row.array() / (2.0 * sigma * sigma);
  Eigen::ArrayXd p = (logits - logits.maxCoeff()).exp();
  p /= p.sum();
  return p.matrix();
}

Responsibilities e_step(const FederatedDataset &data, const MixtureParams &params) {
  return posteriors(residual_sums(data, params), params.sigma());
}

MixtureParams m_step(const FederatedDataset &data, const Responsibilities &resp, double sigma,
                     double solver_tol, unsigned threads) {
  const auto m = data.num_clients();
  if (resp.num_clients() != m)
    throw ValidationError("w", "responsibility rows differ from client count");
  const auto K = resp.K();
  const auto d = data.dim();
  std::vector<NormalEquations> blocks(block_count(m), NormalEquations(K, d));
  parallel_for(blocks.size(), threads, [&](std::size_t b) {
    const auto end = std::min(m, (b + 1) * kBlockSize);
    for (std::size_t j = b * kBlockSize; j < end; ++j)
      blocks[b].add_client(data.client(j), resp.weights().row(j).transpose());
  });
  const auto total = tree_reduce(std::move(blocks), [](NormalEquations &acc, const NormalEquations &x) { acc.merge(x); });
  return {solve(total, solver_tol), sigma};
}

double log_likelihood(const FederatedDataset &data, const MixtureParams &params) {
  const double ll = log_likelihood_from_residuals(data, residual_sums(data, params), params.sigma());
  if (!std::isfinite(ll)) throw NumericalError("non-finite log-likelihood");
  return ll;
}

MixtureParams init_within_ball(const MixtureParams &truth, double alpha, std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha <= 0.25)) throw ValidationError("alpha", "must lie in (0, 1/4]");
  const double radius = alpha * separations(truth).delta_min;
  const auto d = truth.dim();
  const rng::Stream stream(seed);
  std::vector<Vector> thetas;
  thetas.reserve(truth.K());
  for (std::size_t k = 0; k < truth.K(); ++k) {
    const auto ck = static_cast<std::uint32_t>(k);
    Vector u(d);
    do {
      stream.normals(ck, 0, rng::Tag::init, u, d);
    } while (u.squaredNorm() == 0.0);  // probability zero; keeps the division safe
    u.normalize();
    const double r = radius * std::pow(stream.uniform2(ck, 1, rng::Tag::init, 0).first, 1.0 / static_cast<double>(d));
    thetas.push_back(truth.theta(k) + r * u);
  }
  return truth.with_thetas(std::move(thetas));
}

EMTrace fit(const FederatedDataset &data, const MixtureParams &init, const EMConfig &cfg,
            const std::optional<MixtureParams> &truth, unsigned threads) {
  cfg.validate();
  check_dims(data, init);
  if (truth) {
    check_dims(data, *truth);
    if (truth->K() != init.K()) throw ValidationError("thetas", "truth and init differ in K");
  }

  EMTrace trace;
  if (truth) trace.max_errors.emplace();
  auto record = [&](MixtureParams params, double ll, int t) {
    if (!std::isfinite(ll)) {
      trace.iterates.push_back(std::move(params));
      trace.loglik.push_back(ll);
      throw FitAborted("non-finite log-likelihood at iteration " + std::to_string(t), std::move(trace));
    }
    if (truth) trace.max_errors->push_back(max_param_error(params, *truth, cfg.matching));
    trace.iterates.push_back(std::move(params));
    trace.loglik.push_back(ll);
  };

  Matrix s = residual_sums_parallel(data, init, threads);
  record(init, log_likelihood_from_residuals(data, s, init.sigma()), 0);

  for (int t = 0; t < cfg.max_iters; ++t) {
    const MixtureParams &current = trace.iterates.back();
    MixtureParams next = m_step(data, posteriors(s, current.sigma()), current.sigma(), cfg.solver_tol, threads);
    const double change = max_change(next, current);
    s = residual_sums_parallel(data, next, threads);
    record(std::move(next), log_likelihood_from_residuals(data, s, init.sigma()), t + 1);
    if (change <= cfg.param_tol) {
      trace.converged_at = t + 1;
      break;
    }
  }
  return trace;
}

MixtureParams population_em_step_mc(const MixtureParams &current, const MixtureParams &truth,
                                    std::size_t n, std::size_t mc_clients, std::uint64_t seed,
                                    double solver_tol, unsigned threads) {
  if (mc_clients < 1) throw ValidationError("mc_clients", "must be >= 1");
  if (current.dim() != truth.dim()) throw ValidationError("thetas", "current and truth differ in dimension");
  const GenSpec spec{truth, mc_clients, n, seed};
  spec.validate();
  const auto K = current.K();
  std::vector<NormalEquations> blocks(block_count(mc_clients), NormalEquations(K, current.dim()));
  parallel_for(blocks.size(), threads, [&](std::size_t b) {
    const auto end = std::min(mc_clients, (b + 1) * kBlockSize);
    for (std::size_t j = b * kBlockSize; j < end; ++j) {
      const ClientBatch client = sample_client(spec, j);
      blocks[b].add_client(client, client_posterior(client_residuals(client, current), current.sigma()));
    }
  });
  const auto total = tree_reduce(std::move(blocks), [](NormalEquations &acc, const NormalEquations &x) { acc.merge(x); });
  return {solve(total, solver_tol), current.sigma()};
}

}  // namespace fedmix
