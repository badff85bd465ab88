#include "fedmix/datagen.hpp"

#include "fedmix/rng.hpp"

#include <algorithm>
#include <limits>

namespace fedmix {

void GenSpec::validate() const {
  if (m < 1) throw ValidationError("m", "must be >= 1");
  if (n < 1) throw ValidationError("n", "must be >= 1");
  if (m > std::numeric_limits<std::uint32_t>::max()) throw ValidationError("m", "too many clients");
  if (n > std::numeric_limits<std::uint32_t>::max()) throw ValidationError("n", "too many samples");
}

ClientBatch sample_client(const GenSpec &spec, std::size_t j) {
  const rng::Stream stream(spec.seed);
  const auto cj = static_cast<std::uint32_t>(j);
  const auto K = spec.truth.K();
  const auto d = spec.truth.dim();

  const double u = stream.uniform2(0, cj, rng::Tag::label, 0).first;
  const auto label = std::min<std::size_t>(static_cast<std::size_t>(u * static_cast<double>(K)), K - 1);
  const Vector &theta = spec.truth.theta(label);

  Matrix xs(spec.n, d);
  Vector ys(spec.n);
  Vector row(d);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const auto ci = static_cast<std::uint32_t>(i);
    stream.normals(ci, cj, rng::Tag::covariate, row, d);
    xs.row(i) = row.transpose();
    const double eps = stream.normal2(ci, cj, rng::Tag::noise, 0).first;
    ys[i] = row.dot(theta) + spec.truth.sigma() * eps;
  }
  return {static_cast<int>(label), std::move(xs), std::move(ys)};
}

FederatedDataset sample_dataset(const GenSpec &spec) {
  spec.validate();
  std::vector<ClientBatch> clients;
  clients.reserve(spec.m);
  for (std::size_t j = 0; j < spec.m; ++j) clients.push_back(sample_client(spec, j));
  return {std::move(clients), spec.truth.dim(), spec.truth.K()};
}

Separations separations(const MixtureParams &truth) {
  const auto K = truth.K();
  if (K < 2) throw ValidationError("thetas", "separations need K >= 2");
  Separations s{std::numeric_limits<double>::infinity(), 0.0};
  for (std::size_t a = 0; a < K; ++a) {
    for (std::size_t b = a + 1; b < K; ++b) {
      const double dist = (truth.theta(a) - truth.theta(b)).norm();
      s.delta_min = std::min(s.delta_min, dist);
      s.delta_max = std::max(s.delta_max, dist);
    }
  }
  return s;
}

double snr(const MixtureParams &truth) { return separations(truth).delta_min / truth.sigma(); }

}  // namespace fedmix
