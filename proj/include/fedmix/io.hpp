#pragma once

// On-disk formats: JSON-lines datasets, JSON traces and run configs.
// Component labels are 1-based in every file and 0-based in memory.

#include "fedmix/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>

namespace fedmix::io {

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct DatasetHeader {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t K = 0;
  double sigma = 1.0;
  std::uint64_t seed = 0;
};

/// Header line {"m","n","d","K","sigma","seed"} then one
/// {"z","xs","ys"} line per client. "z" is omitted for unlabeled clients.
void write_dataset(std::ostream &out, const FederatedDataset &data, const DatasetHeader &header);

struct LoadedDataset {
  DatasetHeader header;
  FederatedDataset data;
};

/// Parses the JSON-lines format; ValidationError on malformed content.
[[nodiscard]] LoadedDataset read_dataset(std::istream &in);

void save_dataset(const std::filesystem::path &path, const FederatedDataset &data,
                  const DatasetHeader &header);
[[nodiscard]] LoadedDataset load_dataset(const std::filesystem::path &path);

[[nodiscard]] nlohmann::json params_to_json(const MixtureParams &p);
[[nodiscard]] nlohmann::json trace_to_json(const EMTrace &trace);

/// Contents of a run config. Keys: thetas, sigma, max_iters, param_tol,
/// solver_tol, seed, matching, m, n, alpha, init. Anything else is rejected.
struct RunConfig {
  std::optional<MixtureParams> truth;
  EMConfig em;
  std::optional<std::size_t> m;
  std::optional<std::size_t> n;
  std::optional<double> alpha;
  std::optional<std::vector<Vector>> init;
};

[[nodiscard]] RunConfig parse_config(const nlohmann::json &j);
[[nodiscard]] RunConfig load_config(const std::filesystem::path &path);

[[nodiscard]] std::string read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, const std::string &contents);

}  // namespace fedmix::io
