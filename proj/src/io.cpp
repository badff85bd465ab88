#include "fedmix/io.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace fedmix::io {
namespace {

using nlohmann::json;

json vector_to_json(const Vector &v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vector json_to_vector(const json &j, const char *field) {
  if (!j.is_array()) throw ValidationError(field, "expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError(field, "expected a number");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

std::vector<Vector> json_to_vectors(const json &j, const char *field) {
  if (!j.is_array()) throw ValidationError(field, "expected an array of arrays");
  std::vector<Vector> out;
  for (const auto &row : j) out.push_back(json_to_vector(row, field));
  return out;
}

template <typename T>
T get_field(const json &j, const char *field) {
  if (!j.contains(field)) throw ValidationError(field, "missing");
  try {
    return j.at(field).get<T>();
  } catch (const json::exception &) {
    throw ValidationError(field, "wrong type");
  }
}

std::size_t get_count(const json &j, const char *field) {
  if (!j.contains(field)) throw ValidationError(field, "missing");
  const auto &v = j.at(field);
  if (!v.is_number_integer()) throw ValidationError(field, "expected an integer");
  if (v.is_number_unsigned()) return v.get<std::size_t>();
  const auto s = v.get<std::int64_t>();
  if (s < 0) throw ValidationError(field, "must be non-negative");
  return static_cast<std::size_t>(s);
}

json parse_json(const std::string &text, const char *what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error &e) {
    throw ValidationError(what, std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

void write_dataset(std::ostream &out, const FederatedDataset &data, const DatasetHeader &header) {
  json h = {{"m", header.m}, {"n", header.n}, {"d", header.d},
            {"K", header.K}, {"sigma", header.sigma}, {"seed", header.seed}};
  out << h.dump() << '\n';
  for (const auto &c : data.clients()) {
    json line = json::object();
    if (c.label()) line["z"] = *c.label() + 1;
    json xs = json::array();
    for (Eigen::Index i = 0; i < c.xs().rows(); ++i) xs.push_back(vector_to_json(c.xs().row(i).transpose()));
    line["xs"] = std::move(xs);
    line["ys"] = vector_to_json(c.ys());
    out << line.dump() << '\n';
  }
}

LoadedDataset read_dataset(std::istream &in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("header", "empty dataset file");
  const json h = parse_json(line, "header");
  if (!h.is_object()) throw ValidationError("header", "expected a JSON object");
  DatasetHeader header;
  header.m = get_count(h, "m");
  header.n = get_count(h, "n");
  header.d = get_count(h, "d");
  header.K = get_count(h, "K");
  header.sigma = get_field<double>(h, "sigma");
  header.seed = get_field<std::uint64_t>(h, "seed");

  std::vector<ClientBatch> clients;
  clients.reserve(header.m);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json c = parse_json(line, "client");
    if (!c.is_object() || !c.contains("xs") || !c.contains("ys"))
      throw ValidationError("client", "line " + std::to_string(clients.size() + 2) + " lacks xs/ys");
    std::optional<int> label;
    if (c.contains("z") && !c.at("z").is_null()) {
      const auto z = get_count(c, "z");
      if (z < 1 || z > header.K) throw ValidationError("z", "label outside [1, K]");
      label = static_cast<int>(z) - 1;
    }
    const auto rows = json_to_vectors(c.at("xs"), "xs");
    Matrix xs(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(header.d));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<std::size_t>(rows[i].size()) != header.d) throw ValidationError("xs", "row dimension differs from d");
      xs.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    }
    clients.emplace_back(label, std::move(xs), json_to_vector(c.at("ys"), "ys"));
  }
  if (clients.size() != header.m)
    throw ValidationError("m", "header says " + std::to_string(header.m) + " clients, file has " +
                                   std::to_string(clients.size()));
  return {header, FederatedDataset(std::move(clients), header.d, header.K)};
}

void save_dataset(const std::filesystem::path &path, const FederatedDataset &data,
                  const DatasetHeader &header) {
  std::ostringstream out;
  write_dataset(out, data, header);
  write_file(path, out.str());
}

LoadedDataset load_dataset(const std::filesystem::path &path) {
  std::istringstream in(read_file(path));
  return read_dataset(in);
}

json params_to_json(const MixtureParams &p) {
  json thetas = json::array();
  for (const auto &t : p.thetas()) thetas.push_back(vector_to_json(t));
  return {{"thetas", std::move(thetas)}, {"sigma", p.sigma()}};
}

json trace_to_json(const EMTrace &trace) {
  json iterates = json::array();
  for (const auto &p : trace.iterates) iterates.push_back(params_to_json(p));
  json out = {{"iterates", std::move(iterates)}, {"loglik", trace.loglik}};
  out["converged_at"] = trace.converged_at ? json(*trace.converged_at) : json(nullptr);
  if (trace.max_errors) out["max_errors"] = *trace.max_errors;
  return out;
}

RunConfig parse_config(const json &j) {
  static const std::set<std::string> kKeys{"thetas", "sigma", "max_iters", "param_tol", "solver_tol", "seed",
                                           "matching", "m", "n", "alpha", "init"};
  if (!j.is_object()) throw ValidationError("config", "expected a JSON object");
  for (const auto &[key, _] : j.items())
    if (!kKeys.contains(key)) throw ValidationError(key, "unknown config key");

  RunConfig cfg;
  if (j.contains("thetas") || j.contains("sigma")) {
    cfg.truth.emplace(json_to_vectors(j.contains("thetas") ? j.at("thetas") : json::array(), "thetas"),
                      get_field<double>(j, "sigma"));
  }
  if (j.contains("max_iters")) {
    const auto v = get_field<std::int64_t>(j, "max_iters");
    if (v < 1 || v > std::numeric_limits<int>::max()) throw ValidationError("max_iters", "must be >= 1");
    cfg.em.max_iters = static_cast<int>(v);
  }
  if (j.contains("param_tol")) cfg.em.param_tol = get_field<double>(j, "param_tol");
  if (j.contains("solver_tol")) cfg.em.solver_tol = get_field<double>(j, "solver_tol");
  if (j.contains("seed")) cfg.em.seed = get_field<std::uint64_t>(j, "seed");
  if (j.contains("matching")) cfg.em.matching = parse_matching(get_field<std::string>(j, "matching"));
  cfg.em.validate();
  if (j.contains("m")) cfg.m = get_count(j, "m");
  if (j.contains("n")) cfg.n = get_count(j, "n");
  if (j.contains("alpha")) cfg.alpha = get_field<double>(j, "alpha");
  if (j.contains("init")) cfg.init = json_to_vectors(j.at("init"), "init");
  return cfg;
}

RunConfig load_config(const std::filesystem::path &path) { return parse_config(parse_json(read_file(path), "config")); }

std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return ss.str();
}

void write_file(const std::filesystem::path &path, const std::string &contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << contents;
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace fedmix::io
