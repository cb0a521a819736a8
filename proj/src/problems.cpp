#include "problems.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "admm.hpp"
#include "errors.hpp"

namespace admm_mpnn::problems {

std::string_view to_string(ProblemClass c) {
  return c == ProblemClass::consensus ? "consensus" : "least_squares";
}

ProblemClass problem_class_from_string(std::string_view s) {
  if (s == "consensus") return ProblemClass::consensus;
  if (s == "least_squares") return ProblemClass::least_squares;
  throw ConfigError("unknown problem class '" + std::string(s) + "'");
}

Eigen::MatrixXd ProblemInstance::B_of(int i) const {
  if (cls == ProblemClass::consensus) return Eigen::MatrixXd::Identity(n, n);
  return B[static_cast<std::size_t>(i)];
}

namespace {

Eigen::MatrixXd sample_b(Rng& rng, int m, int n, double stddev) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd b(m, n);
  for (int i = 0; i < m; ++i)
    for (int c = 0; c < n; ++c) b(i, c) = stddev * normal(rng);
  return b;
}

void check_options(const GenOptions& o) {
  if (o.num_nodes < 2) throw ConfigError("num_nodes must be >= 2");
  if (o.dim < 1) throw ConfigError("dim must be >= 1");
  if (o.unroll_steps < 0) throw ConfigError("unroll_steps must be >= 0");
}

}  // namespace

ProblemInstance gen_consensus(Rng& rng, const GenOptions& opts) {
  check_options(opts);
  ProblemInstance inst;
  inst.graph = graph::erdos_renyi(opts.num_nodes, opts.edge_prob, rng, opts.max_graph_attempts);
  inst.cls = ProblemClass::consensus;
  inst.n = opts.dim;
  inst.b = sample_b(rng, opts.num_nodes, opts.dim, opts.b_stddev);
  inst.x_star = global_solution_consensus(inst.b);
  if (opts.unroll_steps > 0) recompute_baseline(inst, opts.unroll_steps);
  return inst;
}

ProblemInstance gen_least_squares(Rng& rng, const GenOptions& opts) {
  check_options(opts);
  ProblemInstance inst;
  inst.graph = graph::erdos_renyi(opts.num_nodes, opts.edge_prob, rng, opts.max_graph_attempts);
  inst.cls = ProblemClass::least_squares;
  inst.n = opts.dim;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < opts.num_nodes; ++i) {
    Eigen::MatrixXd Bi(opts.dim, opts.dim);
    int attempt = 0;
    for (;; ++attempt) {
      if (attempt >= opts.max_matrix_attempts)
        throw NumericError("gen_least_squares: no admissible B_i after " +
                           std::to_string(opts.max_matrix_attempts) + " attempts");
      for (int r = 0; r < opts.dim; ++r)
        for (int c = 0; c < opts.dim; ++c) Bi(r, c) = unif(rng);
      if (min_eigen_modulus(Bi) >= opts.min_eigen_modulus) break;
    }
    inst.B.push_back(Bi);
  }
  inst.b = sample_b(rng, opts.num_nodes, opts.dim, opts.b_stddev);
  inst.x_star = global_solution_least_squares(inst.B, inst.b);
  if (opts.unroll_steps > 0) recompute_baseline(inst, opts.unroll_steps);
  return inst;
}

ProblemInstance generate(ProblemClass cls, std::uint64_t seed, const GenOptions& opts) {
  Rng rng(seed);
  ProblemInstance inst =
      cls == ProblemClass::consensus ? gen_consensus(rng, opts) : gen_least_squares(rng, opts);
  inst.seed = seed;
  return inst;
}

double min_eigen_modulus(const Eigen::MatrixXd& M) {
  ADMM_MPNN_REQUIRE(M.rows() == M.cols() && M.rows() > 0, "min_eigen_modulus: square matrix required");
  if (M.rows() == 1) return std::abs(M(0, 0));
  if (M.rows() == 2) {
    const double tr = M(0, 0) + M(1, 1);
    const double det = M(0, 0) * M(1, 1) - M(0, 1) * M(1, 0);
    const double disc = tr * tr - 4.0 * det;
    if (disc < 0.0) return std::sqrt(det);  // conjugate pair, |z|^2 = det
    const double s = std::sqrt(disc);
    return std::min(std::abs(0.5 * (tr + s)), std::abs(0.5 * (tr - s)));
  }
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
  if (es.info() != Eigen::Success) throw NumericError("min_eigen_modulus: eigensolver failed");
  return es.eigenvalues().cwiseAbs().minCoeff();
}

double objective(const ProblemInstance& inst, const Eigen::MatrixXd& X) {
  ADMM_MPNN_REQUIRE(X.rows() == inst.num_nodes() && X.cols() == inst.n,
                    "objective: iterate shape does not match instance");
  double f = 0.0;
  for (int i = 0; i < inst.num_nodes(); ++i) {
    const Eigen::VectorXd xi = X.row(i).transpose();
    const Eigen::VectorXd bi = inst.b.row(i).transpose();
    if (inst.cls == ProblemClass::consensus)
      f += (xi - bi).squaredNorm();
    else
      f += (inst.B[static_cast<std::size_t>(i)] * xi - bi).squaredNorm();
  }
  return f;
}

Eigen::VectorXd global_solution_consensus(const Eigen::MatrixXd& b) {
  return b.colwise().mean().transpose();
}

Eigen::VectorXd global_solution_least_squares(const std::vector<Eigen::MatrixXd>& B,
                                              const Eigen::MatrixXd& b) {
  ADMM_MPNN_REQUIRE(!B.empty() && static_cast<Eigen::Index>(B.size()) == b.rows(),
                    "global_solution_least_squares: one B_i per node required");
  const Eigen::Index n = b.cols();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
  for (std::size_t i = 0; i < B.size(); ++i) {
    G += B[i].transpose() * B[i];
    r += B[i].transpose() * b.row(static_cast<Eigen::Index>(i)).transpose();
  }
  Eigen::LLT<Eigen::MatrixXd> llt(G);
  if (llt.info() != Eigen::Success) throw NumericError("normal equations are singular");
  return llt.solve(r);
}

Eigen::VectorXd global_solution(const ProblemInstance& inst) {
  return inst.cls == ProblemClass::consensus ? global_solution_consensus(inst.b)
                                             : global_solution_least_squares(inst.B, inst.b);
}

void recompute_baseline(ProblemInstance& inst, int K) {
  ADMM_MPNN_REQUIRE(K >= 1, "recompute_baseline: K must be >= 1");
  inst.baseline_xK = admm::run_baseline(inst, K);
  inst.K = K;
}

ProblemInstance permute(const ProblemInstance& inst, const std::vector<int>& perm) {
  auto pg = graph::permute(inst.graph, graph::unit_weights(inst.graph), perm);
  ProblemInstance out = inst;
  out.graph = std::move(pg.graph);
  const int m = inst.num_nodes();
  for (int i = 0; i < m; ++i) {
    const int p = perm[static_cast<std::size_t>(i)];
    out.b.row(p) = inst.b.row(i);
    if (!inst.B.empty()) out.B[static_cast<std::size_t>(p)] = inst.B[static_cast<std::size_t>(i)];
    if (inst.baseline_xK.size() > 0) out.baseline_xK.row(p) = inst.baseline_xK.row(i);
  }
  return out;
}

namespace {

nlohmann::json rows_to_json(const Eigen::MatrixXd& M) {
  auto a = nlohmann::json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    a.push_back(std::move(row));
  }
  return a;
}

Eigen::MatrixXd rows_from_json(const nlohmann::json& j, Eigen::Index cols) {
  Eigen::MatrixXd M(static_cast<Eigen::Index>(j.size()), cols);
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw IoError("dataset: ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return M;
}

}  // namespace

nlohmann::json instance_to_json(const ProblemInstance& inst) {
  nlohmann::json g;
  graph::to_json(g, inst.graph, graph::unit_weights(inst.graph));
  nlohmann::json j;
  j["version"] = kDatasetSchemaVersion;
  j["graph"] = std::move(g);
  j["class"] = to_string(inst.cls);
  j["n"] = inst.n;
  j["b"] = rows_to_json(inst.b);
  if (inst.cls == ProblemClass::least_squares) {
    auto Bs = nlohmann::json::array();
    for (const auto& Bi : inst.B) Bs.push_back(rows_to_json(Bi));
    j["B"] = std::move(Bs);
  }
  j["x_star"] = std::vector<double>(inst.x_star.data(), inst.x_star.data() + inst.x_star.size());
  j["baseline_xK"] = rows_to_json(inst.baseline_xK);
  j["K"] = inst.K;
  j["seed"] = inst.seed;
  return j;
}

ProblemInstance instance_from_json(const nlohmann::json& j) {
  try {
    if (!j.contains("version")) throw IoError("dataset: missing schema version");
    const int version = j.at("version").get<int>();
    if (version != kDatasetSchemaVersion)
      throw IoError("dataset: schema version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kDatasetSchemaVersion) + ")");
    ProblemInstance inst;
    inst.graph = graph::graph_from_json(j.at("graph"));
    inst.cls = problem_class_from_string(j.at("class").get<std::string>());
    inst.n = j.at("n").get<int>();
    inst.b = rows_from_json(j.at("b"), inst.n);
    if (inst.b.rows() != inst.num_nodes()) throw IoError("dataset: b has wrong number of rows");
    if (inst.cls == ProblemClass::least_squares) {
      for (const auto& Bi : j.at("B")) inst.B.push_back(rows_from_json(Bi, inst.n));
      if (static_cast<int>(inst.B.size()) != inst.num_nodes()) throw IoError("dataset: wrong number of B_i");
    }
    const auto xs = j.at("x_star").get<std::vector<double>>();
    if (static_cast<int>(xs.size()) != inst.n) throw IoError("dataset: x_star has wrong size");
    inst.x_star = Eigen::Map<const Eigen::VectorXd>(xs.data(), inst.n);
    inst.baseline_xK = rows_from_json(j.at("baseline_xK"), inst.n);
    inst.K = j.at("K").get<int>();
    inst.seed = j.at("seed").get<std::uint64_t>();
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("dataset: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("dataset: ") + e.what());
  }
}

std::uint64_t instance_seed(std::uint64_t dataset_seed, std::string_view split, std::size_t index) {
  std::uint64_t tag = 1469598103934665603ULL;
  for (char c : split) tag = (tag ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  return derive_seed(dataset_seed, tag, index);
}

Dataset generate_dataset(ProblemClass cls, std::string split, std::size_t count,
                         std::uint64_t dataset_seed, const GenOptions& opts) {
  Dataset ds;
  ds.cls = cls;
  ds.instances.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    ds.instances.push_back(generate(cls, instance_seed(dataset_seed, split, i), opts));
  ds.split = std::move(split);
  return ds;
}

void dataset_save(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& inst : ds.instances) out << instance_to_json(inst).dump() << '\n';
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

Dataset dataset_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  Dataset ds;
  const auto slash = path.find_last_of('/');
  std::string stem = path.substr(slash == std::string::npos ? 0 : slash + 1);
  stem = stem.substr(0, stem.find('.'));
  ds.split = stem;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      ds.instances.push_back(instance_from_json(j));
    } catch (const IoError& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (ds.instances.size() == 1)
      ds.cls = ds.instances.front().cls;
    else if (ds.instances.back().cls != ds.cls)
      throw IoError(path + ":" + std::to_string(lineno) + ": mixed problem classes in one file");
  }
  return ds;
}

}  // namespace admm_mpnn::problems
