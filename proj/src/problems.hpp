#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "graph.hpp"
#include "json.hpp"
#include "rng.hpp"

namespace admm_mpnn::problems {

enum class ProblemClass { consensus, least_squares };

std::string_view to_string(ProblemClass c);
ProblemClass problem_class_from_string(std::string_view s);

struct GenOptions {
  int num_nodes = 8;
  int dim = 2;
  double edge_prob = 0.5;
  int unroll_steps = 10;  // K used for the stored baseline iterate
  int max_graph_attempts = 10000;
  int max_matrix_attempts = 10000;
  double min_eigen_modulus = 0.1;
  double b_stddev = 10.0;  // b_i ~ N(0, 100 I)
};

// Stacked per-node vectors use an m x n matrix with row i holding node i.
struct ProblemInstance {
  graph::Graph graph;
  ProblemClass cls = ProblemClass::consensus;
  int n = 0;
  Eigen::MatrixXd b;
  std::vector<Eigen::MatrixXd> B;  // empty for consensus
  Eigen::VectorXd x_star;
  Eigen::MatrixXd baseline_xK;
  int K = 0;  // horizon of baseline_xK; 0 means not computed
  std::uint64_t seed = 0;

  int num_nodes() const { return graph.num_nodes(); }
  // B_i, or the identity for the consensus class.
  Eigen::MatrixXd B_of(int i) const;
};

ProblemInstance gen_consensus(Rng& rng, const GenOptions& opts = {});
ProblemInstance gen_least_squares(Rng& rng, const GenOptions& opts = {});
// Seeds a fresh engine from `seed` and records it in the instance.
ProblemInstance generate(ProblemClass cls, std::uint64_t seed, const GenOptions& opts = {});

// Smallest complex modulus over the eigenvalues of a square matrix. The 2x2
// case uses the quadratic formula; larger sizes use an iterative eigensolver.
double min_eigen_modulus(const Eigen::MatrixXd& M);

// Sum_i f_i(x_i) over stacked per-node iterates.
double objective(const ProblemInstance& inst, const Eigen::MatrixXd& X);

Eigen::VectorXd global_solution_consensus(const Eigen::MatrixXd& b);
Eigen::VectorXd global_solution_least_squares(const std::vector<Eigen::MatrixXd>& B, const Eigen::MatrixXd& b);
Eigen::VectorXd global_solution(const ProblemInstance& inst);

// Runs the default-hyperparameter iteration for K steps and stores x^K.
void recompute_baseline(ProblemInstance& inst, int K);

// Relabels node i as perm[i]; objective data and stored iterates move with it.
ProblemInstance permute(const ProblemInstance& inst, const std::vector<int>& perm);

inline constexpr int kDatasetSchemaVersion = 1;

nlohmann::json instance_to_json(const ProblemInstance& inst);
ProblemInstance instance_from_json(const nlohmann::json& j);

struct Dataset {
  std::string split;  // train | val | test
  ProblemClass cls = ProblemClass::consensus;
  std::vector<ProblemInstance> instances;

  std::size_t size() const { return instances.size(); }
};

std::uint64_t instance_seed(std::uint64_t dataset_seed, std::string_view split, std::size_t index);

Dataset generate_dataset(ProblemClass cls, std::string split, std::size_t count,
                         std::uint64_t dataset_seed, const GenOptions& opts = {});

void dataset_save(const Dataset& ds, const std::string& path);
Dataset dataset_load(const std::string& path);

}  // namespace admm_mpnn::problems
