#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "admm.hpp"
#include "autodiff.hpp"
#include "graph.hpp"
#include "nn.hpp"
#include "problems.hpp"

namespace admm_mpnn::learned {

enum class Variant { baseline, global_alpha, local_alpha, edge_weights, combined };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view s);

inline bool learns_step_sizes(Variant v) {
  return v == Variant::global_alpha || v == Variant::local_alpha || v == Variant::combined;
}
inline bool learns_edge_weights(Variant v) { return v == Variant::edge_weights || v == Variant::combined; }

inline constexpr int kLdpSize = 5;
inline constexpr int kEdgeInputDim = 2 * kLdpSize;

// (x_i, y_i, lambda_i, lambda_in_i, y_in_i, m)
inline int step_input_dim(int n) { return 5 * n + 1; }

// Hyperparameter heads for one variant. Step-size heads cover iterations
// 2..K, one head per iteration; iteration 1 and everything after K use alpha = 1.
struct Model {
  Variant variant = Variant::baseline;
  int unroll_steps = 10;
  int dim = 2;
  std::vector<nn::MlpParams> step_heads;
  std::optional<nn::MlpParams> edge_head;

  static Model create(Variant variant, int unroll_steps, int dim, Rng& rng);
  static Model zeros(Variant variant, int unroll_steps, int dim);

  // Throws ConfigError if the heads present do not match the variant.
  void validate() const;
  std::size_t param_count() const;
  std::vector<double> flat_params() const;
  void set_flat_params(std::span<const double> flat);
};

// m x (5n+1): the first 5n columns instance-normalized, the last column is m.
Eigen::MatrixXd step_input(const admm::IterState& s, const admm::Aggregates& agg, int m);

Eigen::VectorXd predict_alpha_local(const nn::MlpParams& head, const Eigen::MatrixXd& inputs);
double predict_alpha_global(const nn::MlpParams& head, const Eigen::MatrixXd& inputs);

Eigen::VectorXd edge_input(const graph::Graph& g, int i, int j);
// e_ij = h(LDP_i, LDP_j) + h(LDP_j, LDP_i) for every undirected edge.
graph::EdgeWeights predict_edge_weights(const nn::MlpParams& head, const graph::Graph& g);

struct Assembled {
  admm::CommMatrix comm;
  admm::StepSchedule schedule;
};

Assembled assemble(const Model& model, const problems::ProblemInstance& inst);

// --- differentiable path ----------------------------------------------------

struct ModelLeaves {
  std::vector<nn::MlpLeaves> step_heads;
  std::optional<nn::MlpLeaves> edge_head;
};

ModelLeaves record_model(ad::Tape& tape, const Model& model);
// Adds leaf adjoints into `out` in Model::flat_params() order.
void accumulate_grad(const ad::Gradients& g, const ModelLeaves& leaves, std::span<double> out);

struct TapeState {
  std::vector<ad::Value> x, y, lambda;
};

// Records K iterations of the message-passing form with the model's
// hyperparameters; returns the state after iteration K.
TapeState unroll(ad::Tape& tape, const Model& model, const ModelLeaves& leaves,
                 const problems::ProblemInstance& inst, int K);

}  // namespace admm_mpnn::learned
