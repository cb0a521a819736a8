#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "autodiff.hpp"
#include "rng.hpp"

namespace admm_mpnn::nn {

inline constexpr int kHiddenUnits = 32;
inline constexpr double kInstanceNormEps = 1e-5;

// softplus(W2 relu(W1 x + b1) + b2)
struct MlpParams {
  Eigen::MatrixXd W1;     // hidden x in
  Eigen::VectorXd b1;     // hidden
  Eigen::RowVectorXd W2;  // 1 x hidden
  double b2 = 0.0;

  static MlpParams zeros(int in_dim);
  int in_dim() const { return static_cast<int>(W1.cols()); }
  std::size_t param_count() const;
};

std::size_t param_count(int in_dim);

double mlp_forward(const MlpParams& p, const Eigen::VectorXd& x);

// Glorot-uniform weights, zero biases.
MlpParams init_params(int in_dim, Rng& rng);

// Row-major W1, then b1, W2, b2.
std::vector<double> flatten(const MlpParams& p);
void append_flat(const MlpParams& p, std::vector<double>& out);
// Reads param_count() values starting at `offset`; returns the new offset.
std::size_t assign_flat(MlpParams& p, std::span<const double> flat, std::size_t offset = 0);

// Per-column standardization across rows (the nodes of one instance).
Eigen::MatrixXd instance_norm(const Eigen::MatrixXd& features, double eps = kInstanceNormEps);

struct MlpLeaves {
  ad::Value W1, b1, W2, b2;
};

MlpLeaves record_params(ad::Tape& tape, const MlpParams& p);
ad::Value mlp_forward(const MlpLeaves& p, const ad::Value& x);
// Adds the adjoints of the leaves into `out` in flatten() order; returns new offset.
std::size_t accumulate_grad(const ad::Gradients& g, const MlpLeaves& p, std::span<double> out,
                            std::size_t offset = 0);
// rows[i] is the feature column vector of node i.
std::vector<ad::Value> instance_norm(const std::vector<ad::Value>& rows, double eps = kInstanceNormEps);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_radius = 1.0;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;

  static AdamState zeros(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0}; }
};

// Rescales `grads` in place so its 2-norm is at most `radius`; returns the norm before clipping.
double clip_global_norm(std::span<double> grads, double radius);

// Global clipping followed by a bias-corrected Adam update. Throws on non-finite gradients
// before touching params or state.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg);

}  // namespace admm_mpnn::nn
