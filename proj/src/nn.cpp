#include "nn.hpp"

#include <cmath>

#include "errors.hpp"

namespace admm_mpnn::nn {

MlpParams MlpParams::zeros(int in_dim) {
  ADMM_MPNN_REQUIRE(in_dim >= 1, "MLP input dimension must be >= 1");
  return {Eigen::MatrixXd::Zero(kHiddenUnits, in_dim), Eigen::VectorXd::Zero(kHiddenUnits),
          Eigen::RowVectorXd::Zero(kHiddenUnits), 0.0};
}

std::size_t MlpParams::param_count() const { return nn::param_count(in_dim()); }

std::size_t param_count(int in_dim) {
  return static_cast<std::size_t>(kHiddenUnits) * static_cast<std::size_t>(in_dim) + 2 * kHiddenUnits + 1;
}

double mlp_forward(const MlpParams& p, const Eigen::VectorXd& x) {
  ADMM_MPNN_REQUIRE(x.size() == p.in_dim(), "mlp_forward: input dimension mismatch");
  const Eigen::VectorXd h = (p.W1 * x + p.b1).cwiseMax(0.0);
  return ad::softplus(p.W2.dot(h) + p.b2);
}

MlpParams init_params(int in_dim, Rng& rng) {
  MlpParams p = MlpParams::zeros(in_dim);
  const double a1 = std::sqrt(6.0 / (in_dim + kHiddenUnits));
  const double a2 = std::sqrt(6.0 / (kHiddenUnits + 1));
  std::uniform_real_distribution<double> u1(-a1, a1), u2(-a2, a2);
  for (Eigen::Index r = 0; r < p.W1.rows(); ++r)
    for (Eigen::Index c = 0; c < p.W1.cols(); ++c) p.W1(r, c) = u1(rng);
  for (Eigen::Index c = 0; c < p.W2.size(); ++c) p.W2(c) = u2(rng);
  return p;
}

void append_flat(const MlpParams& p, std::vector<double>& out) {
  for (Eigen::Index r = 0; r < p.W1.rows(); ++r)
    for (Eigen::Index c = 0; c < p.W1.cols(); ++c) out.push_back(p.W1(r, c));
  for (Eigen::Index r = 0; r < p.b1.size(); ++r) out.push_back(p.b1(r));
  for (Eigen::Index c = 0; c < p.W2.size(); ++c) out.push_back(p.W2(c));
  out.push_back(p.b2);
}

std::vector<double> flatten(const MlpParams& p) {
  std::vector<double> out;
  out.reserve(p.param_count());
  append_flat(p, out);
  return out;
}

std::size_t assign_flat(MlpParams& p, std::span<const double> flat, std::size_t offset) {
  ADMM_MPNN_REQUIRE(offset + p.param_count() <= flat.size(), "assign_flat: not enough parameters");
  for (Eigen::Index r = 0; r < p.W1.rows(); ++r)
    for (Eigen::Index c = 0; c < p.W1.cols(); ++c) p.W1(r, c) = flat[offset++];
  for (Eigen::Index r = 0; r < p.b1.size(); ++r) p.b1(r) = flat[offset++];
  for (Eigen::Index c = 0; c < p.W2.size(); ++c) p.W2(c) = flat[offset++];
  p.b2 = flat[offset++];
  return offset;
}

Eigen::MatrixXd instance_norm(const Eigen::MatrixXd& features, double eps) {
  ADMM_MPNN_REQUIRE(features.rows() >= 1, "instance_norm: need at least one row");
  ADMM_MPNN_REQUIRE(eps > 0.0, "instance_norm: eps must be positive");
  const double inv_m = 1.0 / static_cast<double>(features.rows());
  const Eigen::RowVectorXd mu = features.colwise().sum() * inv_m;
  const Eigen::MatrixXd dev = features.rowwise() - mu;
  const Eigen::RowVectorXd var = dev.cwiseProduct(dev).colwise().sum() * inv_m;
  const Eigen::RowVectorXd inv = (var.array() + eps).sqrt().inverse().matrix();
  return dev.array().rowwise() * inv.array();
}

MlpLeaves record_params(ad::Tape& tape, const MlpParams& p) {
  return {tape.leaf(p.W1), tape.leaf(ad::Matrix(p.b1)), tape.leaf(ad::Matrix(p.W2)),
          tape.scalar(p.b2)};
}

ad::Value mlp_forward(const MlpLeaves& p, const ad::Value& x) {
  const ad::Value h = ad::relu(ad::add(ad::matvec(p.W1, x), p.b1));
  return ad::softplus(ad::add(ad::matvec(p.W2, h), p.b2));
}

std::size_t accumulate_grad(const ad::Gradients& g, const MlpLeaves& p, std::span<double> out, std::size_t offset) {
  const ad::Matrix& gW1 = g[p.W1];
  for (Eigen::Index r = 0; r < gW1.rows(); ++r)
    for (Eigen::Index c = 0; c < gW1.cols(); ++c) out[offset++] += gW1(r, c);
  const ad::Matrix& gb1 = g[p.b1];
  for (Eigen::Index r = 0; r < gb1.rows(); ++r) out[offset++] += gb1(r, 0);
  const ad::Matrix& gW2 = g[p.W2];
  for (Eigen::Index c = 0; c < gW2.cols(); ++c) out[offset++] += gW2(0, c);
  out[offset++] += g.scalar(p.b2);
  return offset;
}

std::vector<ad::Value> instance_norm(const std::vector<ad::Value>& rows, double eps) {
  ADMM_MPNN_REQUIRE(!rows.empty(), "instance_norm: need at least one row");
  const double inv_m = 1.0 / static_cast<double>(rows.size());
  ad::Value total = rows.front();
  for (std::size_t i = 1; i < rows.size(); ++i) total = ad::add(total, rows[i]);
  const ad::Value mu = ad::scale(inv_m, total);
  std::vector<ad::Value> dev;
  dev.reserve(rows.size());
  for (const auto& r : rows) dev.push_back(ad::sub(r, mu));
  ad::Value sq = ad::mul(dev.front(), dev.front());
  for (std::size_t i = 1; i < dev.size(); ++i) sq = ad::add(sq, ad::mul(dev[i], dev[i]));
  const ad::Value inv_std = ad::reciprocal(ad::sqrt(ad::add_const(ad::scale(inv_m, sq), eps)));
  std::vector<ad::Value> out;
  out.reserve(rows.size());
  for (const auto& d : dev) out.push_back(ad::mul(d, inv_std));
  return out;
}

double clip_global_norm(std::span<double> grads, double radius) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > radius) {
    const double s = radius / norm;
    for (double& g : grads) g *= s;
  }
  return norm;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg) {
  ADMM_MPNN_REQUIRE(params.size() == grads.size(), "adam_step: parameter/gradient size mismatch");
  if (state.m.empty() && state.v.empty()) state = AdamState::zeros(params.size());
  ADMM_MPNN_REQUIRE(state.m.size() == params.size() && state.v.size() == params.size(),
                    "adam_step: optimizer state size mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");

  std::vector<double> g(grads.begin(), grads.end());
  clip_global_norm(g, cfg.clip_radius);

  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

}  // namespace admm_mpnn::nn
