#include "learned.hpp"

#include <string>

#include "errors.hpp"

namespace admm_mpnn::learned {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::global_alpha: return "global_alpha";
    case Variant::local_alpha: return "local_alpha";
    case Variant::edge_weights: return "edge_weights";
    case Variant::combined: return "combined";
  }
  return "?";
}

Variant variant_from_string(std::string_view s) {
  for (Variant v : {Variant::baseline, Variant::global_alpha, Variant::local_alpha, Variant::edge_weights,
                    Variant::combined})
    if (s == to_string(v)) return v;
  throw ConfigError("unknown model variant '" + std::string(s) + "'");
}

Model Model::zeros(Variant variant, int unroll_steps, int dim) {
  if (unroll_steps < 1) throw ConfigError("unroll_steps must be >= 1");
  if (dim < 1) throw ConfigError("dim must be >= 1");
  Model m;
  m.variant = variant;
  m.unroll_steps = unroll_steps;
  m.dim = dim;
  if (learns_step_sizes(variant))
    m.step_heads.assign(static_cast<std::size_t>(unroll_steps - 1), nn::MlpParams::zeros(step_input_dim(dim)));
  if (learns_edge_weights(variant)) m.edge_head = nn::MlpParams::zeros(kEdgeInputDim);
  return m;
}

Model Model::create(Variant variant, int unroll_steps, int dim, Rng& rng) {
  Model m = zeros(variant, unroll_steps, dim);
  for (auto& h : m.step_heads) h = nn::init_params(step_input_dim(dim), rng);
  if (m.edge_head) m.edge_head = nn::init_params(kEdgeInputDim, rng);
  return m;
}

void Model::validate() const {
  const std::string tag(to_string(variant));
  if (learns_step_sizes(variant)) {
    if (static_cast<int>(step_heads.size()) != unroll_steps - 1)
      throw ConfigError("model '" + tag + "' needs " + std::to_string(unroll_steps - 1) + " step-size heads, has " +
                        std::to_string(step_heads.size()));
    for (const auto& h : step_heads)
      if (h.in_dim() != step_input_dim(dim)) throw ConfigError("step-size head has wrong input dimension");
  } else if (!step_heads.empty()) {
    throw ConfigError("model '" + tag + "' must not carry step-size heads");
  }
  if (learns_edge_weights(variant)) {
    if (!edge_head) throw ConfigError("model '" + tag + "' needs an edge-weight head");
    if (edge_head->in_dim() != kEdgeInputDim) throw ConfigError("edge-weight head has wrong input dimension");
  } else if (edge_head) {
    throw ConfigError("model '" + tag + "' must not carry an edge-weight head");
  }
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const auto& h : step_heads) n += h.param_count();
  if (edge_head) n += edge_head->param_count();
  return n;
}

std::vector<double> Model::flat_params() const {
  std::vector<double> out;
  out.reserve(param_count());
  for (const auto& h : step_heads) nn::append_flat(h, out);
  if (edge_head) nn::append_flat(*edge_head, out);
  return out;
}

void Model::set_flat_params(std::span<const double> flat) {
  ADMM_MPNN_REQUIRE(flat.size() == param_count(), "set_flat_params: size mismatch");
  std::size_t off = 0;
  for (auto& h : step_heads) off = nn::assign_flat(h, flat, off);
  if (edge_head) off = nn::assign_flat(*edge_head, flat, off);
}

Eigen::MatrixXd step_input(const admm::IterState& s, const admm::Aggregates& agg, int m) {
  const Eigen::Index n = s.x.cols();
  ADMM_MPNN_REQUIRE(s.x.rows() == m && agg.lambda_in.rows() == m, "step_input: node count mismatch");
  Eigen::MatrixXd raw(m, 5 * n);
  raw << s.x, s.y, s.lambda, agg.lambda_in, agg.y_in;
  Eigen::MatrixXd out(m, 5 * n + 1);
  out.leftCols(5 * n) = nn::instance_norm(raw);
  out.col(5 * n).setConstant(static_cast<double>(m));
  return out;
}

Eigen::VectorXd predict_alpha_local(const nn::MlpParams& head, const Eigen::MatrixXd& inputs) {
  Eigen::VectorXd a(inputs.rows());
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) a(i) = nn::mlp_forward(head, inputs.row(i).transpose());
  return a;
}

double predict_alpha_global(const nn::MlpParams& head, const Eigen::MatrixXd& inputs) {
  const Eigen::VectorXd a = predict_alpha_local(head, inputs);
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) total += a(i);
  return total * (1.0 / static_cast<double>(a.size()));
}

Eigen::VectorXd edge_input(const graph::Graph& g, int i, int j) {
  const auto li = graph::local_degree_profile(g, i);
  const auto lj = graph::local_degree_profile(g, j);
  Eigen::VectorXd in(kEdgeInputDim);
  for (int t = 0; t < kLdpSize; ++t) {
    in(t) = li[static_cast<std::size_t>(t)];
    in(kLdpSize + t) = lj[static_cast<std::size_t>(t)];
  }
  return in;
}

graph::EdgeWeights predict_edge_weights(const nn::MlpParams& head, const graph::Graph& g) {
  graph::EdgeWeights w;
  w.reserve(g.num_edges());
  for (const auto& e : g.edges())
    w.push_back(nn::mlp_forward(head, edge_input(g, e.i, e.j)) + nn::mlp_forward(head, edge_input(g, e.j, e.i)));
  return w;
}

Assembled assemble(const Model& model, const problems::ProblemInstance& inst) {
  model.validate();
  if (model.variant != Variant::baseline && model.dim != inst.n)
    throw ConfigError("model dimension " + std::to_string(model.dim) + " does not match instance dimension " +
                      std::to_string(inst.n));
  const graph::EdgeWeights w =
      model.edge_head ? predict_edge_weights(*model.edge_head, inst.graph) : graph::unit_weights(inst.graph);
  admm::CommMatrix comm = admm::CommMatrix::build(inst.graph, w);
  if (!learns_step_sizes(model.variant)) return {std::move(comm), admm::StepSchedule::constant(1.0)};

  const bool global = model.variant == Variant::global_alpha;
  auto predictor = [heads = model.step_heads, global](int k, const admm::IterState& s,
                                                      const admm::CommMatrix& c) -> Eigen::VectorXd {
    const int m = c.num_nodes();
    if (k < 2) return Eigen::VectorXd::Ones(m);
    const Eigen::MatrixXd in = step_input(s, admm::aggregate_block1(s, c), m);
    const auto& head = heads[static_cast<std::size_t>(k - 2)];
    if (global) return Eigen::VectorXd::Constant(m, predict_alpha_global(head, in));
    return predict_alpha_local(head, in);
  };
  return {std::move(comm), admm::StepSchedule(predictor, model.unroll_steps, 1.0)};
}

ModelLeaves record_model(ad::Tape& tape, const Model& model) {
  ModelLeaves l;
  for (const auto& h : model.step_heads) l.step_heads.push_back(nn::record_params(tape, h));
  if (model.edge_head) l.edge_head = nn::record_params(tape, *model.edge_head);
  return l;
}

void accumulate_grad(const ad::Gradients& g, const ModelLeaves& leaves, std::span<double> out) {
  std::size_t off = 0;
  for (const auto& h : leaves.step_heads) off = nn::accumulate_grad(g, h, out, off);
  if (leaves.edge_head) off = nn::accumulate_grad(g, *leaves.edge_head, out, off);
  ADMM_MPNN_REQUIRE(off == out.size(), "accumulate_grad: gradient buffer size mismatch");
}

namespace {

ad::Value stack_features(const std::vector<ad::Value>& parts) {
  ad::Value out = parts.front();
  for (std::size_t t = 1; t < parts.size(); ++t) out = ad::concat(out, parts[t]);
  return out;
}

}  // namespace

TapeState unroll(ad::Tape& tape, const Model& model, const ModelLeaves& leaves,
                 const problems::ProblemInstance& inst, int K) {
  model.validate();
  const graph::Graph& g = inst.graph;
  const int m = g.num_nodes();
  const int n = inst.n;
  ADMM_MPNN_REQUIRE(m >= 2, "unroll: graph needs at least two nodes");
  if (learns_step_sizes(model.variant) && K > model.unroll_steps)
    throw ConfigError("unroll: K exceeds the model's unroll horizon");
  if (model.variant != Variant::baseline && model.dim != n)
    throw ConfigError("unroll: model dimension does not match instance");

  // Edge weights, predicted once before the first iteration.
  std::vector<ad::Value> neg_w;  // -e per edge, i.e. the off-diagonal P entries
  neg_w.reserve(g.num_edges());
  std::vector<ad::Value> w;
  for (const auto& e : g.edges()) {
    if (leaves.edge_head) {
      const ad::Value a = nn::mlp_forward(*leaves.edge_head, tape.vector(edge_input(g, e.i, e.j)));
      const ad::Value b = nn::mlp_forward(*leaves.edge_head, tape.vector(edge_input(g, e.j, e.i)));
      w.push_back(ad::add(a, b));
    } else {
      w.push_back(tape.scalar(1.0));
    }
    neg_w.push_back(ad::scale(-1.0, w.back()));
  }
  auto P_off = [&](int i, int j) -> const ad::Value& {
    return neg_w[static_cast<std::size_t>(g.edge_index(i, j))];
  };

  std::vector<ad::Value> P_diag, M_diag;
  for (int i = 0; i < m; ++i) {
    const auto& nbrs = g.neighbors(i);
    ad::Value deg = w[static_cast<std::size_t>(g.edge_index(i, nbrs.front()))];
    ad::Value sq = ad::mul(P_off(nbrs.front(), i), P_off(nbrs.front(), i));
    for (std::size_t t = 1; t < nbrs.size(); ++t) {
      deg = ad::add(deg, w[static_cast<std::size_t>(g.edge_index(i, nbrs[t]))]);
      sq = ad::add(sq, ad::mul(P_off(nbrs[t], i), P_off(nbrs[t], i)));
    }
    P_diag.push_back(deg);
    M_diag.push_back(ad::add(sq, ad::mul(deg, deg)));
  }

  std::vector<ad::Value> lin, gram;  // 2 B^T b and 2 B^T B per node
  for (int i = 0; i < m; ++i) {
    const Eigen::VectorXd bi = inst.b.row(i).transpose();
    if (inst.cls == problems::ProblemClass::consensus) {
      lin.push_back(tape.vector(2.0 * bi));
    } else {
      const Eigen::MatrixXd& Bi = inst.B[static_cast<std::size_t>(i)];
      lin.push_back(tape.vector(2.0 * Bi.transpose() * bi));
      gram.push_back(tape.leaf(2.0 * Bi.transpose() * Bi));
    }
  }
  const ad::Value identity = tape.leaf(Eigen::MatrixXd::Identity(n, n));
  const ad::Value one = tape.scalar(1.0);
  const ad::Value node_count = tape.scalar(static_cast<double>(m));

  TapeState s;
  const ad::Value zero = tape.vector(Eigen::VectorXd::Zero(n));
  s.x.assign(static_cast<std::size_t>(m), zero);
  s.y.assign(static_cast<std::size_t>(m), zero);
  s.lambda.assign(static_cast<std::size_t>(m), zero);

  for (int k = 1; k <= K; ++k) try {
    // block 1 aggregation
    std::vector<ad::Value> lam_in, y_in;
    for (int i = 0; i < m; ++i) {
      const auto& nbrs = g.neighbors(i);
      ad::Value la = ad::scale(P_off(nbrs.front(), i), s.lambda[static_cast<std::size_t>(nbrs.front())]);
      ad::Value ya = ad::scale(P_off(nbrs.front(), i), s.y[static_cast<std::size_t>(nbrs.front())]);
      for (std::size_t t = 1; t < nbrs.size(); ++t) {
        const auto j = static_cast<std::size_t>(nbrs[t]);
        la = ad::add(la, ad::scale(P_off(nbrs[t], i), s.lambda[j]));
        ya = ad::add(ya, ad::scale(P_off(nbrs[t], i), s.y[j]));
      }
      lam_in.push_back(la);
      y_in.push_back(ya);
    }

    // step sizes, predicted before the x-update
    std::vector<ad::Value> alpha(static_cast<std::size_t>(m), one);
    if (!leaves.step_heads.empty() && k >= 2 && k <= model.unroll_steps) {
      std::vector<ad::Value> rows;
      for (std::size_t i = 0; i < static_cast<std::size_t>(m); ++i)
        rows.push_back(stack_features({s.x[i], s.y[i], s.lambda[i], lam_in[i], y_in[i]}));
      const auto normed = nn::instance_norm(rows);
      const auto& head = leaves.step_heads[static_cast<std::size_t>(k - 2)];
      for (std::size_t i = 0; i < static_cast<std::size_t>(m); ++i)
        alpha[i] = nn::mlp_forward(head, ad::concat(normed[i], node_count));
      if (model.variant == Variant::global_alpha) {
        ad::Value total = alpha.front();
        for (std::size_t i = 1; i < alpha.size(); ++i) total = ad::add(total, alpha[i]);
        const ad::Value avg = ad::scale(1.0 / static_cast<double>(m), total);
        alpha.assign(static_cast<std::size_t>(m), avg);
      }
    }

    // block 1 update: closed-form x
    std::vector<ad::Value> x_new;
    for (std::size_t i = 0; i < static_cast<std::size_t>(m); ++i) {
      const ad::Value pen = ad::sub(ad::sub(ad::scale(M_diag[i], s.x[i]), ad::scale(P_diag[i], s.y[i])), y_in[i]);
      const ad::Value rhs =
          ad::add(ad::sub(ad::sub(lin[i], ad::scale(P_diag[i], s.lambda[i])), lam_in[i]), ad::scale(alpha[i], pen));
      const ad::Value c = ad::mul(alpha[i], M_diag[i]);
      if (inst.cls == problems::ProblemClass::consensus)
        x_new.push_back(ad::scale(ad::reciprocal(ad::add_const(c, 2.0)), rhs));
      else
        x_new.push_back(ad::spd_solve(ad::add(gram[i], ad::scale(c, identity)), rhs));
    }

    // block 2: aggregate P_ij x_j, then y and lambda
    for (int i = 0; i < m; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const auto& nbrs = g.neighbors(i);
      ad::Value xa = ad::scale(P_off(i, nbrs.front()), x_new[static_cast<std::size_t>(nbrs.front())]);
      for (std::size_t t = 1; t < nbrs.size(); ++t)
        xa = ad::add(xa, ad::scale(P_off(i, nbrs[t]), x_new[static_cast<std::size_t>(nbrs[t])]));
      const double inv_deg = 1.0 / (g.degree(i) + 1.0);
      s.y[ui] = ad::scale(inv_deg, ad::add(xa, ad::scale(P_diag[ui], x_new[ui])));
      s.lambda[ui] = ad::add(s.lambda[ui], ad::scale(alpha[ui], s.y[ui]));
    }
    s.x = std::move(x_new);
  } catch (const NumericError& e) {
    throw NumericError("iteration " + std::to_string(k) + ": " + e.what());
  }
  return s;
}

}  // namespace admm_mpnn::learned
