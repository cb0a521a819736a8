#include "autodiff.hpp"

#include <cmath>
#include <string>

#include "errors.hpp"

namespace admm_mpnn::ad {

const Matrix& Value::value() const {
  ADMM_MPNN_REQUIRE(tape_ != nullptr, "value(): handle is not attached to a tape");
  return tape_->value_of(id_);
}

double Value::scalar() const {
  const Matrix& v = value();
  ADMM_MPNN_REQUIRE(v.rows() == 1 && v.cols() == 1, "scalar(): value is not 1x1");
  return v(0, 0);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Value Tape::leaf(Matrix v) { return record(Op::leaf, std::move(v), kNone); }

Value Tape::scalar(double v) { return leaf(Matrix::Constant(1, 1, v)); }

Value Tape::vector(const Eigen::VectorXd& v) { return leaf(Matrix(v)); }

Value Tape::record(Op op, Matrix value, std::size_t a, std::size_t b, double aux, Eigen::Index offset) {
  if (!value.allFinite())
    throw NumericError("autodiff: non-finite value produced by op " + std::to_string(static_cast<int>(op)) +
                       " at node " + std::to_string(nodes_.size()));
  nodes_.push_back(Node{op, a, b, aux, offset, std::move(value)});
  return Value(this, nodes_.size() - 1);
}

namespace {

Tape& tape_of(const Value& a) {
  ADMM_MPNN_REQUIRE(a.valid(), "autodiff: detached value");
  return *a.tape();
}

Tape& tape_of(const Value& a, const Value& b) {
  ADMM_MPNN_REQUIRE(a.valid() && b.valid() && a.tape() == b.tape(), "autodiff: values live on different tapes");
  return *a.tape();
}

void require_same_shape(const Value& a, const Value& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ContractError(std::string("autodiff: shape mismatch in ") + op);
}

void require_column(const Value& a, const char* op) {
  if (a.cols() != 1) throw ContractError(std::string("autodiff: ") + op + " expects a column vector");
}

}  // namespace

Value add(const Value& a, const Value& b) {
  require_same_shape(a, b, "add");
  return tape_of(a, b).record(Op::add, a.value() + b.value(), a.id(), b.id());
}

Value sub(const Value& a, const Value& b) {
  require_same_shape(a, b, "sub");
  return tape_of(a, b).record(Op::sub, a.value() - b.value(), a.id(), b.id());
}

Value add_const(const Value& a, double c) {
  return tape_of(a).record(Op::add_const, (a.value().array() + c).matrix(), a.id(), Tape::kNone, c);
}

Value scale(double c, const Value& a) {
  return tape_of(a).record(Op::scale_const, c * a.value(), a.id(), Tape::kNone, c);
}

Value scale(const Value& s, const Value& v) {
  const double c = s.scalar();
  return tape_of(s, v).record(Op::scale_by, c * v.value(), s.id(), v.id());
}

Value mul(const Value& a, const Value& b) {
  require_same_shape(a, b, "mul");
  return tape_of(a, b).record(Op::mul, a.value().cwiseProduct(b.value()), a.id(), b.id());
}

Value matvec(const Value& W, const Value& x) {
  require_column(x, "matvec");
  if (W.cols() != x.rows()) throw ContractError("autodiff: shape mismatch in matvec");
  return tape_of(W, x).record(Op::matvec, W.value() * x.value(), W.id(), x.id());
}

Value dot(const Value& a, const Value& b) {
  require_same_shape(a, b, "dot");
  const double d = a.value().cwiseProduct(b.value()).sum();
  return tape_of(a, b).record(Op::dot, Matrix::Constant(1, 1, d), a.id(), b.id());
}

Value sum(const Value& a) {
  return tape_of(a).record(Op::sum, Matrix::Constant(1, 1, a.value().sum()), a.id());
}

Value mean(const Value& a) {
  return tape_of(a).record(Op::mean, Matrix::Constant(1, 1, a.value().mean()), a.id());
}

Value squared_norm(const Value& a) {
  return tape_of(a).record(Op::squared_norm, Matrix::Constant(1, 1, a.value().squaredNorm()), a.id());
}

Value relu(const Value& a) {
  return tape_of(a).record(Op::relu, a.value().cwiseMax(0.0), a.id());
}

Value softplus(const Value& a) {
  return tape_of(a).record(Op::softplus, a.value().unaryExpr([](double x) { return softplus(x); }), a.id());
}

Value reciprocal(const Value& a) {
  if ((a.value().array() == 0.0).any()) throw NumericError("autodiff: reciprocal of zero");
  return tape_of(a).record(Op::reciprocal, a.value().cwiseInverse(), a.id());
}

Value sqrt(const Value& a) {
  if ((a.value().array() <= 0.0).any()) throw NumericError("autodiff: sqrt of non-positive value");
  return tape_of(a).record(Op::sqrt, a.value().cwiseSqrt(), a.id());
}

Value concat(const Value& a, const Value& b) {
  if (a.cols() != b.cols()) throw ContractError("autodiff: column mismatch in concat");
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a.value(), b.value();
  return tape_of(a, b).record(Op::concat, std::move(out), a.id(), b.id());
}

Value slice(const Value& a, Eigen::Index start, Eigen::Index len) {
  if (start < 0 || len < 0 || start + len > a.rows()) throw ContractError("autodiff: slice out of range");
  return tape_of(a).record(Op::slice, a.value().middleRows(start, len), a.id(), Tape::kNone, 0.0, start);
}

Value spd_solve(const Value& A, const Value& rhs) {
  require_column(rhs, "spd_solve");
  if (A.rows() != A.cols() || A.rows() != rhs.rows()) throw ContractError("autodiff: shape mismatch in spd_solve");
  Eigen::LLT<Matrix> llt(A.value());
  if (llt.info() != Eigen::Success) throw NumericError("autodiff: spd_solve matrix is not positive definite");
  return tape_of(A, rhs).record(Op::spd_solve, llt.solve(rhs.value()), A.id(), rhs.id());
}

Gradients Tape::backward(const Value& root, double seed) const {
  ADMM_MPNN_REQUIRE(root.tape() == this, "backward: root belongs to another tape");
  const Matrix& rv = nodes_[root.id()].value;
  ADMM_MPNN_REQUIRE(rv.rows() == 1 && rv.cols() == 1, "backward: root must be a scalar");

  Gradients g;
  g.adj_.resize(nodes_.size());
  std::vector<char> live(nodes_.size(), 0);
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    g.adj_[i] = Matrix::Zero(nodes_[i].value.rows(), nodes_[i].value.cols());
  g.adj_[root.id()](0, 0) = seed;
  live[root.id()] = 1;

  auto& adj = g.adj_;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    if (!live[id]) continue;
    const Node& n = nodes_[id];
    if (n.op == Op::leaf) continue;
    const Matrix& go = adj[id];
    if (n.a != kNone) live[n.a] = 1;
    if (n.b != kNone) live[n.b] = 1;
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::add:
        adj[n.a] += go;
        adj[n.b] += go;
        break;
      case Op::sub:
        adj[n.a] += go;
        adj[n.b] -= go;
        break;
      case Op::add_const:
        adj[n.a] += go;
        break;
      case Op::scale_const:
        adj[n.a] += n.aux * go;
        break;
      case Op::scale_by: {
        const Matrix& v = nodes_[n.b].value;
        adj[n.a](0, 0) += go.cwiseProduct(v).sum();
        adj[n.b] += nodes_[n.a].value(0, 0) * go;
        break;
      }
      case Op::mul:
        adj[n.a] += go.cwiseProduct(nodes_[n.b].value);
        adj[n.b] += go.cwiseProduct(nodes_[n.a].value);
        break;
      case Op::matvec:
        adj[n.a] += go * nodes_[n.b].value.transpose();
        adj[n.b] += nodes_[n.a].value.transpose() * go;
        break;
      case Op::dot:
        adj[n.a] += go(0, 0) * nodes_[n.b].value;
        adj[n.b] += go(0, 0) * nodes_[n.a].value;
        break;
      case Op::sum:
        adj[n.a].array() += go(0, 0);
        break;
      case Op::mean:
        adj[n.a].array() += go(0, 0) / static_cast<double>(nodes_[n.a].value.size());
        break;
      case Op::squared_norm:
        adj[n.a] += 2.0 * go(0, 0) * nodes_[n.a].value;
        break;
      case Op::relu:
        adj[n.a].array() += go.array() * (nodes_[n.a].value.array() > 0.0).cast<double>();
        break;
      case Op::softplus:
        adj[n.a].array() += go.array() * nodes_[n.a].value.array().unaryExpr([](double x) { return sigmoid(x); });
        break;
      case Op::reciprocal:
        adj[n.a].array() -= go.array() * n.value.array().square();
        break;
      case Op::sqrt:
        adj[n.a].array() += go.array() * 0.5 / n.value.array();
        break;
      case Op::concat: {
        const Eigen::Index ra = nodes_[n.a].value.rows();
        adj[n.a] += go.topRows(ra);
        adj[n.b] += go.bottomRows(go.rows() - ra);
        break;
      }
      case Op::slice:
        adj[n.a].middleRows(n.offset, go.rows()) += go;
        break;
      case Op::spd_solve: {
        // x = A^{-1} r:  r_bar = A^{-1} g,  A_bar = -r_bar x^T (symmetrized)
        Eigen::LLT<Matrix> llt(nodes_[n.a].value);
        const Matrix r_bar = llt.solve(go);
        const Matrix outer = r_bar * n.value.transpose();
        adj[n.a] -= 0.5 * (outer + outer.transpose());
        adj[n.b] += r_bar;
        break;
      }
    }
  }
  return g;
}

std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& f,
                                      std::span<const double> theta, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_difference: h must be positive");
  std::vector<double> t(theta.begin(), theta.end());
  std::vector<double> g(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double t0 = t[i];
    t[i] = t0 + h;
    const double up = f(t);
    t[i] = t0 - h;
    const double down = f(t);
    t[i] = t0;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace admm_mpnn::ad
