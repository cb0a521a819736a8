#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace admm_mpnn::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

// Handle to a node recorded on a Tape. Vectors are n x 1 matrices, scalars 1 x 1.
class Value {
 public:
  Value() = default;

  const Matrix& value() const;
  double scalar() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Value(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Adjoints of every recorded node after a backward sweep.
class Gradients {
 public:
  const Matrix& operator[](const Value& v) const { return adj_.at(v.id()); }
  double scalar(const Value& v) const { return adj_.at(v.id())(0, 0); }

 private:
  friend class Tape;
  std::vector<Matrix> adj_;
};

enum class Op : std::uint8_t {
  leaf,
  add,
  sub,
  add_const,
  scale_const,
  scale_by,
  mul,
  matvec,
  dot,
  sum,
  mean,
  squared_norm,
  relu,
  softplus,
  reciprocal,
  sqrt,
  concat,
  slice,
  spd_solve,
};

// Records one loss evaluation. Not thread-safe; use one tape per thread.
class Tape {
 public:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  Value leaf(Matrix v);
  Value scalar(double v);
  Value vector(const Eigen::VectorXd& v);

  // Reverse sweep from a scalar root in descending node order.
  Gradients backward(const Value& root, double seed = 1.0) const;

  std::size_t size() const { return nodes_.size(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

  const Matrix& value_of(std::size_t id) const { return nodes_[id].value; }
  Value record(Op op, Matrix value, std::size_t a, std::size_t b = kNone, double aux = 0.0,
               Eigen::Index offset = 0);

 private:
  struct Node {
    Op op = Op::leaf;
    std::size_t a = kNone;
    std::size_t b = kNone;
    double aux = 0.0;
    Eigen::Index offset = 0;
    Matrix value;
  };
  std::vector<Node> nodes_;
};

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value add_const(const Value& a, double c);
Value scale(double c, const Value& a);
// s is 1 x 1; result has the shape of v.
Value scale(const Value& s, const Value& v);
Value mul(const Value& a, const Value& b);
Value matvec(const Value& W, const Value& x);
Value dot(const Value& a, const Value& b);
Value sum(const Value& a);
Value mean(const Value& a);
Value squared_norm(const Value& a);
Value relu(const Value& a);
Value softplus(const Value& a);
Value reciprocal(const Value& a);
Value sqrt(const Value& a);
// Stacks rows of a above rows of b.
Value concat(const Value& a, const Value& b);
Value slice(const Value& a, Eigen::Index start, Eigen::Index len);
// x = A^{-1} rhs for symmetric positive definite A.
Value spd_solve(const Value& A, const Value& rhs);

inline Value operator+(const Value& a, const Value& b) { return add(a, b); }
inline Value operator-(const Value& a, const Value& b) { return sub(a, b); }
inline Value operator-(const Value& a) { return scale(-1.0, a); }
inline Value operator*(double c, const Value& a) { return scale(c, a); }

double softplus(double x);
double sigmoid(double x);

// Central differences (f(t + h e_i) - f(t - h e_i)) / 2h for every coordinate.
std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& f,
                                      std::span<const double> theta, double h = 1e-5);

}  // namespace admm_mpnn::ad
