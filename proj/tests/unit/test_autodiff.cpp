#include <functional>

#include "autodiff.hpp"
#include "doctest.h"
#include "errors.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace admm_mpnn;
using ad::Matrix;
using ad::Tape;
using ad::Value;

namespace {

using Build = std::function<Value(Tape&, const std::vector<Value>&)>;

// Reduces a vector-valued op to a scalar by a fixed random projection.
Value project(Tape& t, const Value& out, const Matrix& w) {
  if (out.rows() == 1 && out.cols() == 1) return out;
  return ad::dot(out, t.leaf(w));
}

std::vector<double> flatten(const std::vector<Matrix>& xs) {
  std::vector<double> out;
  for (const auto& x : xs) out.insert(out.end(), x.data(), x.data() + x.size());
  return out;
}

std::vector<Matrix> unflatten(std::span<const double> flat, const std::vector<Matrix>& like) {
  std::vector<Matrix> out;
  std::size_t off = 0;
  for (const auto& x : like) {
    Matrix m(x.rows(), x.cols());
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
              flat.begin() + static_cast<std::ptrdiff_t>(off + static_cast<std::size_t>(x.size())), m.data());
    off += static_cast<std::size_t>(x.size());
    out.push_back(std::move(m));
  }
  return out;
}

// Max relative error between the tape gradient and central differences.
double check_op(const Build& build, const std::vector<Matrix>& inputs, std::uint64_t seed) {
  Rng rng(seed);
  Matrix w;
  {
    Tape t;
    std::vector<Value> leaves;
    for (const auto& x : inputs) leaves.push_back(t.leaf(x));
    const Value out = build(t, leaves);
    w = test::gaussian(out.rows(), out.cols(), rng);
  }
  auto f = [&](std::span<const double> flat) {
    Tape t;
    std::vector<Value> leaves;
    for (const auto& x : unflatten(flat, inputs)) leaves.push_back(t.leaf(x));
    return project(t, build(t, leaves), w).scalar();
  };
  Tape t;
  std::vector<Value> leaves;
  for (const auto& x : inputs) leaves.push_back(t.leaf(x));
  const Value root = project(t, build(t, leaves), w);
  const auto g = t.backward(root);
  std::vector<Matrix> adj;
  for (const auto& l : leaves) adj.push_back(g[l]);
  const auto analytic = flatten(adj);
  const auto fd = ad::finite_difference(f, flatten(inputs), 1e-5);
  return test::max_rel_error(analytic, fd, 1e-6);
}

Matrix away_from_zero(Matrix m) {
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (std::abs(m.data()[i]) < 0.1) m.data()[i] += m.data()[i] < 0 ? -0.2 : 0.2;
  return m;
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("every primitive matches finite differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed);
      const Matrix a = away_from_zero(test::gaussian(4, 1, rng));
      const Matrix b = away_from_zero(test::gaussian(4, 1, rng));
      const Matrix s = test::gaussian(1, 1, rng);
      const Matrix W = test::gaussian(3, 4, rng);
      const Matrix pos = a.cwiseAbs().array() + 0.5;
      const Matrix G = test::gaussian(3, 3, rng);
      const Matrix spd = G * G.transpose() + Matrix::Identity(3, 3);
      const Matrix r = test::gaussian(3, 1, rng);

      struct Case {
        const char* name;
        Build build;
        std::vector<Matrix> inputs;
      };
      const std::vector<Case> cases = {
          {"add", [](Tape&, const std::vector<Value>& v) { return ad::add(v[0], v[1]); }, {a, b}},
          {"sub", [](Tape&, const std::vector<Value>& v) { return ad::sub(v[0], v[1]); }, {a, b}},
          {"add_const", [](Tape&, const std::vector<Value>& v) { return ad::add_const(v[0], 1.5); }, {a}},
          {"scale_const", [](Tape&, const std::vector<Value>& v) { return ad::scale(-2.5, v[0]); }, {a}},
          {"scale_by", [](Tape&, const std::vector<Value>& v) { return ad::scale(v[0], v[1]); }, {s, b}},
          {"mul", [](Tape&, const std::vector<Value>& v) { return ad::mul(v[0], v[1]); }, {a, b}},
          {"matvec", [](Tape&, const std::vector<Value>& v) { return ad::matvec(v[0], v[1]); }, {W, a}},
          {"dot", [](Tape&, const std::vector<Value>& v) { return ad::dot(v[0], v[1]); }, {a, b}},
          {"sum", [](Tape&, const std::vector<Value>& v) { return ad::sum(v[0]); }, {a}},
          {"mean", [](Tape&, const std::vector<Value>& v) { return ad::mean(v[0]); }, {a}},
          {"squared_norm", [](Tape&, const std::vector<Value>& v) { return ad::squared_norm(v[0]); }, {a}},
          {"relu", [](Tape&, const std::vector<Value>& v) { return ad::relu(v[0]); }, {a}},
          {"softplus", [](Tape&, const std::vector<Value>& v) { return ad::softplus(v[0]); }, {a}},
          {"reciprocal", [](Tape&, const std::vector<Value>& v) { return ad::reciprocal(v[0]); }, {pos}},
          {"sqrt", [](Tape&, const std::vector<Value>& v) { return ad::sqrt(v[0]); }, {pos}},
          {"concat", [](Tape&, const std::vector<Value>& v) { return ad::concat(v[0], v[1]); }, {a, r}},
          {"slice", [](Tape&, const std::vector<Value>& v) { return ad::slice(v[0], 1, 2); }, {a}},
          {"spd_solve rhs", [&spd](Tape& t, const std::vector<Value>& v) { return ad::spd_solve(t.leaf(spd), v[0]); }, {r}},
          {"spd_solve scaled", [&spd](Tape& t, const std::vector<Value>& v) {
             return ad::spd_solve(ad::add(t.leaf(spd), ad::scale(v[0], t.leaf(Matrix::Identity(3, 3)))), v[1]);
           }, {pos.topRows(1), r}},
      };
      for (const auto& c : cases) {
        CAPTURE(c.name);
        CHECK(check_op(c.build, c.inputs, seed + 100) < 1e-6);
      }
    }
  }

  TEST_CASE("spd_solve matrix adjoint under symmetric perturbations") {
    Rng rng(4);
    const Matrix G = test::gaussian(3, 3, rng);
    const Matrix A = G * G.transpose() + Matrix::Identity(3, 3);
    const Matrix rhs = test::gaussian(3, 1, rng), w = test::gaussian(3, 1, rng);
    Tape t;
    const Value Al = t.leaf(A);
    const Value root = ad::dot(ad::spd_solve(Al, t.leaf(rhs)), t.leaf(w));
    const Matrix Abar = t.backward(root)[Al];
    const double h = 1e-5;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j <= i; ++j) {
        Matrix E = Matrix::Zero(3, 3);
        E(i, j) = E(j, i) = 1.0;
        const double up = w.col(0).dot((A + h * E).llt().solve(rhs).col(0));
        const double dn = w.col(0).dot((A - h * E).llt().solve(rhs).col(0));
        const double fd = (up - dn) / (2 * h);
        const double an = i == j ? Abar(i, i) : Abar(i, j) + Abar(j, i);
        CHECK(an == doctest::Approx(fd).epsilon(1e-7));
      }
  }

  TEST_CASE("spd_solve with 2I halves the rhs adjoint") {
    Tape t;
    const Value A = t.leaf(2.0 * Matrix::Identity(2, 2));
    const Value r = t.vector(Eigen::Vector2d(1.0, -3.0));
    const auto g = t.backward(ad::sum(ad::spd_solve(A, r)));
    CHECK(g[r](0, 0) == doctest::Approx(0.5));
    CHECK(g[r](1, 0) == doctest::Approx(0.5));
    const auto fd = ad::finite_difference(
        [](std::span<const double> x) { return 0.5 * x[0]; }, std::vector<double>{1.0}, 1e-5);
    CHECK(fd[0] == doctest::Approx(0.5).epsilon(1e-10));
  }

  TEST_CASE("softplus derivative at zero is one half") {
    Tape t;
    const Value x = t.scalar(0.0);
    const Value y = ad::softplus(x);
    CHECK(y.scalar() == doctest::Approx(std::log(2.0)));
    CHECK(t.backward(y).scalar(x) == doctest::Approx(0.5));
    CHECK(ad::softplus(-800.0) >= 0.0);
    CHECK(ad::softplus(800.0) == 800.0);
    CHECK(ad::sigmoid(-800.0) == doctest::Approx(0.0));
  }

  TEST_CASE("gradient of a squared distance") {
    Tape t;
    const Eigen::Vector3d xv(1, 2, 3), cv(0.5, -1, 4);
    const Value x = t.vector(xv);
    const auto g = t.backward(ad::squared_norm(ad::sub(x, t.vector(cv))));
    CHECK((g[x] - 2.0 * (xv - cv)).norm() <= 1e-15);
  }

  TEST_CASE("leaf root and unused leaves") {
    Tape t;
    const Value x = t.scalar(3.0);
    const Value unused = t.vector(Eigen::Vector2d(1, 1));
    const auto g = t.backward(x);
    CHECK(g.scalar(x) == 1.0);
    CHECK(g[unused].isZero(0));
    CHECK(g[unused].rows() == 2);
  }

  TEST_CASE("backward is linear in the seed") {
    Rng rng(12);
    Tape t;
    const Value x = t.vector(test::gaussian(4, 1, rng));
    const Value W = t.leaf(test::gaussian(4, 4, rng));
    const Value root = ad::sum(ad::softplus(ad::matvec(W, x)));
    const auto g1 = t.backward(root);
    const auto g3 = t.backward(root, -3.0);
    CHECK((g3[x] + 3.0 * g1[x]).norm() <= 1e-13);
    CHECK((g3[W] + 3.0 * g1[W]).norm() <= 1e-13);
  }

  TEST_CASE("non-finite values abort recording") {
    Tape t;
    const Value x = t.vector(Eigen::Vector2d(0.0, 1.0));
    CHECK_THROWS_AS(ad::reciprocal(x), NumericError);
    CHECK_THROWS_AS(t.scalar(std::nan("")), NumericError);
    CHECK_THROWS_AS(ad::add(x, t.scalar(1.0)), ContractError);
  }

  TEST_CASE("finite_difference") {
    const auto sq = ad::finite_difference([](std::span<const double> t) { return t[0] * t[0]; },
                                          std::vector<double>{3.0}, 1e-5);
    CHECK(std::abs(sq[0] - 6.0) <= 1e-8);
    const auto c = ad::finite_difference([](std::span<const double>) { return 4.2; }, std::vector<double>{1, 2});
    CHECK(c == std::vector<double>{0.0, 0.0});
    CHECK_THROWS_AS(ad::finite_difference([](std::span<const double>) { return 0.0; }, std::vector<double>{1}, 0.0),
                    ConfigError);
  }
}
