#include <sstream>

#include "doctest.h"
#include "errors.hpp"
#include "metrics.hpp"
#include "support.hpp"

using namespace admm_mpnn;
using admm::CommMatrix;
using admm::IterState;
using admm::StepSchedule;
using problems::ProblemClass;

namespace {

// Gradient of the local subproblem written with neighbor-indexed sums:
// f_i(x) + sum_{j in N(i) u {i}} lambda_j^T P_ji x + alpha/2 ||P_ji (x - x_i^k) + y_j||^2
Eigen::VectorXd subproblem_gradient(const problems::ProblemInstance& inst, const IterState& s,
                                    const Eigen::MatrixXd& P, int i, double alpha, const Eigen::VectorXd& x) {
  const Eigen::MatrixXd Bi = inst.B_of(i);
  Eigen::VectorXd g = 2.0 * Bi.transpose() * (Bi * x - inst.b.row(i).transpose());
  for (int j = 0; j < inst.num_nodes(); ++j) {
    if (j != i && P(j, i) == 0.0) continue;
    const double p = P(j, i);
    g += p * s.lambda.row(j).transpose();
    g += alpha * p * (p * (x - s.x.row(i).transpose()) + s.y.row(j).transpose());
  }
  return g;
}

Eigen::VectorXd gradient_descent_minimizer(const problems::ProblemInstance& inst, const IterState& s,
                                           const Eigen::MatrixXd& P, int i, double alpha) {
  const Eigen::MatrixXd Bi = inst.B_of(i);
  double curv = 0.0;
  for (int j = 0; j < inst.num_nodes(); ++j) curv += P(j, i) * P(j, i);
  const Eigen::MatrixXd H = 2.0 * Bi.transpose() * Bi + alpha * curv * Eigen::MatrixXd::Identity(inst.n, inst.n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  const double step = 1.0 / es.eigenvalues().maxCoeff();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(inst.n);
  for (int it = 0; it < 1000000; ++it) {
    const Eigen::VectorXd g = subproblem_gradient(inst, s, P, i, alpha, x);
    if (g.norm() < 1e-13) break;
    x -= step * g;
  }
  return x;
}

IterState random_state(const problems::ProblemInstance& inst, Rng& rng) {
  IterState s;
  s.x = test::gaussian(inst.num_nodes(), inst.n, rng, 5.0);
  s.y = test::gaussian(inst.num_nodes(), inst.n, rng, 5.0);
  s.lambda = test::gaussian(inst.num_nodes(), inst.n, rng, 5.0);
  return s;
}

// Deterministic positive per-node step sizes that vary with k and the state.
StepSchedule wobbly_schedule(int horizon) {
  return StepSchedule(
      [](int k, const IterState& s, const CommMatrix& comm) {
        Eigen::VectorXd a(comm.num_nodes());
        for (int i = 0; i < comm.num_nodes(); ++i)
          a(i) = 0.5 + 0.4 * std::sin(1.3 * k + 0.7 * i) + 0.01 * std::tanh(s.x.row(i).sum());
        return a;
      },
      horizon, 1.0);
}

}  // namespace

TEST_SUITE("admm") {
  TEST_CASE("comm matrix scalars") {
    const graph::Graph g = test::path3();
    const auto c = CommMatrix::unit(g);
    CHECK(c.M_diag(1) == 6.0);  // degree 2: 1 + 1 + 2^2
    CHECK(c.M_diag(0) == 2.0);
    CHECK(c.P_diag(1) == 2.0);
    const auto w = CommMatrix::build(graph::Graph(2, {{0, 1}}), {3.0});
    CHECK(w.M_diag(0) == 18.0);
    CHECK_THROWS_AS(CommMatrix::build(graph::Graph(1, {}), {}), ContractError);
    CHECK_THROWS_AS(CommMatrix::build(graph::Graph(2, {{0, 1}}), {-1.0}), NumericError);
  }

  TEST_CASE("init_state") {
    const graph::Graph g = test::path3();
    Eigen::MatrixXd b = Eigen::MatrixXd::Ones(3, 1);
    const auto inst = test::consensus_on(g, b);
    const auto c = CommMatrix::unit(g);
    const auto zero = admm::init_state(inst, c);
    CHECK(zero.x.isZero(0));
    CHECK(zero.y.isZero(0));
    CHECK(zero.lambda.isZero(0));

    Eigen::MatrixXd x0(3, 1);
    x0 << 1, 0, 0;
    const auto s = admm::init_state(inst, c, &x0);
    CHECK(s.y(0, 0) == 0.5);
    CHECK(s.y(1, 0) == doctest::Approx(-1.0 / 3.0));
  }

  TEST_CASE("init_state y matches a per-edge recomputation") {
    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
      auto inst = problems::gen_consensus(rng);
      const auto w = test::random_weights(inst.graph, rng);
      const auto c = CommMatrix::build(inst.graph, w);
      const Eigen::MatrixXd x0 = test::gaussian(8, 2, rng);
      const auto s = admm::init_state(inst, c, &x0);
      Eigen::MatrixXd y = Eigen::MatrixXd::Zero(8, 2);
      for (std::size_t e = 0; e < inst.graph.num_edges(); ++e) {
        const auto [i, j] = inst.graph.edges()[e];
        // P x restricted to edge e: e_ij (x_i - x_j) at i, e_ij (x_j - x_i) at j
        y.row(i) += w[e] * (x0.row(i) - x0.row(j));
        y.row(j) += w[e] * (x0.row(j) - x0.row(i));
      }
      for (int i = 0; i < 8; ++i) y.row(i) /= inst.graph.degree(i) + 1.0;
      CHECK((s.y - y).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }

  TEST_CASE("x-update on a single edge by hand") {
    Eigen::MatrixXd b(2, 2);
    b << 2, 0, 0, 0;
    const auto inst = test::consensus_on(graph::Graph(2, {{0, 1}}), b);
    const auto c = CommMatrix::unit(inst.graph);
    const auto s = admm::init_state(inst, c);
    const auto agg = admm::aggregate_block1(s, c);
    const Eigen::VectorXd x = admm::x_update_node(inst, s, c, agg, 0, 1.0);
    CHECK(x(0) == 1.0);
    CHECK(x(1) == 0.0);
  }

  TEST_CASE("x-update is stationary and matches an iterative minimizer") {
    Rng rng(77);
    std::uniform_real_distribution<double> A(0.05, 5.0);
    for (int t = 0; t < 40; ++t) {
      const auto cls = t % 2 ? ProblemClass::least_squares : ProblemClass::consensus;
      const auto inst = problems::generate(cls, 1000 + static_cast<std::uint64_t>(t));
      const auto w = test::random_weights(inst.graph, rng);
      const auto c = CommMatrix::build(inst.graph, w);
      const auto s = random_state(inst, rng);
      const auto agg = admm::aggregate_block1(s, c);
      const Eigen::MatrixXd P = graph::weighted_laplacian(inst.graph, w);
      for (int i = 0; i < 8; ++i) {
        const double alpha = A(rng);
        const Eigen::VectorXd x = admm::x_update_node(inst, s, c, agg, i, alpha);
        CHECK(subproblem_gradient(inst, s, P, i, alpha, x).norm() <= 1e-8);
        if (i < 2) {
          const Eigen::VectorXd ref = gradient_descent_minimizer(inst, s, P, i, alpha);
          CHECK((x - ref).cwiseAbs().maxCoeff() <= 1e-6);
        }
      }
    }
  }

  TEST_CASE("conjugate-gradient x-update agrees with the closed form") {
    Rng rng(2);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto inst = problems::generate(ProblemClass::least_squares, seed);
      const auto c = CommMatrix::unit(inst.graph);
      const auto s = random_state(inst, rng);
      const auto agg = admm::aggregate_block1(s, c);
      for (int i = 0; i < 8; ++i) {
        const auto a = admm::x_update_node(inst, s, c, agg, i, 0.7);
        const auto b = admm::x_update_node(inst, s, c, agg, i, 0.7, admm::XSolver::conjugate_gradient);
        CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-9);
      }
    }
  }

  TEST_CASE("lambda update adds alpha times the new y") {
    Eigen::MatrixXd b(2, 2);
    b << 3, -1, 0, 4;
    const auto inst = test::consensus_on(graph::Graph(2, {{0, 1}}), b);
    const auto c = CommMatrix::unit(inst.graph);
    auto s = admm::init_state(inst, c);
    s.lambda.row(0) << 1, 1;
    const auto next = admm::iterate_mpnn(inst, s, c, StepSchedule::constant(2.0));
    CHECK((next.lambda.row(0) - (s.lambda.row(0) + 2.0 * next.y.row(0))).norm() == 0.0);
    const auto direct = admm::iterate_direct(inst, s, c, StepSchedule::constant(2.0));
    CHECK((direct.lambda - next.lambda).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("singleton aggregation on a one-edge graph") {
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(2, 2);
    const auto inst = test::consensus_on(graph::Graph(2, {{0, 1}}), b);
    const auto c = CommMatrix::build(inst.graph, {2.5});
    IterState s;
    s.x = Eigen::MatrixXd::Zero(2, 2);
    s.y = Eigen::MatrixXd::Zero(2, 2);
    s.lambda = Eigen::MatrixXd::Zero(2, 2);
    s.y.row(1) << 1, 2;
    s.lambda.row(1) << -3, 4;
    const auto agg = admm::aggregate_block1(s, c);
    CHECK(agg.y_in.row(0) == (-2.5 * s.y.row(1)).eval());
    CHECK(agg.lambda_in.row(0) == (-2.5 * s.lambda.row(1)).eval());
    CHECK(agg.y_in.row(1).isZero(0));
  }

  TEST_CASE("direct and message-passing forms agree") {
    Rng rng(31);
    for (int t = 0; t < 30; ++t) {
      const auto cls = t % 2 ? ProblemClass::least_squares : ProblemClass::consensus;
      const auto inst = problems::generate(cls, 500 + static_cast<std::uint64_t>(t));
      const auto c = CommMatrix::build(inst.graph, test::random_weights(inst.graph, rng));
      const auto sched = wobbly_schedule(12);
      IterState a = admm::init_state(inst, c), b = a;
      double worst = 0.0;
      for (int k = 0; k < 20; ++k) {
        a = admm::iterate_direct(inst, a, c, sched);
        b = admm::iterate_mpnn(inst, b, c, sched);
        worst = std::max({worst, (a.x - b.x).cwiseAbs().maxCoeff(), (a.y - b.y).cwiseAbs().maxCoeff(),
                          (a.lambda - b.lambda).cwiseAbs().maxCoeff()});
      }
      CHECK(worst <= 1e-10);
      CHECK(a.k == 20);
    }
  }

  TEST_CASE("message passing is permutation equivariant") {
    Rng rng(8);
    for (int t = 0; t < 10; ++t) {
      const auto cls = t % 2 ? ProblemClass::least_squares : ProblemClass::consensus;
      const auto inst = problems::generate(cls, 40 + static_cast<std::uint64_t>(t));
      const auto w = test::random_weights(inst.graph, rng);
      const auto perm = test::random_perm(8, rng);
      const auto pinst = problems::permute(inst, perm);
      const auto pw = graph::permute(inst.graph, w, perm);
      const auto c = CommMatrix::build(inst.graph, w);
      const auto pc = CommMatrix::build(pw.graph, pw.weights);
      const auto r = admm::run(inst, c, StepSchedule::constant(0.8), 15, false);
      const auto pr = admm::run(pinst, pc, StepSchedule::constant(0.8), 15, false);
      CHECK((test::permute_rows(r.state.x, perm) - pr.state.x).cwiseAbs().maxCoeff() <= 1e-9);
      CHECK((test::permute_rows(r.state.lambda, perm) - pr.state.lambda).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }

  TEST_CASE("step schedule") {
    const auto c = CommMatrix::unit(test::path3());
    IterState s;
    s.x = Eigen::MatrixXd::Zero(3, 1);
    const auto sched = StepSchedule([](int, const IterState&, const CommMatrix&) { return Eigen::VectorXd::Constant(3, 0.25); },
                                    10, 1.0);
    CHECK(sched.alphas(10, s, c)(0) == 0.25);
    CHECK(sched.alphas(15, s, c)(0) == 1.0);
    const auto bad =
        StepSchedule([](int, const IterState&, const CommMatrix&) { return Eigen::VectorXd::Constant(3, -1.0); }, 10);
    CHECK_THROWS_AS(bad.alphas(2, s, c), NumericError);
    CHECK_THROWS_AS(StepSchedule::constant(0.0), ConfigError);
  }

  TEST_CASE("run bookkeeping") {
    const auto inst = problems::generate(ProblemClass::consensus, 3);
    const auto c = CommMatrix::unit(inst.graph);
    const auto zero = admm::run(inst, c, StepSchedule::constant(1.0), 0, true);
    CHECK(zero.state.x.isZero(0));
    CHECK(zero.trace.size() == 1);
    const auto r = admm::run(inst, c, StepSchedule::constant(1.0), 10, true);
    CHECK(r.trace.size() == 11);
    CHECK(r.trace.back().k == 10);
    CHECK((r.state.x - inst.baseline_xK).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(r.trace.back().error == doctest::Approx(evaluation::error_metric(inst.baseline_xK, inst.x_star)));
  }

  TEST_CASE("equal b_i: error shrinks towards zero") {
    Rng rng(6);
    const auto g = graph::erdos_renyi(8, 0.5, rng);
    const Eigen::MatrixXd b = Eigen::RowVector2d(3.0, -7.0).replicate(8, 1);
    const auto inst = test::consensus_on(g, b);
    const auto r = admm::run(inst, CommMatrix::unit(g), StepSchedule::constant(1.0), 200, true);
    const double e10 = r.trace[10].error, e50 = r.trace[50].error, e200 = r.trace[200].error;
    CHECK(e10 > e50);
    CHECK(e50 > e200);
    CHECK(e200 <= 1e-8);
  }

  TEST_CASE("converged dual is a fixed point") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto inst = problems::generate(ProblemClass::consensus, 70 + seed);
      const auto c = CommMatrix::unit(inst.graph);
      const auto longrun = admm::run(inst, c, StepSchedule::constant(1.0), 3000, false);
      IterState s;
      s.x = inst.x_star.transpose().replicate(8, 1);
      s.y = Eigen::MatrixXd::Zero(8, 2);
      s.lambda = longrun.state.lambda;
      const auto next = admm::iterate_mpnn(inst, s, c, StepSchedule::constant(1.0));
      CHECK((next.x - s.x).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }

  TEST_CASE("trace csv format") {
    std::ostringstream os;
    admm::write_trace_csv(os, {{0, 1.5, 0.25, 0.125}});
    CHECK(os.str() == "k,error,consensus,relative_objective\n0,1.5,0.25,0.125\n");
  }
}
