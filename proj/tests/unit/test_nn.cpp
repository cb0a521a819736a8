#include "doctest.h"
#include "errors.hpp"
#include "gradcheck.hpp"
#include "nn.hpp"
#include "support.hpp"

using namespace admm_mpnn;
using nn::MlpParams;

namespace {

double naive_forward(const MlpParams& p, const Eigen::VectorXd& x) {
  double out = p.b2;
  for (int h = 0; h < p.W1.rows(); ++h) {
    double z = p.b1(h);
    for (int c = 0; c < p.W1.cols(); ++c) z += p.W1(h, c) * x(c);
    out += p.W2(h) * (z > 0.0 ? z : 0.0);
  }
  return std::log(1.0 + std::exp(out));
}

MlpParams random_params(int in, Rng& rng) {
  MlpParams p = nn::init_params(in, rng);
  p.b1 = test::gaussian(nn::kHiddenUnits, 1, rng, 0.3);
  p.b2 = 0.1;
  return p;
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("parameter counts") {
    CHECK(nn::param_count(11) == 417);
    CHECK(nn::param_count(10) == 385);
    CHECK(MlpParams::zeros(11).param_count() == 417);
    Rng rng(0);
    CHECK(nn::flatten(nn::init_params(10, rng)).size() == 385);
  }

  TEST_CASE("zero parameters give ln 2") {
    const auto p = MlpParams::zeros(11);
    Rng rng(1);
    CHECK(nn::mlp_forward(p, test::gaussian(11, 1, rng)) == doctest::Approx(0.693147180559945));
  }

  TEST_CASE("forward is positive and matches a layer-by-layer recomputation") {
    Rng rng(2);
    for (int t = 0; t < 1000; ++t) {
      const auto p = random_params(11, rng);
      const Eigen::VectorXd x = test::gaussian(11, 1, rng, 3.0);
      const double y = nn::mlp_forward(p, x);
      CHECK(y > 0.0);
      if (t < 50) CHECK(y == doctest::Approx(naive_forward(p, x)).epsilon(1e-12));
    }
  }

  TEST_CASE("init is seed-deterministic with zero biases") {
    Rng a(5), b(5);
    const auto p = nn::init_params(11, a), q = nn::init_params(11, b);
    CHECK(nn::flatten(p) == nn::flatten(q));
    CHECK(p.b1.isZero(0));
    CHECK(p.b2 == 0.0);
    const double limit = std::sqrt(6.0 / (11 + 32));
    CHECK(p.W1.cwiseAbs().maxCoeff() <= limit);
  }

  TEST_CASE("flatten and assign_flat round trip") {
    Rng rng(3);
    const auto p = random_params(10, rng);
    const auto flat = nn::flatten(p);
    CHECK(flat[1] == p.W1(0, 1));  // row-major W1
    auto q = MlpParams::zeros(10);
    CHECK(nn::assign_flat(q, flat) == flat.size());
    CHECK(nn::flatten(q) == flat);
  }

  TEST_CASE("instance_norm examples") {
    Eigen::MatrixXd two(2, 1);
    two << 1, 3;
    const auto out = nn::instance_norm(two, 1e-14);
    CHECK(out(0, 0) == doctest::Approx(-1.0));
    CHECK(out(1, 0) == doctest::Approx(1.0));
    CHECK(nn::instance_norm(Eigen::MatrixXd::Constant(5, 2, 7.0)).cwiseAbs().maxCoeff() <= 1e-12);

    Rng rng(4);
    const Eigen::MatrixXd X = test::gaussian(8, 10, rng, 4.0);
    const Eigen::MatrixXd N = nn::instance_norm(X);
    for (int c = 0; c < 10; ++c) {
      const double mu = N.col(c).mean();
      CHECK(std::abs(mu) <= 1e-12);
      CHECK((N.col(c).array() - mu).square().mean() <= 1.0 + 1e-6);
    }
    const auto perm = test::random_perm(8, rng);
    CHECK((nn::instance_norm(test::permute_rows(X, perm)) - test::permute_rows(N, perm)).cwiseAbs().maxCoeff() <=
          1e-12);
  }

  TEST_CASE("tape forward and instance_norm agree with the plain versions") {
    Rng rng(6);
    const auto p = random_params(11, rng);
    const Eigen::MatrixXd X = test::gaussian(8, 11, rng);
    ad::Tape t;
    const auto leaves = nn::record_params(t, p);
    std::vector<ad::Value> rows;
    for (int i = 0; i < 8; ++i) rows.push_back(t.vector(X.row(i).transpose()));
    const auto normed = nn::instance_norm(rows);
    const Eigen::MatrixXd plain = nn::instance_norm(X);
    for (int i = 0; i < 8; ++i) {
      CHECK((normed[static_cast<std::size_t>(i)].value().transpose() - plain.row(i)).norm() <= 1e-14);
      CHECK(nn::mlp_forward(leaves, rows[static_cast<std::size_t>(i)]).scalar() ==
            doctest::Approx(nn::mlp_forward(p, X.row(i).transpose())).epsilon(1e-14));
    }
  }

  TEST_CASE("MLP gradient matches finite differences") {
    Rng rng(7);
    for (int t = 0; t < 5; ++t) {
      const auto p = random_params(11, rng);
      const Eigen::VectorXd x = test::gaussian(11, 1, rng);
      ad::Tape tape;
      const auto leaves = nn::record_params(tape, p);
      const auto g = tape.backward(nn::mlp_forward(leaves, tape.vector(x)));
      std::vector<double> analytic(p.param_count(), 0.0);
      nn::accumulate_grad(g, leaves, analytic);
      const auto fd = ad::finite_difference(
          [&](std::span<const double> flat) {
            auto q = MlpParams::zeros(11);
            nn::assign_flat(q, flat);
            return nn::mlp_forward(q, x);
          },
          nn::flatten(p), 1e-5);
      CHECK(test::max_rel_error(analytic, fd, 1e-6) < 1e-6);
    }
  }

  TEST_CASE("normalized features feed gradients back through instance_norm") {
    Rng rng(8);
    const Eigen::MatrixXd X = test::gaussian(4, 3, rng);
    const Eigen::MatrixXd W = test::gaussian(4, 3, rng);
    auto f = [&](std::span<const double> flat) {
      const Eigen::MatrixXd Y = nn::instance_norm(Eigen::Map<const Eigen::MatrixXd>(flat.data(), 4, 3));
      return Y.cwiseProduct(W).sum();
    };
    ad::Tape t;
    std::vector<ad::Value> rows;
    for (int i = 0; i < 4; ++i) rows.push_back(t.vector(X.row(i).transpose()));
    const auto normed = nn::instance_norm(rows);
    ad::Value root = ad::dot(normed[0], t.vector(W.row(0).transpose()));
    for (int i = 1; i < 4; ++i) root = ad::add(root, ad::dot(normed[static_cast<std::size_t>(i)], t.vector(W.row(i).transpose())));
    const auto g = t.backward(root);
    std::vector<double> analytic(12);
    for (int i = 0; i < 4; ++i)
      for (int c = 0; c < 3; ++c) analytic[static_cast<std::size_t>(c * 4 + i)] = g[rows[static_cast<std::size_t>(i)]](c, 0);
    const auto fd = ad::finite_difference(f, std::vector<double>(X.data(), X.data() + X.size()), 1e-5);
    CHECK(test::max_rel_error(analytic, fd, 1e-6) < 1e-6);
  }

  TEST_CASE("global clipping") {
    std::vector<double> g{1.2, -1.6};  // norm 2
    CHECK(nn::clip_global_norm(g, 1.0) == doctest::Approx(2.0));
    CHECK(g[0] == doctest::Approx(0.6));
    CHECK(g[1] == doctest::Approx(-0.8));
    Rng rng(9);
    for (int t = 0; t < 200; ++t) {
      const Eigen::VectorXd v = test::gaussian(20, 1, rng, t % 2 ? 0.01 : 5.0);
      std::vector<double> c(v.data(), v.data() + v.size());
      nn::clip_global_norm(c, 1.0);
      const double after = Eigen::Map<const Eigen::VectorXd>(c.data(), 20).norm();
      CHECK(after <= v.norm() + 1e-15);
      CHECK(after <= 1.0 + 1e-12);
    }
  }

  TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    std::vector<double> p{1.0, -2.0, 3.0};
    const auto before = p;
    auto st = nn::AdamState::zeros(3);
    nn::adam_step(p, std::vector<double>(3, 0.0), st, {});
    CHECK(p == before);
    CHECK(st.t == 1);
  }

  TEST_CASE("adam: clipping happens before the moment update") {
    std::vector<double> p{0.0, 0.0};
    auto st = nn::AdamState::zeros(2);
    nn::AdamConfig cfg;
    nn::adam_step(p, std::vector<double>{1.2, 1.6}, st, cfg);  // norm 2 -> halved
    CHECK(st.m[0] == doctest::Approx(0.1 * 0.6));
    CHECK(st.m[1] == doctest::Approx(0.1 * 0.8));
    CHECK(st.v[1] == doctest::Approx(0.001 * 0.64));
    CHECK(p[0] == doctest::Approx(-cfg.lr).epsilon(1e-6));
  }

  TEST_CASE("adam decreases a scalar quadratic monotonically") {
    std::vector<double> th{1.0};
    auto st = nn::AdamState::zeros(1);
    nn::AdamConfig cfg;
    cfg.lr = 0.05;
    double prev = th[0] * th[0];
    for (int k = 0; k < 10; ++k) {
      nn::adam_step(th, std::vector<double>{2.0 * th[0]}, st, cfg);
      CHECK(th[0] * th[0] < prev);
      prev = th[0] * th[0];
    }
  }

  TEST_CASE("adam rejects non-finite gradients without side effects") {
    std::vector<double> p{1.0};
    auto st = nn::AdamState::zeros(1);
    CHECK_THROWS_AS(nn::adam_step(p, std::vector<double>{std::nan("")}, st, {}), NumericError);
    CHECK(p[0] == 1.0);
    CHECK(st.t == 0);
  }
}
