#include "metrics.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace admm_mpnn::evaluation {

double error_metric(const Eigen::MatrixXd& X, const Eigen::VectorXd& x_star) {
  ADMM_MPNN_REQUIRE(X.cols() == x_star.size() && X.rows() > 0, "error_metric: dimension mismatch");
  return (X.rowwise() - x_star.transpose()).rowwise().squaredNorm().mean();
}

double consensus_metric(const Eigen::MatrixXd& X) {
  ADMM_MPNN_REQUIRE(X.rows() > 0, "consensus_metric: empty iterate");
  const Eigen::RowVectorXd mean = X.colwise().mean();
  return (X.rowwise() - mean).rowwise().norm().mean();
}

double relative_objective(const problems::ProblemInstance& inst, const Eigen::MatrixXd& X) {
  const Eigen::MatrixXd at_star = inst.x_star.transpose().replicate(inst.num_nodes(), 1);
  const double f_star = problems::objective(inst, at_star);
  return std::abs(problems::objective(inst, X) - f_star) / std::max(std::abs(f_star), kRelativeObjectiveGuard);
}

}  // namespace admm_mpnn::evaluation
