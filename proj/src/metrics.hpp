#pragma once

#include <Eigen/Dense>

#include "problems.hpp"

namespace admm_mpnn::evaluation {

inline constexpr double kRelativeObjectiveGuard = 1e-12;

// (1/m) sum_i ||x_i - x*||^2
double error_metric(const Eigen::MatrixXd& X, const Eigen::VectorXd& x_star);

// (1/m) sum_i ||x_i - mean(x)||  (not squared)
double consensus_metric(const Eigen::MatrixXd& X);

// |f(X) - f(x*)| / max(|f(x*)|, guard), f summed over the per-node iterates.
double relative_objective(const problems::ProblemInstance& inst, const Eigen::MatrixXd& X);

}  // namespace admm_mpnn::evaluation
