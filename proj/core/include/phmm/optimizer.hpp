#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

namespace phmm {

// Objective to maximize. Returns the value and, when `grad` is non-null,
// writes the gradient into it. A value of -inf marks an infeasible point;
// the line search backs off from it.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct OptimizerOptions {
  int max_iterations = 1000;
  double relative_tolerance = 1e-8;  // on |f_k - f_{k-1}| / max(1, |f_k|)
  double gradient_tolerance = 1e-6;  // on the gradient's max-norm
  double max_step = 5.0;             // cap on the max-norm of a trial step
  int max_backtracks = 50;
};

enum class OptimizerStatus {
  kConverged,
  kMaxIterations,
  kLineSearchFailed,
};

struct OptimizerResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double initial_value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  int evaluations = 0;
  OptimizerStatus status = OptimizerStatus::kMaxIterations;
  // Objective after every accepted step, starting with the initial value.
  std::vector<double> trace;

  bool converged() const { return status == OptimizerStatus::kConverged; }
};

std::string to_string(OptimizerStatus status);

// Dense BFGS with backtracking (Armijo) line search. The returned value is
// never below the initial one. Throws InvalidParameter if the starting point
// itself is infeasible.
OptimizerResult maximize_bfgs(const Objective& f, Eigen::VectorXd x0,
                              const OptimizerOptions& options = {});

// Central differences of f's value.
Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x,
                                 double relative_step = 1e-5);

// Central differences of f's analytic gradient, symmetrized.
Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x,
                                double relative_step = 1e-4);

}  // namespace phmm
