#include "phmm/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "phmm/error.hpp"

namespace phmm {

std::string to_string(OptimizerStatus status) {
  switch (status) {
    case OptimizerStatus::kConverged: return "converged";
    case OptimizerStatus::kMaxIterations: return "max-iterations";
    case OptimizerStatus::kLineSearchFailed: return "line-search-failed";
  }
  return "unknown";
}

OptimizerResult maximize_bfgs(const Objective& objective, Eigen::VectorXd x0,
                              const OptimizerOptions& opt) {
  constexpr double kArmijo = 1e-4;
  const Eigen::Index n = x0.size();

  // Work on the minimization problem g(x) = -f(x).
  OptimizerResult res;
  res.x = std::move(x0);
  Eigen::VectorXd grad(n);
  double f = -objective(res.x, &grad);
  ++res.evaluations;
  if (!std::isfinite(f)) throw InvalidParameter("optimizer started at an infeasible point");
  grad = -grad;
  res.initial_value = -f;
  res.trace.push_back(-f);

  if (n == 0) {
    res.value = -f;
    res.gradient = grad;
    res.status = OptimizerStatus::kConverged;
    return res;
  }

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool h_is_identity = true;
  bool first_update = true;
  Eigen::VectorXd x_new(n), g_new(n), s(n), y(n), dir(n);

  res.status = OptimizerStatus::kMaxIterations;
  while (res.iterations < opt.max_iterations) {
    if (grad.lpNorm<Eigen::Infinity>() < opt.gradient_tolerance) {
      res.status = OptimizerStatus::kConverged;
      break;
    }
    dir.noalias() = -H * grad;
    double slope = grad.dot(dir);
    if (!(slope < 0.0)) {
      H.setIdentity();
      h_is_identity = true;
      first_update = true;
      dir = -grad;
      slope = grad.dot(dir);
    }
    const double dir_norm = dir.lpNorm<Eigen::Infinity>();
    double step = dir_norm > opt.max_step ? opt.max_step / dir_norm : 1.0;

    bool accepted = false;
    double f_new = f;
    for (int k = 0; k < opt.max_backtracks; ++k) {
      x_new = res.x + step * dir;
      f_new = -objective(x_new, &g_new);
      ++res.evaluations;
      if (std::isfinite(f_new) && f_new <= f + kArmijo * step * slope) {
        accepted = true;
        break;
      }
      step *= std::isfinite(f_new) ? 0.5 : 0.1;
    }
    ++res.iterations;
    if (!accepted) {
      if (!h_is_identity) {
        H.setIdentity();
        h_is_identity = true;
        first_update = true;
        continue;
      }
      res.status = OptimizerStatus::kLineSearchFailed;
      break;
    }
    g_new = -g_new;
    s = x_new - res.x;
    y = g_new - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (first_update) {
        H *= sy / y.squaredNorm();
        first_update = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = H * y;
      const double yHy = y.dot(Hy);
      H += (rho * rho * yHy + rho) * (s * s.transpose()) -
           rho * (Hy * s.transpose() + s * Hy.transpose());
      h_is_identity = false;
    }
    const double change = std::abs(f - f_new) / std::max(1.0, std::abs(f_new));
    res.x = x_new;
    f = f_new;
    grad = g_new;
    res.trace.push_back(-f);
    if (change < opt.relative_tolerance) {
      res.status = OptimizerStatus::kConverged;
      break;
    }
  }
  res.value = -f;
  res.gradient = -grad;
  return res;
}

Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x,
                                 double relative_step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = relative_step * std::max(1.0, std::abs(x[k]));
    xp[k] = x[k] + h;
    const double up = f(xp, nullptr);
    xp[k] = x[k] - h;
    const double down = f(xp, nullptr);
    xp[k] = x[k];
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x,
                                double relative_step) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd H(n, n);
  Eigen::VectorXd xp = x, gp(n), gm(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double h = relative_step * std::max(1.0, std::abs(x[k]));
    xp[k] = x[k] + h;
    f(xp, &gp);
    xp[k] = x[k] - h;
    f(xp, &gm);
    xp[k] = x[k];
    H.col(k) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

}  // namespace phmm
