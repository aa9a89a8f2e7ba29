#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

namespace spindaq {

template <typename Scalar>
struct LmOptions {
  int max_iterations = 200;
  Scalar relative_tolerance = Scalar(1e-9);
  Scalar initial_lambda = Scalar(1e-3);
  Scalar max_lambda = Scalar(1e16);
};

template <typename Scalar>
struct LmResult {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Vector params;
  /// (J^T J)^-1 at the solution, in units of the weighted residuals.
  Matrix covariance;
  Scalar chi2 = Scalar(0);
  Scalar reduced_chi2 = Scalar(0);
  int iterations = 0;
  bool converged = false;
  /// Cost after each accepted step, starting with the initial guess.
  std::vector<Scalar> cost_history;
};

/// Minimizes |r(p)|^2. `model(p, r, J)` fills the residual vector and, when J
/// is non-null, the Jacobian dr/dp. Steps are accepted only if they lower the
/// cost, so the history is monotone.
template <typename Scalar, typename Model>
LmResult<Scalar> levenberg_marquardt(Model&& model, Eigen::Index residual_count,
                                     const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& p0,
                                     const LmOptions<Scalar>& opts = {}) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index m = residual_count;
  const Eigen::Index n = p0.size();

  LmResult<Scalar> res;
  Vector p = p0;
  Vector r(m);
  Vector r_try(m);
  Matrix J(m, n);
  model(p, r, &J);
  Scalar cost = r.squaredNorm();
  res.cost_history.push_back(cost);
  Scalar lambda = opts.initial_lambda;

  for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
    const Matrix A = J.transpose() * J;
    const Vector g = J.transpose() * r;
    const Vector d = A.diagonal().cwiseMax(Scalar(1e-12) * std::max(A.diagonal().maxCoeff(), Scalar(1)));
    bool accepted = false;
    while (lambda <= opts.max_lambda) {
      Matrix damped = A;
      damped.diagonal() += lambda * d;
      const Vector step = -damped.ldlt().solve(g);
      const Vector p_try = p + step;
      model(p_try, r_try, static_cast<Matrix*>(nullptr));
      const Scalar cost_try = r_try.squaredNorm();
      if (std::isfinite(static_cast<double>(cost_try)) && cost_try <= cost) {
        const Scalar rel = (cost - cost_try) / std::max(cost, std::numeric_limits<Scalar>::min());
        p = p_try;
        model(p, r, &J);
        cost = r.squaredNorm();
        res.cost_history.push_back(cost);
        lambda = std::max(lambda / Scalar(10), Scalar(1e-12));
        accepted = true;
        if (rel < opts.relative_tolerance) res.converged = true;
        break;
      }
      lambda *= Scalar(10);
    }
    if (!accepted) {
      // No descent direction left at any damping: a (possibly flat) minimum.
      res.converged = true;
      break;
    }
    if (res.converged) {
      ++res.iterations;
      break;
    }
  }

  res.params = p;
  res.chi2 = cost;
  const Eigen::Index dof = m - n;
  res.reduced_chi2 = dof > 0 ? cost / Scalar(dof) : std::numeric_limits<Scalar>::quiet_NaN();
  res.covariance = (J.transpose() * J).completeOrthogonalDecomposition().pseudoInverse();
  return res;
}

}  // namespace spindaq
