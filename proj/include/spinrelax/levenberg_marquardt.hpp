#pragma once

#include <Eigen/Core>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>

// Damped least squares (Levenberg-Marquardt with Marquardt column scaling)
// for small, smooth models. Residual and Jacobian callables take the
// parameter vector and return Eigen vectors/matrices of the same scalar.

namespace spinrelax {

template <typename Scalar = double>
struct LmOptions {
  int maxIterations = 200;
  Scalar xtol = Scalar(1e-10);     ///< relative parameter step
  Scalar ftol = Scalar(1e-12);     ///< relative RSS improvement
  Scalar rssFloor = Scalar(1e-28); ///< RSS treated as exact zero
  Scalar initialDamping = Scalar(1e-3);
};

enum class LmStatus { SmallStep, SmallImprovement, ZeroResidual, MaxIterations, Stalled };

inline const char* to_string(LmStatus s) {
  switch (s) {
    case LmStatus::SmallStep: return "small-step";
    case LmStatus::SmallImprovement: return "small-improvement";
    case LmStatus::ZeroResidual: return "zero-residual";
    case LmStatus::MaxIterations: return "max-iterations";
    case LmStatus::Stalled: return "stalled";
  }
  return "unknown";
}

template <typename Scalar = double>
struct LmResult {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Vector x;
  Vector residuals;
  Matrix jacobian;
  Scalar rss = Scalar(0);
  int iterations = 0;
  LmStatus status = LmStatus::MaxIterations;

  bool converged() const {
    return status != LmStatus::MaxIterations && status != LmStatus::Stalled;
  }
};

template <typename Scalar, typename ResidualFn, typename JacobianFn>
LmResult<Scalar> levenberg_marquardt(ResidualFn&& residualFn, JacobianFn&& jacobianFn,
                                     Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x,
                                     const LmOptions<Scalar>& opts = {}) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using std::sqrt;

  LmResult<Scalar> out;
  Vector r = residualFn(x);
  Matrix J = jacobianFn(x);
  Scalar rss = r.squaredNorm();
  const Eigen::Index m = r.size();
  const Eigen::Index n = x.size();
  Scalar lambda = opts.initialDamping;

  // Undamped Gauss-Newton steps at the end: comparing RSS values only pins the
  // optimum to ~sqrt(eps), the normal equations pin it to ~eps * cond(J).
  auto polish = [&]() {
    for (int k = 0; k < 8; ++k) {
      const Vector step = J.colPivHouseholderQr().solve(-r);
      if (!step.allFinite() || step.norm() > Scalar(1e-4) * (x.norm() + Scalar(1))) return;
      const Vector trial = x + step;
      const Vector rTrial = residualFn(trial);
      const Scalar rssTrial = rTrial.squaredNorm();
      if (!(rssTrial <= rss * (Scalar(1) + Scalar(64) * std::numeric_limits<Scalar>::epsilon()))) return;
      x = trial;
      r = rTrial;
      rss = rssTrial;
      J = jacobianFn(x);
      if (step.norm() <= Scalar(16) * std::numeric_limits<Scalar>::epsilon() * (x.norm() + Scalar(1))) return;
    }
  };

  auto finish = [&](LmStatus status, int iterations) {
    if (status != LmStatus::ZeroResidual) polish();
    out.x = x;
    out.residuals = r;
    out.jacobian = J;
    out.rss = rss;
    out.iterations = iterations;
    out.status = status;
    return out;
  };

  for (int iter = 0; iter < opts.maxIterations; ++iter) {
    if (rss <= opts.rssFloor) return finish(LmStatus::ZeroResidual, iter);

    Vector scale = J.colwise().squaredNorm().transpose();
    const Scalar maxScale = scale.size() ? scale.maxCoeff() : Scalar(0);
    const Scalar floor = maxScale > Scalar(0) ? maxScale * Scalar(1e-12) : Scalar(1);
    scale = scale.cwiseMax(floor);

    // Inner loop: raise damping until a step lowers the RSS.
    while (true) {
      Matrix A(m + n, n);
      A.topRows(m) = J;
      A.bottomRows(n) = (lambda * scale).cwiseSqrt().asDiagonal();
      Vector b = Vector::Zero(m + n);
      b.head(m) = -r;
      const Vector step = A.householderQr().solve(b);
      const bool tinyStep =
          step.norm() <= opts.xtol * (x.norm() + opts.xtol);

      const Vector trial = x + step;
      const Vector rTrial = residualFn(trial);
      const Scalar rssTrial = rTrial.allFinite() ? rTrial.squaredNorm()
                                                 : std::numeric_limits<Scalar>::infinity();
      if (rssTrial < rss) {
        if (rss - rssTrial <= opts.ftol * rss) return finish(LmStatus::SmallImprovement, iter + 1);
        x = trial;
        r = rTrial;
        rss = rssTrial;
        J = jacobianFn(x);
        lambda = std::max(lambda / Scalar(10), Scalar(1e-15));
        if (tinyStep) return finish(LmStatus::SmallStep, iter + 1);
        break;
      }
      if (tinyStep) return finish(LmStatus::SmallStep, iter + 1);
      lambda *= Scalar(10);
      if (lambda > Scalar(1e20)) return finish(LmStatus::Stalled, iter + 1);
    }
  }
  return finish(LmStatus::MaxIterations, opts.maxIterations);
}

/// Pseudo-inverse covariance pinv(J^T J) * rss/(m-n).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> covariance(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& J, Scalar rss) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index m = J.rows(), n = J.cols();
  const Scalar sigma2 = m > n ? rss / Scalar(m - n) : Scalar(0);
  Eigen::JacobiSVD<Matrix> svd(J, Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const Scalar cutoff = s.size() ? s(0) * Scalar(n) * std::numeric_limits<Scalar>::epsilon() : Scalar(0);
  Matrix inv = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) inv += svd.matrixV().col(i) * svd.matrixV().col(i).transpose() / (s(i) * s(i));
  }
  return inv * sigma2;
}


/// Parameter standard errors sqrt(diag(cov)), cov = pinv(J^T J) * rss/(m-n).
/// Returns NaN entries when m <= n.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> standard_errors(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& J, Scalar rss) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index m = J.rows(), n = J.cols();
  if (m <= n) return Vector::Constant(n, std::numeric_limits<Scalar>::quiet_NaN());
  const auto cov = covariance(J, rss);
  return cov.diagonal().cwiseMax(Scalar(0)).cwiseSqrt();
}

}  // namespace spinrelax
