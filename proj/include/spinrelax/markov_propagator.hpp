#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace spinrelax {

/// Stationary vector of a 3-state rate generator Q (column convention:
/// dp/dt = Q p, Q(j,i) = rate i -> j) by the Markov-chain tree theorem.
/// Every term is a product of non-negative rates, so there is no
/// cancellation. Returns the unnormalized tree sums; their total is zero
/// exactly when the stationary space has dimension > 1.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> stationary_tree_sums(const Eigen::Matrix<Scalar, 3, 3>& Q) {
  auto r = [&](int from, int to) { return Q(to, from); };
  Eigen::Matrix<Scalar, 3, 1> w;
  w(0) = r(1, 0) * r(2, 0) + r(1, 0) * r(2, 1) + r(2, 0) * r(1, 2);
  w(1) = r(0, 1) * r(2, 1) + r(0, 1) * r(2, 0) + r(0, 2) * r(2, 1);
  w(2) = r(0, 2) * r(1, 0) + r(0, 2) * r(1, 2) + r(0, 1) * r(1, 2);
  return w;
}

/// exp(Q t) for a 3x3 Markov rate generator by uniformization with scaling
/// and squaring. All series terms are non-negative.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> uniformized_exp(const Eigen::Matrix<Scalar, 3, 3>& Q, Scalar t) {
  using Mat = Eigen::Matrix<Scalar, 3, 3>;
  using std::exp;
  const Scalar c = Q.diagonal().cwiseAbs().maxCoeff();
  if (c == Scalar(0) || t == Scalar(0)) return Mat::Identity();
  const Mat P = Mat::Identity() + Q / c;

  int squarings = 0;
  Scalar h = t;
  while (c * h > Scalar(0.5)) {
    h /= Scalar(2);
    ++squarings;
  }
  const Scalar ch = c * h;
  Mat term = Mat::Identity();
  Mat sum = Mat::Identity();
  for (int k = 1; k < 60; ++k) {
    term = (term * P) * (ch / Scalar(k));
    sum += term;
    if (term.maxCoeff() < std::numeric_limits<Scalar>::epsilon() * Scalar(1e-2)) break;
  }
  Mat result = sum * exp(-ch);
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

/// Propagator exp(Q t) of a 3-state rate generator. When the stationary
/// vector is unique, the dynamics are split into the exact stationary part
/// and a 2x2 relaxation block whose eigenvalues come from the trace and the
/// tree-sum total (no cancellation for the slow eigenvalue). Nearly
/// coincident eigenvalues (|l1-l2| < 1e-9 max|l|) or a degenerate stationary
/// space fall back to the uniformized series.
template <typename Scalar>
class MarkovPropagator3 {
 public:
  using Mat = Eigen::Matrix<Scalar, 3, 3>;
  using Vec = Eigen::Matrix<Scalar, 3, 1>;
  using Mat2 = Eigen::Matrix<Scalar, 2, 2>;

  static constexpr Scalar kDegeneracyThreshold = Scalar(1e-9);

  explicit MarkovPropagator3(const Mat& Q) : Q_(Q) {
    using std::abs;
    using std::sqrt;
    const Vec w = stationary_tree_sums(Q);
    const Scalar total = w.sum();
    if (!(total > Scalar(0))) {
      spectral_ = false;
      return;
    }
    pi_ = w / total;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) B_(i, j) = Q(i, j) - Q(i, 2);

    const Scalar halfTrace = Q.trace() / Scalar(2);
    const Scalar disc = halfTrace * halfTrace - total;
    if (disc >= Scalar(0)) {
      const Scalar root = sqrt(disc);
      fast_ = halfTrace - root;
      slow_ = total / fast_;
      complex_ = false;
      const Scalar scale = std::max(abs(fast_), abs(slow_));
      spectral_ = abs(slow_ - fast_) >= kDegeneracyThreshold * scale;
    } else {
      omega_ = sqrt(-disc);
      complex_ = true;
      spectral_ = omega_ >= kDegeneracyThreshold * sqrt(total);
    }
    real_ = halfTrace;
  }

  /// True when the closed-form spectral route is used.
  bool spectral() const { return spectral_; }

  Mat operator()(Scalar t) const {
    if (!spectral_) return uniformized_exp(Q_, t);
    using std::cos;
    using std::exp;
    using std::sin;
    const Mat2 I = Mat2::Identity();
    Mat2 E;
    if (!complex_) {
      E = (exp(slow_ * t) * (B_ - fast_ * I) - exp(fast_ * t) * (B_ - slow_ * I)) / (slow_ - fast_);
    } else {
      E = exp(real_ * t) * (cos(omega_ * t) * I + (sin(omega_ * t) / omega_) * (B_ - real_ * I));
    }
    // P(t) = pi 1^T + L E S, with S = [I2 | 0] - pi_{0,1} 1^T and L = [I2; -1 -1].
    Eigen::Matrix<Scalar, 2, 3> S = Eigen::Matrix<Scalar, 2, 3>::Zero();
    S.template leftCols<2>() = I;
    S -= pi_.template head<2>() * Eigen::Matrix<Scalar, 1, 3>::Ones();
    Eigen::Matrix<Scalar, 3, 2> L;
    L << Scalar(1), Scalar(0), Scalar(0), Scalar(1), Scalar(-1), Scalar(-1);
    return pi_ * Eigen::Matrix<Scalar, 1, 3>::Ones() + L * E * S;
  }

  const Vec& stationary() const { return pi_; }

 private:
  Mat Q_;
  Vec pi_ = Vec::Zero();
  Mat2 B_ = Mat2::Zero();
  Scalar fast_{0}, slow_{0}, real_{0}, omega_{0};
  bool complex_ = false;
  bool spectral_ = false;
};

}  // namespace spinrelax
