#include <doctest.h>

#include <Eigen/LU>
#include <complex>
#include <unsupported/Eigen/MatrixFunctions>

#include "spinrelax/constants.hpp"
#include "spinrelax/errors.hpp"
#include "spinrelax/markov_propagator.hpp"
#include "spinrelax/rate_model.hpp"

using namespace spinrelax;

namespace {

RateParams in_field() { return {20e6, 0.06e6, 1.0 / 2.4, 0.0, 0.0, 0.0}; }

// Two-level optical Bloch equations on resonance, dephasing Gamma/2, solved in
// Liouville space: steady-state excited population.
double bloch_excited_population(double rabi, double gamma) {
  using C = std::complex<double>;
  // rho = [[rgg, rge], [reg, ree]], H = (rabi/2) sigma_x, collapse sqrt(gamma) |g><e|
  Eigen::Matrix4cd L = Eigen::Matrix4cd::Zero();  // order: gg, ge, eg, ee
  const C i(0, 1);
  const double h = rabi / 2;
  // d rho/dt = -i[H, rho] + gamma (|g><e| rho |e><g| - {|e><e|, rho}/2)
  L(0, 1) = i * h;   L(0, 2) = -i * h;  L(0, 3) = gamma;
  L(1, 0) = i * h;   L(1, 3) = -i * h;  L(1, 1) = -gamma / 2;
  L(2, 0) = -i * h;  L(2, 3) = i * h;   L(2, 2) = -gamma / 2;
  L(3, 1) = -i * h;  L(3, 2) = i * h;   L(3, 3) = -gamma;
  Eigen::Matrix4cd A = L;
  A.row(0) << 1, 0, 0, 1;  // trace
  Eigen::Vector4cd b(1, 0, 0, 0);
  return A.fullPivLu().solve(b)(3).real();
}

// Classical RK4 on dp/dt = Q p.
Eigen::Vector3d rk4(const Eigen::Matrix3d& Q, Eigen::Vector3d p, double duration, double step) {
  const auto n = static_cast<long>(std::ceil(duration / step));
  const double h = duration / static_cast<double>(n);
  for (long k = 0; k < n; ++k) {
    const Eigen::Vector3d k1 = Q * p;
    const Eigen::Vector3d k2 = Q * (p + 0.5 * h * k1);
    const Eigen::Vector3d k3 = Q * (p + 0.5 * h * k2);
    const Eigen::Vector3d k4 = Q * (p + h * k3);
    p += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return p;
}

}  // namespace

TEST_CASE("generator columns sum to zero and off-diagonals are the rates") {
  RateParams p = in_field();
  p.temperature = 4.0;
  p.delta = 0.05;
  const auto Q = rate_generator(p, 3e6, 1e5);
  CHECK(Q.colwise().sum().cwiseAbs().maxCoeff() < 1e-6);
  CHECK(Q(2, 0) == 3e6);
  CHECK(Q(0, 2) == doctest::Approx(20e6 + 3e6));
  CHECK(Q(1, 2) == doctest::Approx(0.06e6 + 1e5));
  CHECK(Q(1, 0) == doctest::Approx(back_rate(p)));
}

TEST_CASE("back rate vanishes at zero temperature and obeys Boltzmann otherwise") {
  RateParams p = in_field();
  p.delta = 0.1;
  CHECK(back_rate(p) == 0.0);
  p.temperature = 2.0;
  CHECK(back_rate(p) == doctest::Approx(p.gamma21 * std::exp(-0.1 / (constants::kBoltzmannMeVPerK * 2.0))));
  const Populations eq = thermal_equilibrium(p);
  CHECK(eq(1) / eq(0) == doctest::Approx(std::exp(-0.1 / (constants::kBoltzmannMeVPerK * 2.0))).epsilon(1e-12));
  CHECK(eq(2) == 0.0);
}

TEST_CASE("steady state under drive matches optical Bloch equations") {
  for (double rabi : {1e6, 5e6, 20e6, 80e6}) {
    const RateParams p{20e6, 0.0, 1.0, 0.0, 0.0, rabi};
    const double w = pump_rate_from_rabi(rabi, p);
    const Populations ss = steady_state(p, w);
    CHECK(ss(2) == doctest::Approx(bloch_excited_population(rabi, 20e6)).epsilon(1e-10));
    CHECK(ss(2) == doctest::Approx(rabi * rabi / (4e14 + 2 * rabi * rabi)).epsilon(1e-12));
  }
}

TEST_CASE("steady state equals the normalized kernel of the generator") {
  RateParams p{15e6, 2e5, 3.0, 0.2, 5.0, 0.0};
  for (double w : {0.0, 1e3, 1e6, 3e7}) {
    const Eigen::Matrix3d Q = rate_generator(p, w, 0.3 * w);
    Eigen::FullPivLU<Eigen::Matrix3d> lu(Q);
    REQUIRE(lu.dimensionOfKernel() == 1);
    Eigen::Vector3d k = lu.kernel().col(0);
    k /= k.sum();
    CHECK((steady_state(p, w, 0.3 * w) - k).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("two absorbing levels make the steady state ambiguous") {
  const RateParams p{20e6, 1e5, 0.0, 0.0, 0.0, 0.0};
  CHECK_THROWS_AS(steady_state(p, 0.0), AmbiguousSteadyState);
}

TEST_CASE("propagator matches the matrix exponential") {
  const std::vector<Eigen::Matrix3d> gens = {
      rate_generator(in_field(), 20e6),
      rate_generator(RateParams{1e3, 2e3, 5e2, 0.1, 3.0, 0.0}, 7e2, 4e2),
      rate_generator(RateParams{1.0, 1.0, 1.0, 0.0, 0.0, 0.0}, 1.0, 1.0),  // symmetric, complex-free degenerate case
  };
  for (const auto& Q : gens) {
    const MarkovPropagator3<double> prop(Q);
    for (double t : {1e-9, 1e-7, 1e-5, 1e-3, 0.5, 3.0}) {
      // Pade scaling-and-squaring loses digits for very stiff Q t; keep the oracle in its accurate range.
      const double stiffness = Q.cwiseAbs().maxCoeff() * t;
      if (stiffness > 1e4) continue;
      const Eigen::Matrix3d ref = (Q * t).exp();
      CHECK((prop(t) - ref).cwiseAbs().maxCoeff() < 1e-12);
    }
    // Long times: the stationary projector.
    const Eigen::Vector3d pi = prop.stationary();
    CHECK((prop(1e3) - pi * Eigen::RowVector3d::Ones()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("uniformization fallback agrees with the spectral form") {
  const Eigen::Matrix3d Q = rate_generator(RateParams{1e4, 3e3, 20.0, 0.0, 0.0, 0.0}, 5e3, 0.0);
  const MarkovPropagator3<double> prop(Q);
  REQUIRE(prop.spectral());
  for (double t : {1e-6, 1e-4, 1e-2, 1.0}) CHECK((uniformized_exp(Q, t) - prop(t)).cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("semigroup, conservation and positivity") {
  const Eigen::Matrix3d Q = rate_generator(in_field(), 2e7);
  const MarkovPropagator3<double> prop(Q);
  for (double s : {1e-8, 3e-6, 2e-4}) {
    for (double t : {5e-8, 1e-5, 0.7}) {
      const Eigen::Matrix3d lhs = prop(s + t), rhs = prop(s) * prop(t);
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((lhs.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
      CHECK(lhs.minCoeff() >= -1e-14);
    }
  }
}

TEST_CASE("evolve agrees with a fine RK4 integration") {
  const RateParams p{2e6, 3e5, 4e3, 0.0, 0.0, 0.0};
  const DriveSchedule sched{{{4e-6, 1e6, 0.0}, {3e-6, 0.0, 0.0}, {5e-6, 2e6, 5e5}}};
  const Populations init(0.7, 0.3, 0.0);
  const double bw = 1e-7;
  const Trajectory traj = evolve(p, sched, init, bw);
  CHECK(traj.size() == 121);
  const double maxRate = 4e6;
  Eigen::Vector3d ref = init;
  double t = 0.0;
  std::size_t seg = 0;
  double segEnd = sched.segments[0].duration;
  for (Eigen::Index k = 1; k < traj.size(); ++k) {
    const double target = static_cast<double>(k) * bw;
    while (t < target - 1e-15) {
      const double stop = std::min(target, segEnd);
      const auto& s = sched.segments[seg];
      ref = rk4(rate_generator(p, s.pumpRate, s.pumpRate2), ref, stop - t, 1.0 / (50 * maxRate));
      t = stop;
      if (t >= segEnd - 1e-15 && seg + 1 < sched.segments.size()) segEnd += sched.segments[++seg].duration;
    }
    CHECK((traj.populations.col(k) - ref).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("populations stay valid along a trajectory") {
  const Trajectory traj = evolve(in_field(), DriveSchedule{{{50e-6, 2e7, 0.0}}}, Populations(1, 0, 0), 100e-9);
  for (Eigen::Index k = 0; k < traj.size(); ++k) CHECK(is_valid(traj.populations.col(k), 1e-12));
}

TEST_CASE("dark relaxation recovers with 1/(gamma21 + back rate)") {
  RateParams p = in_field();
  p.delta = 0.01;
  p.temperature = 0.5;
  const Populations eq = thermal_equilibrium(p);
  const Populations start(0.1, 0.9, 0.0);
  const double k = p.gamma21 + back_rate(p);
  for (double tau : {0.1, 1.0, 5.0}) {
    const Populations q = propagate(p, 0.0, 0.0, tau, start);
    CHECK(q(0) - eq(0) == doctest::Approx((start(0) - eq(0)) * std::exp(-k * tau)).epsilon(1e-9));
  }
}

TEST_CASE("driving both ground levels gives a monotone rise without a peak") {
  const RateParams p = in_field();
  const Trajectory traj = evolve(p, DriveSchedule{{{20e-6, 2e7, 2e7}}}, Populations(1, 0, 0), 10e-9);
  const auto p3 = traj.populations.row(2);
  for (Eigen::Index k = 1; k < p3.size(); ++k) CHECK(p3(k) >= p3(k - 1) - 1e-15);
  CHECK(p3(p3.size() - 1) == doctest::Approx(2e7 / (20.06e6 + 6e7)).epsilon(1e-9));
}

TEST_CASE("shelving population grows with the decay ratio") {
  double previous = -1.0;
  bool crossed = false;
  for (double ratio = 1e-2; ratio <= 1e6 * 1.0001; ratio *= std::sqrt(10.0)) {
    const RateParams p{20e6, ratio * 10.0, 10.0, 0.0, 0.0, 0.0};
    const double p2 = propagate(p, 500.0, 0.0, 0.5, Populations(1, 0, 0))(1);
    CHECK(p2 > previous);
    if (p2 > 0.5) {
      CHECK(ratio > 1.0);
      crossed = true;
    }
    previous = p2;
  }
  CHECK(crossed);
}

TEST_CASE("ple signal is the scaled excited population") {
  const Trajectory traj = evolve(in_field(), DriveSchedule{{{1e-6, 2e7, 0.0}}}, Populations(1, 0, 0), 1e-7);
  const TimeTrace tr = ple_signal(traj, 3e5);
  CHECK(tr.size() == traj.size());
  CHECK(tr.counts(5) == doctest::Approx(3e5 * traj.populations(2, 5)));
  CHECK_THROWS_AS(ple_signal(traj, 0.0), InvalidParameters);
}

TEST_CASE("zeeman splitting follows the axial g factor") {
  CHECK(zeeman_splitting({0.5, 0.0, 1.6}) == doctest::Approx(1.6 * 0.5 * constants::kBohrMagnetonHzPerT));
  CHECK(zeeman_splitting({0.5, constants::kPi / 2, 1.6}) == 0.0);
  CHECK(zeeman_splitting({0.0, 0.0, 1.6}) == 0.0);
  CHECK_THROWS_AS(zeeman_splitting({-1.0, 0.0, 1.6}), InvalidParameters);
}

TEST_CASE("invalid inputs are rejected") {
  RateParams p = in_field();
  p.gamma21 = -1.0;
  CHECK_THROWS_AS(validate(p), InvalidParameters);
  CHECK_THROWS_AS(evolve(in_field(), DriveSchedule{}, Populations(1, 0, 0), 1e-7), InvalidParameters);
  CHECK_THROWS_AS(evolve(in_field(), DriveSchedule{{{1e-6, 1.0, 0.0}}}, Populations(0.5, 0.6, 0.0), 1e-7),
                  InvalidParameters);
  CHECK_THROWS_AS(pump_rate_from_rabi(1e6, RateParams{}), InvalidParameters);
}
