#include <doctest.h>

#include "spinrelax/deadtime.hpp"
#include "spinrelax/errors.hpp"

using namespace spinrelax;

namespace {

TimeTrace constant(double rate, double bw, Eigen::Index n) {
  return {0.0, bw, Eigen::VectorXd::Constant(n, rate), TraceUnit::RateHz};
}

// Exact response to a constant photon rate p switched on at t = 0, valid for t < 2 dt.
double exact_constant_response(double p, double dt, double t) {
  if (t < dt) return p * std::exp(-p * t);
  const double s = t - dt;
  return p * std::exp(-p * s) * (std::exp(-p * dt) + p * s);
}

}  // namespace

TEST_CASE("constant input relaxes to the fixed point") {
  const DetectorSpec det{10e-6};
  const TimeTrace m = measured_rate(constant(1e5, 100e-9, 3000), det);
  CHECK(steady_state_rate(1e5, det) == doctest::Approx(5e4));
  CHECK(m.counts.tail(200).mean() == doctest::Approx(5e4).epsilon(5e-3));
  CHECK(m.counts(0) == doctest::Approx(1e5).epsilon(1e-2));
}

TEST_CASE("first two dead times match the closed-form response") {
  const double p = 1e5, dt = 10e-6, h = dt / 500;
  const TimeTrace m = measured_rate(constant(p, h, 1000), DetectorSpec{dt});
  for (Eigen::Index k = 0; k < m.size() - 1; k += 37) {
    const double t = (static_cast<double>(k) + 0.5) * h;
    CHECK(m.counts(k) == doctest::Approx(exact_constant_response(p, dt, t)).epsilon(2e-4));
  }
}

TEST_CASE("response dips below the fixed point and rings down") {
  const DetectorSpec det{10e-6};
  const TimeTrace m = measured_rate(constant(1e5, 100e-9, 1000), det);
  // local minimum close to one dead time, overshoot after two, shrinking deviation
  const auto dip = m.counts.segment(80, 40).minCoeff();
  const auto rebound = m.counts.segment(180, 40).maxCoeff();
  CHECK(dip < 5e4);
  CHECK(rebound > 5e4);
  CHECK(std::abs(m.counts.segment(380, 40).minCoeff() - 5e4) < 5e4 - dip);
}

TEST_CASE("zero dead time is the identity") {
  const TimeTrace in = constant(1e5, 1e-6, 10);
  CHECK(apply_dead_time(in, DetectorSpec{0.0}).counts == in.counts);
}

TEST_CASE("coarse bins are rejected by the direct solver but handled by apply_dead_time") {
  const DetectorSpec det{10e-6};
  const TimeTrace coarse = constant(1e5, 1e-6, 200);
  CHECK_THROWS_AS(measured_rate(coarse, det), ResolutionError);
  const TimeTrace a = apply_dead_time(coarse, det);
  const TimeTrace fine = measured_rate(constant(1e5, 1e-7, 2000), det);
  CHECK(a.size() == 200);
  for (Eigen::Index k = 0; k < 200; k += 13)
    CHECK(a.counts(k) == doctest::Approx(fine.counts.segment(10 * k, 10).mean()).epsilon(1e-9));
}

TEST_CASE("detector input checks") {
  CHECK_THROWS_AS(validate(DetectorSpec{-1.0}), InvalidParameters);
  DetectorSpec det{1e-6, 1e6};
  CHECK_THROWS_AS(measured_rate(constant(2e6, 1e-9, 10), det), InvalidParameters);
}

TEST_CASE("monte carlo detector agrees with the integral equation") {
  const DetectorSpec det{10e-6};
  TimeTrace photon = constant(1e5, 500e-9, 120);
  photon.counts.segment(60, 60).setConstant(3e4);  // a step down mid-trace
  const MonteCarloResult mc = monte_carlo_counts(photon, det, 40000, 7);
  const TimeTrace ie = apply_dead_time(photon, det);
  int within3 = 0;
  for (Eigen::Index k = 0; k < photon.size(); ++k) {
    const double z = std::abs(mc.rate.counts(k) - ie.counts(k)) / mc.sigma(k);
    CHECK(z < 5.0);
    within3 += z < 3.0;
  }
  CHECK(within3 >= static_cast<int>(0.95 * photon.size()));
}

TEST_CASE("monte carlo without dead time is an unbiased Poisson rate") {
  const TimeTrace photon = constant(2e5, 1e-6, 50);
  const auto mc = monte_carlo_counts(photon, DetectorSpec{0.0}, 20000, 3);
  const double mean = mc.rate.counts.mean();
  const double se = std::sqrt(2e5 / (1e-6 * 20000 * 50));
  CHECK(std::abs(mean - 2e5) < 4 * se);
}

TEST_CASE("monte carlo is deterministic per seed") {
  const TimeTrace photon = constant(1e5, 1e-6, 30);
  const auto a = monte_carlo_counts(photon, DetectorSpec{5e-6}, 3000, 11);
  const auto b = monte_carlo_counts(photon, DetectorSpec{5e-6}, 3000, 11);
  const auto c = monte_carlo_counts(photon, DetectorSpec{5e-6}, 3000, 12);
  CHECK(a.rate.counts == b.rate.counts);
  CHECK(a.rate.counts != c.rate.counts);
}

TEST_CASE("epsilon interpolation") {
  const auto f = interpolate_epsilon({1.0, 2.0, 4.0}, {10.0, 20.0, 0.0});
  CHECK(f(0.5) == 10.0);
  CHECK(f(1.5) == doctest::Approx(15.0));
  CHECK(f(3.0) == doctest::Approx(10.0));
  CHECK(f(9.0) == 0.0);
  CHECK_THROWS_AS(interpolate_epsilon({1.0, 1.0}, {0.0, 0.0}), InvalidParameters);
}

TEST_CASE("pile-up shortens the fitted T1 and the correction removes it") {
  PulsePairScenario s;
  s.detector.deadTime = 10e-6;
  for (double peak : {6e4, 8e4, 1e5, 1.2e5}) {
    s.peakRate = peak;
    const BiasResult b = t1_bias(s, 2.4);
    CHECK(b.uncorrected.t1 < 2.4);
    CHECK(b.biasFraction > 0.01);
    CHECK(b.biasFraction < 0.10);
    CHECK(std::abs(b.correctedBiasFraction) < 0.01);
    CHECK(b.epsilon1 > 0.0);
  }
}

TEST_CASE("bias grows with dead time and vanishes without it") {
  PulsePairScenario s;
  double previous = -1.0;
  for (double dt : {0.0, 1e-6, 2e-6, 5e-6, 10e-6}) {
    s.detector.deadTime = dt;
    const double bias = t1_bias(s, 2.4).biasFraction;
    if (dt == 0.0) CHECK(std::abs(bias) < 1e-9);
    CHECK(bias >= previous - 1e-5);
    previous = bias;
  }
}
