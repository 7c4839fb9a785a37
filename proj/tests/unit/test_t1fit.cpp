#include <doctest.h>

#include <algorithm>
#include <random>

#include "spinrelax/errors.hpp"
#include "spinrelax/t1fit.hpp"

using namespace spinrelax;

namespace {

std::vector<double> log_taus(double lo, double hi, int n) {
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(lo * std::pow(hi / lo, i / double(n - 1)));
  return out;
}

std::vector<PulsePairRecord> exact_records(double t1, double q, const std::vector<double>& taus, double h1 = 1e5) {
  std::vector<PulsePairRecord> out;
  for (double tau : taus) out.push_back({tau, h1, h1 * t1_model(tau, t1, q)});
  return out;
}

}  // namespace

TEST_CASE("model shape") {
  CHECK(t1_model(0.0, 2.4, 0.6) == doctest::Approx(0.4));
  CHECK(t1_model(1e9, 2.4, 0.6) == doctest::Approx(1.0));
  CHECK(t1_model(2.4, 2.4, 0.6) == doctest::Approx(1.0 - 0.6 * std::exp(-1.0)));
}

TEST_CASE("analytic gradient matches central differences") {
  for (double tau : {0.01, 0.5, 2.4, 9.0}) {
    for (auto [t1, q] : {std::pair{2.4, 0.6}, std::pair{0.1, 0.95}, std::pair{30.0, 0.2}}) {
      const Eigen::Vector2d g = t1_model_gradient(tau, t1, q);
      const double h1 = 1e-4 * t1, h2 = 1e-6;
      const double d1 = (t1_model(tau, t1 + h1, q) - t1_model(tau, t1 - h1, q)) / (2 * h1);
      const double d2 = (t1_model(tau, t1, q + h2) - t1_model(tau, t1, q - h2)) / (2 * h2);
      CHECK(std::abs(g(0) - d1) <= 1e-6 * std::abs(g(0)) + 1e-10);
      CHECK(g(1) == doctest::Approx(d2).epsilon(1e-6));
    }
  }
}

TEST_CASE("noiseless recovery round trip") {
  const auto recs = exact_records(2.4, 0.6, log_taus(0.01, 20.0, 15));
  const T1FitResult f = fit_t1(recs);
  CHECK(f.converged);
  CHECK(std::abs(f.t1 / 2.4 - 1) < 1e-6);
  CHECK(std::abs(f.q / 0.6 - 1) < 1e-6);
}

TEST_CASE("unit consistency: delays in ms and heights in kHz") {
  const auto recs = exact_records(2.4, 0.6, log_taus(0.01, 20.0, 12));
  auto scaled = recs;
  for (auto& r : scaled) {
    r.tau *= 1e3;
    r.h1 *= 1e-3;
    r.h2 *= 1e-3;
  }
  const auto a = fit_t1(recs), b = fit_t1(scaled);
  CHECK(b.t1 == doctest::Approx(a.t1 * 1e3).epsilon(1e-9));
  CHECK(b.q == doctest::Approx(a.q).epsilon(1e-9));
}

TEST_CASE("shot-noise replicates are centred on the truth") {
  const auto taus = log_taus(0.05, 15.0, 12);
  const double exposure = 20 * 100e-9 * 10000;  // 20 bins x 10000 repetitions
  std::vector<double> fits;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<PulsePairRecord> recs;
    for (double tau : taus) {
      const double h1 = 1e5, h2 = 1e5 * t1_model(tau, 2.4, 0.6);
      auto draw = [&](double h) { return std::poisson_distribution<long>(h * exposure)(rng) / exposure; };
      recs.push_back({tau, draw(h1), draw(h2)});
    }
    T1FitOptions o;
    o.poissonWeights = true;
    o.exposure = exposure;
    fits.push_back(fit_t1(recs, o).t1);
  }
  std::nth_element(fits.begin(), fits.begin() + 100, fits.end());
  CHECK(std::abs(fits[100] / 2.4 - 1) < 0.02);
}

TEST_CASE("precondition failures") {
  auto recs = exact_records(2.4, 0.6, {0.1, 1.0});
  CHECK_THROWS_AS(fit_t1(recs), InvalidParameters);
  recs = exact_records(2.4, 0.6, {1.0, 1.0, 1.0, 1.0});
  CHECK_THROWS_AS(fit_t1(recs), RankDeficientError);
}

TEST_CASE("corrected fit with zero correction is the plain fit") {
  const auto recs = exact_records(1.3, 0.7, log_taus(0.01, 10.0, 10));
  const auto a = fit_t1(recs);
  const auto b = fit_t1_corrected(recs, 0.0, [](double) { return 0.0; });
  CHECK(a.t1 == b.t1);
  CHECK(a.q == b.q);
}

TEST_CASE("corrected fit removes a known pile-up loss") {
  const double t1 = 2.4, q = 0.6, peak = 1e5;
  // Losses proportional to the leading-edge height, as a detector with fixed dead fraction would give.
  auto eps = [&](double h) { return 0.04 * h * h / peak; };
  std::vector<double> taus = log_taus(0.05, 12.0, 10), eps2;
  std::vector<PulsePairRecord> recs;
  for (double tau : taus) {
    const double h2 = peak * t1_model(tau, t1, q);
    eps2.push_back(eps(h2));
    recs.push_back({tau, peak - eps(peak), h2 - eps(h2)});
  }
  const auto plain = fit_t1(recs);
  const auto corr = fit_t1_corrected(recs, eps(peak), [&](double tau) {
    const double h2 = peak * t1_model(tau, t1, q);
    return eps(h2);
  });
  CHECK(plain.t1 < t1);
  CHECK(std::abs(corr.t1 / t1 - 1) < 1e-6);
}

TEST_CASE("leading edge height averages the first bins of the pulse") {
  TimeTrace tr{1.0, 0.1, Eigen::VectorXd::LinSpaced(50, 0.0, 49.0), TraceUnit::RateHz};
  CHECK(leading_edge_height(tr, 1.0, 4) == doctest::Approx(1.5));
  CHECK(leading_edge_height(tr, 1.25, 2) == doctest::Approx(3.5));  // first full bin at or after 1.25
  CHECK_THROWS_AS(leading_edge_height(tr, 5.0, 20), RangeError);
  CHECK_THROWS_AS(leading_edge_height(tr, 0.0, 5), RangeError);
}

TEST_CASE("single exponential with baseline") {
  TimeTrace tr{0.0, 1e-6, Eigen::VectorXd(400), TraceUnit::RateHz};
  for (Eigen::Index k = 0; k < tr.size(); ++k) tr.counts(k) = 8e4 * std::exp(-k * 1e-6 / 50e-6) + 2e4;
  const auto f = fit_multi_exponential(tr, 1);
  CHECK(f.converged);
  CHECK(f.taus[0] == doctest::Approx(50e-6).epsilon(1e-8));
  CHECK(f.amplitudes[0] == doctest::Approx(8e4).epsilon(1e-8));
  CHECK(f.baseline == doctest::Approx(2e4).epsilon(1e-8));
  CHECK(f(0.0) == doctest::Approx(1e5).epsilon(1e-8));
}

TEST_CASE("double exponential and fixed baseline") {
  TimeTrace tr{0.0, 1.0, Eigen::VectorXd(600), TraceUnit::RateHz};
  for (Eigen::Index k = 0; k < tr.size(); ++k)
    tr.counts(k) = 50.0 * std::exp(-k / 8.0) + 30.0 * std::exp(-k / 120.0) + 5.0;
  const auto f = fit_multi_exponential(tr, 2);
  REQUIRE(f.converged);
  CHECK(f.taus[0] == doctest::Approx(8.0).epsilon(1e-6));
  CHECK(f.taus[1] == doctest::Approx(120.0).epsilon(1e-6));
  CHECK(f.amplitudes[0] == doctest::Approx(50.0).epsilon(1e-6));
  const auto g = fit_multi_exponential(tr, 2, BaselineMode::Fixed, 5.0);
  CHECK(g.baseline == 5.0);
  CHECK(g.taus[1] == doctest::Approx(120.0).epsilon(1e-6));
}

TEST_CASE("two terms on single-exponential data are flagged degenerate") {
  TimeTrace tr{0.0, 1.0, Eigen::VectorXd(300), TraceUnit::RateHz};
  for (Eigen::Index k = 0; k < tr.size(); ++k) tr.counts(k) = 10.0 * std::exp(-k / 30.0) + 1.0;
  const auto f = fit_multi_exponential(tr, 2);
  CHECK(f.degenerate);
  CHECK_FALSE(f.warning.empty());
  CHECK_THROWS_AS(fit_multi_exponential(tr, 3), InvalidParameters);
}
