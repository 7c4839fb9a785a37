#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "spinrelax/t1fit.hpp"
#include "spinrelax/time_trace.hpp"

namespace spinrelax {

struct DetectorSpec {
  double deadTime = 0.0;  ///< s
  /// Inputs above this photon rate are rejected as implausible.
  double maxRate = std::numeric_limits<double>::infinity();
};

void validate(const DetectorSpec& detector);

/// Count-rate density of a dead-time limited counter driven by the
/// piecewise-constant photon rate `photon` (Hz):
///   c(t) = p(t) (1 - integral_{t - deadTime}^{t} c)
/// solved by forward recurrence with a trapezoidal trailing window. Node k
/// sits at the bin midpoint; no counts precede the trace. Requires
/// binWidth <= deadTime / 50 (ResolutionError otherwise).
TimeTrace measured_rate(const TimeTrace& photon, const DetectorSpec& detector);

/// measured_rate on an internal grid of at most deadTime/100, averaged back
/// to the input bins. Works for any input bin width.
TimeTrace apply_dead_time(const TimeTrace& photon, const DetectorSpec& detector);

/// Constant-rate fixed point p / (1 + p deadTime).
double steady_state_rate(double photonRate, const DetectorSpec& detector);

struct MonteCarloResult {
  TimeTrace rate;         ///< trial-averaged detection rate, Hz
  Eigen::VectorXd sigma;  ///< per-bin standard error of `rate`
};

/// Inhomogeneous Poisson photon stream (piecewise-constant rate) seen by a
/// non-paralyzable detector; the dead time restarts only on detections.
/// Trial i draws from its own stream derived from (seed, i), so results are
/// identical for any thread count.
MonteCarloResult monte_carlo_counts(const TimeTrace& photon, const DetectorSpec& detector,
                                    std::size_t trials, std::uint64_t seed);

/// Synthetic pulse-pair experiment with analytic pulse responses. The
/// leading-edge rate after a delay tau is h(tau) = peak (1 - q exp(-tau/T1));
/// within a pulse the rate decays from h(tau) to the pumped baseline
/// peak (1 - q) with the darkening time.
struct PulsePairScenario {
  double peakRate = 1.0e5;        ///< Hz, equilibrium leading-edge rate
  double q = 0.6;                 ///< recoverable fraction
  double darkeningTime = 50e-6;   ///< s
  double pulseDuration = 10e-6;   ///< s
  double binWidth = 100e-9;       ///< s, leading-edge bin
  std::size_t edgeBins = 20;
  double background = 0.0;        ///< Hz, present at all times
  std::vector<double> tauFactors = {0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0};  ///< delays / T1
  DetectorSpec detector{};
};

struct BiasResult {
  double epsilon1 = 0.0;              ///< Hz, loss on the first-pulse height
  std::vector<double> taus;           ///< s
  std::vector<double> epsilon2;       ///< Hz, loss on the second-pulse height per delay
  std::vector<PulsePairRecord> trueRecords;
  std::vector<PulsePairRecord> measuredRecords;
  T1FitResult uncorrected;
  T1FitResult corrected;
  double biasFraction = 0.0;           ///< (T1 - fitted) / T1, uncorrected fit
  double correctedBiasFraction = 0.0;  ///< same for the pile-up aware fit
};

/// Quantifies how dead-time pile-up shortens the fitted T1.
BiasResult t1_bias(const PulsePairScenario& scenario, double trueT1);

/// Piecewise-linear interpolation of eps2(tau), constant outside the samples.
EpsilonModel interpolate_epsilon(std::vector<double> taus, std::vector<double> epsilon);

}  // namespace spinrelax
