#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spinrelax/levenberg_marquardt.hpp"
#include "spinrelax/time_trace.hpp"

namespace spinrelax {

/// Leading-edge heights of the first (h1) and second (h2) pulse for one delay.
struct PulsePairRecord {
  double tau = 0.0;  ///< s
  double h1 = 0.0;   ///< Hz
  double h2 = 0.0;   ///< Hz
};

struct T1FitResult {
  double t1 = 0.0;  ///< s
  double q = 0.0;   ///< h0 / (h0 + baseline)
  double stderrT1 = 0.0;
  double stderrQ = 0.0;
  double rss = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct T1FitOptions {
  /// Weight each ratio by its shot-noise error, with counts = height * exposure.
  bool poissonWeights = false;
  double exposure = 1.0;  ///< s of integrated signal per leading-edge height
  LmOptions<double> lm{};
};

/// Mean of the first nBins bins at or after pulseStart.
double leading_edge_height(const TimeTrace& trace, double pulseStart, std::size_t nBins = 20);

/// Recovery model h2/h1 = q (1 - exp(-tau/t1)) + 1 - q.
double t1_model(double tau, double t1, double q);

/// (d/dt1, d/dq) of t1_model.
Eigen::Vector2d t1_model_gradient(double tau, double t1, double q);

/// Fits (t1, q) to the measured ratios h2/h1. Throws InvalidParameters for
/// fewer than 3 records, RankDeficientError when all delays coincide and
/// NonConvergence<T1FitResult> when the optimizer gives up.
T1FitResult fit_t1(std::span<const PulsePairRecord> records, const T1FitOptions& options = {});

/// Dead-time error on the second leading edge as a function of delay.
using EpsilonModel = std::function<double(double tau)>;

/// Pile-up aware fit: each ratio carries the extra term
/// (eps1 - eps2(tau)) / h1, where h1 is the measured (already reduced)
/// first-pulse height. With eps = 0 this is exactly fit_t1.
T1FitResult fit_t1_corrected(std::span<const PulsePairRecord> records, double epsilon1,
                             const EpsilonModel& epsilon2, const T1FitOptions& options = {});

enum class BaselineMode { Fit, Fixed };

struct MultiExpFit {
  std::vector<double> amplitudes;  ///< at the trace start
  std::vector<double> taus;        ///< ascending
  double baseline = 0.0;
  std::vector<double> stderrAmplitudes;
  std::vector<double> stderrTaus;
  double stderrBaseline = 0.0;
  double rss = 0.0;
  bool converged = false;
  /// Time constants collapsed (|tau1 - tau2| / tau2 < 1e-3) or amplitudes vanished.
  bool degenerate = false;
  std::string warning;

  double operator()(double t) const;
};

/// Least-squares fit of sum_i A_i exp(-t/tau_i) + baseline with t measured
/// from the trace start (bin k sits at t = k * binWidth).
MultiExpFit fit_multi_exponential(const TimeTrace& trace, int nTerms,
                                  BaselineMode baseline = BaselineMode::Fit,
                                  double fixedBaseline = 0.0,
                                  const LmOptions<double>& lm = {});

}  // namespace spinrelax
