#include "spinrelax/t1fit.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "spinrelax/errors.hpp"

namespace spinrelax {

double leading_edge_height(const TimeTrace& trace, double pulseStart, std::size_t nBins) {
  if (nBins < 1) throw InvalidParameters("nBins must be >= 1");
  if (!(trace.binWidth > 0.0)) throw InvalidParameters("trace bin width must be positive");
  const double offset = (pulseStart - trace.t0) / trace.binWidth;
  if (offset < -1e-9) throw RangeError("pulse starts before the trace");
  const auto first = static_cast<Eigen::Index>(std::ceil(offset - 1e-9));
  const auto n = static_cast<Eigen::Index>(nBins);
  if (first + n > trace.size()) {
    throw RangeError("trace has fewer than " + std::to_string(nBins) + " bins after the pulse start");
  }
  return trace.counts.segment(first, n).mean();
}

double t1_model(double tau, double t1, double q) { return 1.0 - q * std::exp(-tau / t1); }

Eigen::Vector2d t1_model_gradient(double tau, double t1, double q) {
  const double e = std::exp(-tau / t1);
  return {-q * e * tau / (t1 * t1), -e};
}

namespace {

// Internal parameters: (log t1, q).
T1FitResult fit_ratios(const Eigen::VectorXd& tau, const Eigen::VectorXd& ratio,
                       const Eigen::VectorXd& weight, const T1FitOptions& options) {
  const Eigen::Index m = tau.size();

  double q0 = 1.0 - ratio.minCoeff();
  if (!(q0 > 1e-6)) q0 = 1e-3;
  // Log-linear slope through the origin over the interior recovery points.
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double y = (1.0 - ratio[i]) / q0;
    if (y > 0.02 && y < 0.98) {
      num += tau[i] * tau[i];
      den -= tau[i] * std::log(y);
    }
  }
  double t10;
  if (den > 0.0) {
    t10 = num / den;
  } else {
    std::vector<double> sorted(tau.data(), tau.data() + m);
    std::sort(sorted.begin(), sorted.end());
    t10 = sorted[sorted.size() / 2];
  }

  auto residuals = [&](const Eigen::VectorXd& x) {
    const double t1 = std::exp(x[0]);
    Eigen::VectorXd r(m);
    for (Eigen::Index i = 0; i < m; ++i) r[i] = weight[i] * (t1_model(tau[i], t1, x[1]) - ratio[i]);
    return r;
  };
  auto jacobian = [&](const Eigen::VectorXd& x) {
    const double t1 = std::exp(x[0]);
    Eigen::MatrixXd J(m, 2);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::Vector2d g = t1_model_gradient(tau[i], t1, x[1]);
      J(i, 0) = weight[i] * g[0] * t1;
      J(i, 1) = weight[i] * g[1];
    }
    return J;
  };

  Eigen::VectorXd x0(2);
  x0 << std::log(t10), q0;
  const auto lm = levenberg_marquardt<double>(residuals, jacobian, x0, options.lm);

  T1FitResult result;
  result.t1 = std::exp(lm.x[0]);
  result.q = lm.x[1];
  const Eigen::VectorXd se = standard_errors<double>(lm.jacobian, lm.rss);
  result.stderrT1 = result.t1 * se[0];
  result.stderrQ = se[1];
  result.rss = lm.rss;
  result.iterations = lm.iterations;
  result.converged = lm.converged();
  if (!result.converged) {
    throw NonConvergence<T1FitResult>(
        std::string("T1 fit did not converge (") + to_string(lm.status) + ")", result);
  }
  return result;
}

T1FitResult fit_with_offsets(std::span<const PulsePairRecord> records,
                             const Eigen::VectorXd& offsets, const T1FitOptions& options) {
  if (records.size() < 3) throw InvalidParameters("T1 fit needs at least 3 pulse-pair records");
  std::set<double> distinct;
  const auto m = static_cast<Eigen::Index>(records.size());
  Eigen::VectorXd tau(m), ratio(m), h1(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& rec = records[static_cast<std::size_t>(i)];
    if (!(rec.tau > 0.0) || !(rec.h1 > 0.0) || !(rec.h2 >= 0.0) || !std::isfinite(rec.h2)) {
      throw InvalidParameters("pulse-pair records need tau > 0, h1 > 0, h2 >= 0");
    }
    distinct.insert(rec.tau);
    tau[i] = rec.tau;
    h1[i] = rec.h1;
    ratio[i] = rec.h2 / rec.h1 - offsets[i];
  }
  if (distinct.size() < 2) throw RankDeficientError("all delays are equal; T1 is not identifiable");
  T1FitResult fit = fit_ratios(tau, ratio, Eigen::VectorXd::Ones(m), options);
  if (!options.poissonWeights) return fit;

  // Shot-noise weights from the fitted (not the observed) ratio, so the
  // weights do not correlate with the noise. A few reweighting passes settle.
  for (int pass = 0; pass < 3; ++pass) {
    Eigen::VectorXd weight(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double r = std::max(t1_model(tau[i], fit.t1, fit.q), 0.0);
      const double n1 = h1[i] * options.exposure;
      const double sigma = std::sqrt(r * r / n1 + std::max(r * n1, 1.0) / (n1 * n1));
      weight[i] = 1.0 / sigma;
    }
    fit = fit_ratios(tau, ratio, weight, options);
  }
  return fit;
}

}  // namespace

T1FitResult fit_t1(std::span<const PulsePairRecord> records, const T1FitOptions& options) {
  return fit_with_offsets(records, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(records.size())),
                          options);
}

T1FitResult fit_t1_corrected(std::span<const PulsePairRecord> records, double epsilon1,
                             const EpsilonModel& epsilon2, const T1FitOptions& options) {
  Eigen::VectorXd offsets(static_cast<Eigen::Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double eps2 = epsilon2 ? epsilon2(records[i].tau) : 0.0;
    offsets[static_cast<Eigen::Index>(i)] =
        records[i].h1 > 0.0 ? (epsilon1 - eps2) / records[i].h1 : 0.0;
  }
  return fit_with_offsets(records, offsets, options);
}

// ---------------------------------------------------------------------------
// multi-exponential

double MultiExpFit::operator()(double t) const {
  double v = baseline;
  for (std::size_t i = 0; i < amplitudes.size(); ++i) v += amplitudes[i] * std::exp(-t / taus[i]);
  return v;
}

namespace {

struct LinearSolve {
  Eigen::VectorXd coeffs;
  double rss = std::numeric_limits<double>::infinity();
};

// Amplitudes (and baseline) for fixed time constants.
LinearSolve solve_amplitudes(const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                             const std::vector<double>& taus, bool fitBaseline) {
  const Eigen::Index m = t.size();
  const auto nt = static_cast<Eigen::Index>(taus.size());
  Eigen::MatrixXd A(m, nt + (fitBaseline ? 1 : 0));
  for (Eigen::Index j = 0; j < nt; ++j) A.col(j) = (-t / taus[static_cast<std::size_t>(j)]).array().exp();
  if (fitBaseline) A.col(nt).setOnes();
  LinearSolve s;
  s.coeffs = A.colPivHouseholderQr().solve(y);
  s.rss = (A * s.coeffs - y).squaredNorm();
  return s;
}

}  // namespace

MultiExpFit fit_multi_exponential(const TimeTrace& trace, int nTerms, BaselineMode baselineMode,
                                  double fixedBaseline, const LmOptions<double>& lmOptions) {
  if (nTerms != 1 && nTerms != 2) throw InvalidParameters("nTerms must be 1 or 2");
  if (!(trace.binWidth > 0.0)) throw InvalidParameters("trace bin width must be positive");
  const Eigen::Index m = trace.size();
  if (m < 3 * (2 * nTerms + 1)) {
    throw InvalidParameters("trace too short for a " + std::to_string(nTerms) + "-term fit");
  }
  const bool fitBaseline = baselineMode == BaselineMode::Fit;
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(m, 0.0, static_cast<double>(m - 1) * trace.binWidth);
  const Eigen::VectorXd y = fitBaseline ? trace.counts : Eigen::VectorXd(trace.counts.array() - fixedBaseline);

  // Start from the best time constants on a log grid, with amplitudes solved
  // linearly for each candidate.
  const int gridSize = 40;
  const double lo = std::log(trace.binWidth);
  const double hi = std::log(10.0 * trace.duration());
  std::vector<double> grid(gridSize);
  for (int i = 0; i < gridSize; ++i) grid[i] = std::exp(lo + (hi - lo) * i / (gridSize - 1));

  std::vector<double> bestTaus;
  LinearSolve best;
  if (nTerms == 1) {
    for (double tau : grid) {
      auto s = solve_amplitudes(t, y, {tau}, fitBaseline);
      if (s.rss < best.rss) {
        best = s;
        bestTaus = {tau};
      }
    }
  } else {
    for (int i = 0; i < gridSize; ++i) {
      for (int j = i + 1; j < gridSize; ++j) {
        auto s = solve_amplitudes(t, y, {grid[i], grid[j]}, fitBaseline);
        if (s.rss < best.rss) {
          best = s;
          bestTaus = {grid[i], grid[j]};
        }
      }
    }
  }

  const Eigen::Index np = 2 * nTerms + (fitBaseline ? 1 : 0);
  Eigen::VectorXd x0(np);
  for (int i = 0; i < nTerms; ++i) {
    x0[i] = best.coeffs[i];
    x0[nTerms + i] = std::log(bestTaus[static_cast<std::size_t>(i)]);
  }
  if (fitBaseline) x0[2 * nTerms] = best.coeffs[nTerms];

  auto residuals = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd model = Eigen::VectorXd::Constant(m, fitBaseline ? x[2 * nTerms] : 0.0);
    for (int i = 0; i < nTerms; ++i) model.array() += x[i] * (-t.array() / std::exp(x[nTerms + i])).exp();
    return Eigen::VectorXd(model - y);
  };
  auto jacobian = [&](const Eigen::VectorXd& x) {
    Eigen::MatrixXd J(m, np);
    for (int i = 0; i < nTerms; ++i) {
      const double tau = std::exp(x[nTerms + i]);
      const Eigen::ArrayXd e = (-t.array() / tau).exp();
      J.col(i) = e;
      J.col(nTerms + i) = x[i] * e * t.array() / tau;
    }
    if (fitBaseline) J.col(2 * nTerms).setOnes();
    return J;
  };

  const auto lm = levenberg_marquardt<double>(residuals, jacobian, x0, lmOptions);
  const Eigen::VectorXd se = standard_errors<double>(lm.jacobian, lm.rss);

  MultiExpFit fit;
  std::vector<int> order(static_cast<std::size_t>(nTerms));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return lm.x[nTerms + a] < lm.x[nTerms + b]; });
  for (int i : order) {
    const double tau = std::exp(lm.x[nTerms + i]);
    fit.amplitudes.push_back(lm.x[i]);
    fit.taus.push_back(tau);
    fit.stderrAmplitudes.push_back(se[i]);
    fit.stderrTaus.push_back(tau * se[nTerms + i]);
  }
  fit.baseline = fitBaseline ? lm.x[2 * nTerms] : fixedBaseline;
  fit.stderrBaseline = fitBaseline ? se[2 * nTerms] : 0.0;
  fit.rss = lm.rss;
  fit.converged = lm.converged();

  const double yScale = std::max(trace.counts.cwiseAbs().maxCoeff(), std::abs(fit.baseline));
  const bool vanished = std::all_of(fit.amplitudes.begin(), fit.amplitudes.end(), [&](double a) {
    return std::abs(a) <= 1e-9 * std::max(yScale, 1e-300);
  });
  if (vanished) {
    fit.degenerate = true;
    fit.warning = "amplitudes vanish; time constants are unidentifiable";
  } else if (nTerms == 2 && std::abs(fit.taus[1] - fit.taus[0]) / fit.taus[1] < 1e-3) {
    fit.degenerate = true;
    fit.warning = "time constants collapsed";
  }
  if (!fit.converged && !fit.degenerate) {
    throw NonConvergence<MultiExpFit>(
        std::string("multi-exponential fit did not converge (") + to_string(lm.status) + ")", fit);
  }
  return fit;
}

}  // namespace spinrelax
