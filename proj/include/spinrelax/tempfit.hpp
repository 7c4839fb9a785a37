#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spinrelax/levenberg_marquardt.hpp"

// Temperature dependence of the spin-lattice relaxation rate:
//   1/T1 = cD T + cR T^n + cO exp(-delta / kB T) + gamma0      (n = 5 or 9)
// and the alternative power law alpha T + beta T^gamma.

namespace spinrelax {

struct TempModelParams {
  double cD = 0.0;      ///< Hz/K, direct process
  double cR = 0.0;      ///< Hz/K^n, Raman process
  int n = 5;            ///< Raman exponent, 5 or 9
  double cO = 0.0;      ///< Hz, Orbach prefactor
  double delta = 7.0;   ///< meV, Orbach activation energy
  double gamma0 = 0.0;  ///< Hz, temperature-independent floor
};

struct PowerLawParams {
  double alpha = 0.0;  ///< Hz/K
  double beta = 0.0;   ///< Hz/K^gamma
  double gamma = 2.0;
};

struct RelaxationPoint {
  double temperature = 0.0;  ///< K
  double rate = 0.0;         ///< Hz, 1/T1
  double sigma = 0.0;        ///< Hz, optional (0 = unweighted)
};

void validate(const TempModelParams& params);

double model_rate(const TempModelParams& params, double temperature);

/// d rate / d(cD, cR, cO, delta, gamma0).
Eigen::Matrix<double, 5, 1> model_rate_gradient(const TempModelParams& params, double temperature);

double power_law_rate(const PowerLawParams& params, double temperature);

/// d rate / d(alpha, beta, gamma).
Eigen::Vector3d power_law_gradient(const PowerLawParams& params, double temperature);

struct FitDiagnostics {
  double rss = 0.0;  ///< in log-rate space
  std::size_t points = 0;
  int parameters = 0;
  int iterations = 0;
  bool converged = false;
  bool illConditioned = false;  ///< data spans less than a factor 2 in temperature
  bool degenerate = false;      ///< a parameter is unidentifiable
  std::string warning;
  std::uint64_t dataFingerprint = 0;
};

struct TempFit {
  TempModelParams params;
  TempModelParams stderrs;  ///< n is copied, not an error
  FitDiagnostics diagnostics;
};

struct PowerLawFit {
  PowerLawParams params;
  PowerLawParams stderrs;
  FitDiagnostics diagnostics;
};

struct ConstantFit {
  double gamma0 = 0.0;
  double stderrGamma0 = 0.0;
  FitDiagnostics diagnostics;
};

struct TempFitOptions {
  std::optional<TempModelParams> initial;  ///< skips the grid initialization
  double maxDelta = 50.0;                  ///< meV, upper bound on delta
  /// RSS floor ~ 3e-10 rms log residual: noiseless data stop there instead
  /// of chasing a zero coefficient down the softplus tail.
  LmOptions<double> lm{500, 1e-10, 1e-12, 1e-18, 1e-3};
};

struct PowerLawOptions {
  std::optional<PowerLawParams> initial;
  double maxGamma = 50.0;
  LmOptions<double> lm{500, 1e-10, 1e-12, 1e-18, 1e-3};
};

/// Stable identity of a data set, used to check that compared fits share data.
std::uint64_t fingerprint(std::span<const RelaxationPoint> data);

/// Non-negative least squares in log-rate space. Coefficients are softplus
/// reparameterized, delta is confined to (0, maxDelta].
TempFit fit_temp_model(std::span<const RelaxationPoint> data, int n,
                       const TempFitOptions& options = {});

/// The n = 5 and n = 9 fits, in that order.
std::vector<TempFit> fit_temp_model_both(std::span<const RelaxationPoint> data,
                                         const TempFitOptions& options = {});

PowerLawFit fit_power_law(std::span<const RelaxationPoint> data, const PowerLawOptions& options = {});

/// Temperature-independent rate only (gamma0).
ConstantFit fit_constant_rate(std::span<const RelaxationPoint> data);

struct ModelSummary {
  std::string name;
  int parameters = 0;
  double rss = 0.0;
  std::size_t points = 0;
  std::uint64_t dataFingerprint = 0;
};

ModelSummary summarize(const TempFit& fit);
ModelSummary summarize(const PowerLawFit& fit);
ModelSummary summarize(const ConstantFit& fit);

struct RankedModel {
  ModelSummary model;
  double aicc = 0.0;  ///< small-sample corrected Akaike criterion
  int rank = 0;       ///< 1 = preferred
};

/// Ranks fits of the same data by AICc; ties go to fewer parameters, then name.
/// Throws UsageError for fewer than 2 fits or fits of different data.
std::vector<RankedModel> compare_models(std::span<const RelaxationPoint> data,
                                        std::span<const ModelSummary> fits);

}  // namespace spinrelax
