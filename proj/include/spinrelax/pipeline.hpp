#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spinrelax/deadtime.hpp"
#include "spinrelax/rate_model.hpp"
#include "spinrelax/t1fit.hpp"
#include "spinrelax/tempfit.hpp"
#include "spinrelax/time_trace.hpp"

// End-to-end pulse-pair experiment: populations -> PLE trace -> detector
// dead time -> shot noise -> leading-edge heights -> T1 fit.

namespace spinrelax {

enum class NoiseKind { None, Poisson };

struct NoiseConfig {
  NoiseKind kind = NoiseKind::None;
  std::uint64_t seed = 0;
  int repetitions = 1;  ///< pulse sequences summed per delay
};

struct ExperimentConfig {
  RateParams rate{20e6, 0.003 * 20e6, 1.0 / 2.4, 0.0, 0.0, 0.0};
  double pumpRate = 20e6;  ///< Hz; derived from rate.rabi when 0
  double pulse1 = 500e-6;  ///< s
  double pulse2 = 50e-6;   ///< s
  std::vector<double> taus{0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0};  ///< s, strictly increasing
  FieldConfig field{0.5, 0.0, 1.6};
  /// Zeeman splittings below this leave both ground levels under the laser.
  double spectralResolution = 15e6;  ///< Hz
  DetectorSpec detector{};
  NoiseConfig noise{};
  double scale = 3e5;        ///< Hz of detected signal per unit p3
  double binWidth = 100e-9;  ///< s
  std::size_t edgeBins = 20;
  bool correctPileup = false;
};

void validate(const ExperimentConfig& config);

/// Pump rates (1<->3, 2<->3) implied by drive strength and field.
std::pair<double, double> pump_rates(const ExperimentConfig& config);

/// JSON round trip; missing keys keep their defaults. Throws ParseError or
/// InvalidParameters.
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& config);

/// FNV-1a over the canonical JSON form, 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

struct PulsePairTraces {
  double tau = 0.0;
  TimeTrace first;   ///< P1, detected rate (after dead time and noise)
  TimeTrace second;  ///< P2
};

struct Synthesis {
  std::vector<PulsePairTraces> traces;
  std::vector<PulsePairRecord> records;          ///< from the detected traces
  std::vector<PulsePairRecord> detectedRecords;  ///< after dead time, before noise
  std::vector<PulsePairRecord> trueRecords;  ///< from the photon rate before the detector
};

/// Each delay starts from thermal equilibrium (the repump reset). Noise for
/// delay i uses a stream derived from (seed, i).
Synthesis synthesize(const ExperimentConfig& config);

/// Population trajectory under P1, optionally followed by a dark gap tau and P2.
/// Gap samples are not stored; P2 samples carry times shifted by P1 + tau.
struct PopulationSeries {
  std::vector<double> times;
  Eigen::Matrix3Xd populations;
};
PopulationSeries simulate_populations(const ExperimentConfig& config, std::optional<double> tau = {});

struct RunReport {
  std::string configHash;
  std::uint64_t seed = 0;
  std::string version;
  ExperimentConfig config;
  std::vector<PulsePairRecord> records;
  std::optional<T1FitResult> fit;
  std::optional<T1FitResult> correctedFit;
  std::string error;  ///< set when a fit failed; records are still reported
};

RunReport run_t1_pipeline(const ExperimentConfig& config);
RunReport run_t1_pipeline(const ExperimentConfig& config, const Synthesis& synthesis);

std::string report_to_json(const RunReport& report);
std::string fit_to_json(const T1FitResult& fit);

// CSV layouts (header line, then one row per record, LF or CRLF):
//   tau_s,h1_hz,h2_hz
//   temperature_K,rate_hz[,sigma_hz]
//   t_s,p1,p2,p3
void write_pulse_pairs_csv(std::ostream& out, const std::vector<PulsePairRecord>& records);
std::vector<PulsePairRecord> read_pulse_pairs_csv(std::istream& in);
void write_relaxation_csv(std::ostream& out, const std::vector<RelaxationPoint>& points);
std::vector<RelaxationPoint> read_relaxation_csv(std::istream& in);
void write_populations_csv(std::ostream& out, const PopulationSeries& series);

std::string library_version();

}  // namespace spinrelax
