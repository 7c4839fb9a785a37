#include "spinrelax/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <json.hpp>
#include <ostream>
#include <random>

#include "spinrelax/csv.hpp"
#include "spinrelax/errors.hpp"

namespace spinrelax {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Bin averages of scale * p3 by the trapezoid rule on the sample grid.
TimeTrace photon_trace(const Trajectory& traj, double scale, double t0) {
  TimeTrace out;
  out.t0 = t0;
  out.binWidth = traj.binWidth;
  out.unit = TraceUnit::RateHz;
  const Eigen::Index n = traj.size() - 1;
  const auto p3 = traj.populations.row(2);
  out.counts = (0.5 * scale) * (p3.segment(0, n) + p3.segment(1, n)).transpose();
  out.counts = out.counts.cwiseMax(0.0);
  return out;
}

double edge(const TimeTrace& trace, std::size_t bins) { return leading_edge_height(trace, trace.t0, bins); }

void add_shot_noise(TimeTrace& trace, double exposurePerBin, std::mt19937_64& rng) {
  for (double& r : trace.counts) {
    const double mean = r * exposurePerBin;
    r = mean > 0.0 ? static_cast<double>(std::poisson_distribution<long long>(mean)(rng)) / exposurePerBin : 0.0;
  }
}

template <class T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw InvalidParameters(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* s) { return k == s; }) == keys.end())
      throw InvalidParameters("unknown key '" + k + "' in " + where);
  }
}

json fit_json(const T1FitResult& f) {
  return {{"t1_s", f.t1},       {"q", f.q},     {"stderr_t1_s", f.stderrT1}, {"stderr_q", f.stderrQ},
          {"rss", f.rss},       {"converged", f.converged}, {"iterations", f.iterations}};
}

template <class Row>
std::vector<Row> read_rows(std::istream& in, std::size_t minFields, std::size_t maxFields,
                           const std::vector<std::string>& header, Row (*make)(const std::vector<double>&)) {
  std::vector<Row> rows;
  std::string line;
  std::size_t lineNo = 0;
  bool seenFirst = false;
  while (csv::read_line(in, line)) {
    ++lineNo;
    if (csv::trim(line).empty()) continue;
    const auto fields = csv::split(line);
    if (!seenFirst) {
      seenFirst = true;
      std::string first = csv::trim(fields[0]);
      std::transform(first.begin(), first.end(), first.begin(), [](unsigned char c) { return std::tolower(c); });
      if (first == header[0]) {
        if (fields.size() < minFields || fields.size() > maxFields)
          throw ParseError("unexpected header column count", lineNo);
        continue;
      }
    }
    if (fields.size() < minFields || fields.size() > maxFields)
      throw ParseError("expected " + std::to_string(minFields) + (minFields == maxFields ? "" : "-" + std::to_string(maxFields)) +
                           " fields, got " + std::to_string(fields.size()),
                       lineNo);
    std::vector<double> v;
    for (const auto& f : fields) v.push_back(csv::parse_double(csv::trim(f), lineNo));
    try {
      rows.push_back(make(v));
    } catch (const InvalidParameters& e) {
      throw ParseError(e.what(), lineNo);
    }
  }
  if (!seenFirst) throw ParseError("empty file", 1);
  return rows;
}

}  // namespace

std::string library_version() { return SPINRELAX_VERSION; }

void validate(const ExperimentConfig& c) {
  validate(c.rate);
  validate(c.field);
  validate(c.detector);
  if (!(c.binWidth > 0.0) || !std::isfinite(c.binWidth)) throw InvalidParameters("bin width must be > 0");
  if (c.edgeBins == 0) throw InvalidParameters("edge_bins must be >= 1");
  const double minPulse = static_cast<double>(c.edgeBins) * c.binWidth;
  if (!(c.pulse1 >= minPulse) || !(c.pulse2 >= minPulse) || !std::isfinite(c.pulse1) || !std::isfinite(c.pulse2))
    throw InvalidParameters("pulses must cover at least edge_bins bins");
  if (c.taus.empty()) throw InvalidParameters("need at least one delay");
  for (std::size_t i = 0; i < c.taus.size(); ++i) {
    if (!(c.taus[i] > 0.0) || !std::isfinite(c.taus[i])) throw InvalidParameters("delays must be > 0");
    if (i > 0 && !(c.taus[i] > c.taus[i - 1])) throw InvalidParameters("delays must be strictly increasing");
  }
  if (!(c.scale > 0.0) || !std::isfinite(c.scale)) throw InvalidParameters("scale must be > 0");
  if (!(c.spectralResolution >= 0.0)) throw InvalidParameters("spectral resolution must be >= 0");
  if (c.noise.repetitions < 1) throw InvalidParameters("repetitions must be >= 1");
  if (!(c.pumpRate >= 0.0) || !std::isfinite(c.pumpRate)) throw InvalidParameters("pump rate must be >= 0");
  if (c.pumpRate == 0.0 && !(c.rate.rabi > 0.0)) throw InvalidParameters("need pump_rate_hz or rabi_hz");
}

std::pair<double, double> pump_rates(const ExperimentConfig& c) {
  const double w = c.pumpRate > 0.0 ? c.pumpRate : pump_rate_from_rabi(c.rate.rabi, c.rate);
  const double w2 = zeeman_splitting(c.field) < c.spectralResolution ? w : 0.0;
  return {w, w2};
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n'));
    throw ParseError(std::string("invalid JSON: ") + e.what(), line);
  }
  ExperimentConfig c;
  try {
    reject_unknown(j,
                   {"rate", "pump_rate_hz", "p1_s", "p2_s", "taus_s", "field", "spectral_resolution_hz", "detector",
                    "noise", "scale_hz", "bin_width_s", "edge_bins", "correct_pileup"},
                   "config");
    if (j.contains("rate")) {
      const auto& r = j.at("rate");
      reject_unknown(r, {"gamma31_hz", "gamma32_hz", "gamma21_hz", "delta_mev", "temperature_k", "rabi_hz"}, "rate");
      take(r, "gamma31_hz", c.rate.gamma31);
      take(r, "gamma32_hz", c.rate.gamma32);
      take(r, "gamma21_hz", c.rate.gamma21);
      take(r, "delta_mev", c.rate.delta);
      take(r, "temperature_k", c.rate.temperature);
      take(r, "rabi_hz", c.rate.rabi);
    }
    take(j, "pump_rate_hz", c.pumpRate);
    take(j, "p1_s", c.pulse1);
    take(j, "p2_s", c.pulse2);
    take(j, "taus_s", c.taus);
    if (j.contains("field")) {
      const auto& f = j.at("field");
      reject_unknown(f, {"b_t", "theta_rad", "g_parallel"}, "field");
      take(f, "b_t", c.field.b);
      take(f, "theta_rad", c.field.theta);
      take(f, "g_parallel", c.field.gParallel);
    }
    take(j, "spectral_resolution_hz", c.spectralResolution);
    if (j.contains("detector")) {
      const auto& d = j.at("detector");
      reject_unknown(d, {"dead_time_s", "max_rate_hz"}, "detector");
      take(d, "dead_time_s", c.detector.deadTime);
      take(d, "max_rate_hz", c.detector.maxRate);
    }
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      reject_unknown(n, {"kind", "seed", "repetitions"}, "noise");
      std::string kind = "none";
      take(n, "kind", kind);
      if (kind == "none") c.noise.kind = NoiseKind::None;
      else if (kind == "poisson") c.noise.kind = NoiseKind::Poisson;
      else throw InvalidParameters("noise kind must be 'none' or 'poisson'");
      take(n, "seed", c.noise.seed);
      take(n, "repetitions", c.noise.repetitions);
    }
    take(j, "scale_hz", c.scale);
    take(j, "bin_width_s", c.binWidth);
    take(j, "edge_bins", c.edgeBins);
    take(j, "correct_pileup", c.correctPileup);
  } catch (const json::exception& e) {
    throw InvalidParameters(std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

namespace {

json config_json(const ExperimentConfig& c) {
  json detector = {{"dead_time_s", c.detector.deadTime}};
  if (std::isfinite(c.detector.maxRate)) detector["max_rate_hz"] = c.detector.maxRate;
  return {
      {"rate",
       {{"gamma31_hz", c.rate.gamma31},
        {"gamma32_hz", c.rate.gamma32},
        {"gamma21_hz", c.rate.gamma21},
        {"delta_mev", c.rate.delta},
        {"temperature_k", c.rate.temperature},
        {"rabi_hz", c.rate.rabi}}},
      {"pump_rate_hz", c.pumpRate},
      {"p1_s", c.pulse1},
      {"p2_s", c.pulse2},
      {"taus_s", c.taus},
      {"field", {{"b_t", c.field.b}, {"theta_rad", c.field.theta}, {"g_parallel", c.field.gParallel}}},
      {"spectral_resolution_hz", c.spectralResolution},
      {"detector", detector},
      {"noise",
       {{"kind", c.noise.kind == NoiseKind::Poisson ? "poisson" : "none"},
        {"seed", c.noise.seed},
        {"repetitions", c.noise.repetitions}}},
      {"scale_hz", c.scale},
      {"bin_width_s", c.binWidth},
      {"edge_bins", c.edgeBins},
      {"correct_pileup", c.correctPileup},
  };
}

}  // namespace

std::string config_to_json(const ExperimentConfig& config) { return config_json(config).dump(2); }

std::string config_hash(const ExperimentConfig& config) {
  const std::string canon = config_json(config).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Synthesis synthesize(const ExperimentConfig& config) {
  validate(config);
  const auto [w, w2] = pump_rates(config);
  const RateParams& rp = config.rate;
  const double bw = config.binWidth;

  const Populations p0 = thermal_equilibrium(rp);
  const DriveSchedule s1{{{config.pulse1, w, w2}}};
  const DriveSchedule s2{{{config.pulse2, w, w2}}};
  const TimeTrace photon1 = photon_trace(evolve(rp, s1, p0, bw), config.scale, 0.0);
  const Populations pEnd1 = propagate(rp, w, w2, config.pulse1, p0);
  const double dead = config.detector.deadTime;
  const TimeTrace detected1 = dead > 0.0 ? apply_dead_time(photon1, config.detector) : photon1;

  Synthesis out;
  const double exposure = bw * config.noise.repetitions;
  for (std::size_t i = 0; i < config.taus.size(); ++i) {
    const double tau = config.taus[i];
    const Populations pGap = propagate(rp, 0.0, 0.0, tau, pEnd1);
    const double start2 = config.pulse1 + tau;
    const TimeTrace photon2 = photon_trace(evolve(rp, s2, pGap, bw), config.scale, start2);

    TimeTrace m1 = detected1, m2 = photon2;
    if (dead > 0.0) {
      if (tau >= dead) {
        m2 = apply_dead_time(photon2, config.detector);
      } else {
        // The detector has not recovered from P1: run both pulses and the dark gap as one stream.
        const auto gapBins = static_cast<Eigen::Index>(std::llround(tau / bw));
        TimeTrace joint = photon1;
        joint.counts.resize(photon1.size() + gapBins + photon2.size());
        joint.counts << photon1.counts, Eigen::VectorXd::Zero(gapBins), photon2.counts;
        const TimeTrace dj = apply_dead_time(joint, config.detector);
        m1.counts = dj.counts.head(photon1.size());
        m2.counts = dj.counts.tail(photon2.size());
      }
    }
    m2.t0 = start2;
    out.trueRecords.push_back({tau, edge(photon1, config.edgeBins), edge(photon2, config.edgeBins)});
    out.detectedRecords.push_back({tau, edge(m1, config.edgeBins), edge(m2, config.edgeBins)});

    if (config.noise.kind == NoiseKind::Poisson) {
      std::mt19937_64 rng(splitmix64(config.noise.seed ^ splitmix64(i + 1)));
      add_shot_noise(m1, exposure, rng);
      add_shot_noise(m2, exposure, rng);
    }
    out.records.push_back({tau, edge(m1, config.edgeBins), edge(m2, config.edgeBins)});
    out.traces.push_back({tau, std::move(m1), std::move(m2)});
  }
  return out;
}

PopulationSeries simulate_populations(const ExperimentConfig& config, std::optional<double> tau) {
  validate(config);
  const auto [w, w2] = pump_rates(config);
  const Populations p0 = thermal_equilibrium(config.rate);
  const Trajectory t1 = evolve(config.rate, DriveSchedule{{{config.pulse1, w, w2}}}, p0, config.binWidth);
  PopulationSeries s;
  s.populations = t1.populations;
  for (Eigen::Index k = 0; k < t1.size(); ++k) s.times.push_back(static_cast<double>(k) * config.binWidth);
  if (tau) {
    if (!(*tau >= 0.0)) throw InvalidParameters("tau must be >= 0");
    const Populations pEnd = propagate(config.rate, w, w2, config.pulse1, p0);
    const Populations pGap = propagate(config.rate, 0.0, 0.0, *tau, pEnd);
    const Trajectory t2 = evolve(config.rate, DriveSchedule{{{config.pulse2, w, w2}}}, pGap, config.binWidth);
    const Eigen::Index n1 = s.populations.cols();
    s.populations.conservativeResize(3, n1 + t2.size());
    s.populations.rightCols(t2.size()) = t2.populations;
    for (Eigen::Index k = 0; k < t2.size(); ++k)
      s.times.push_back(config.pulse1 + *tau + static_cast<double>(k) * config.binWidth);
  }
  return s;
}

RunReport run_t1_pipeline(const ExperimentConfig& config) { return run_t1_pipeline(config, synthesize(config)); }

RunReport run_t1_pipeline(const ExperimentConfig& config, const Synthesis& synthesis) {
  RunReport report;
  report.configHash = config_hash(config);
  report.seed = config.noise.seed;
  report.version = library_version();
  report.config = config;
  report.records = synthesis.records;

  T1FitOptions opts;
  if (config.noise.kind == NoiseKind::Poisson) {
    opts.poissonWeights = true;
    opts.exposure = static_cast<double>(config.edgeBins) * config.binWidth * config.noise.repetitions;
  }
  auto attempt = [&](auto&& fit, std::optional<T1FitResult>& slot, const char* label) {
    try {
      slot = fit();
    } catch (const NonConvergence<T1FitResult>& e) {
      slot = e.best();
      report.error += std::string(report.error.empty() ? "" : "; ") + label + ": " + e.what();
    } catch (const Error& e) {
      report.error += std::string(report.error.empty() ? "" : "; ") + label + ": " + e.what();
    }
  };
  attempt([&] { return fit_t1(synthesis.records, opts); }, report.fit, "fit");

  if (config.correctPileup) {
    double eps1 = 0.0;
    std::vector<double> taus, eps2;
    for (std::size_t i = 0; i < synthesis.trueRecords.size(); ++i) {
      eps1 += synthesis.trueRecords[i].h1 - synthesis.detectedRecords[i].h1;
      taus.push_back(synthesis.trueRecords[i].tau);
      eps2.push_back(synthesis.trueRecords[i].h2 - synthesis.detectedRecords[i].h2);
    }
    eps1 /= static_cast<double>(std::max<std::size_t>(1, synthesis.trueRecords.size()));
    attempt([&] { return fit_t1_corrected(synthesis.records, eps1, interpolate_epsilon(taus, eps2), opts); },
            report.correctedFit, "corrected fit");
  }
  return report;
}

std::string fit_to_json(const T1FitResult& fit) { return fit_json(fit).dump(2); }

std::string report_to_json(const RunReport& r) {
  json records = json::array();
  for (const auto& rec : r.records) records.push_back({{"tau_s", rec.tau}, {"h1_hz", rec.h1}, {"h2_hz", rec.h2}});
  json j = {{"config_hash", r.configHash}, {"seed", r.seed},          {"version", r.version},
            {"config", config_json(r.config)}, {"records", records}, {"fit", nullptr}};
  if (r.fit) j["fit"] = fit_json(*r.fit);
  if (r.config.correctPileup) j["corrected_fit"] = r.correctedFit ? fit_json(*r.correctedFit) : json(nullptr);
  if (!r.error.empty()) j["error"] = r.error;
  return j.dump(2);
}

void write_pulse_pairs_csv(std::ostream& out, const std::vector<PulsePairRecord>& records) {
  out << "tau_s,h1_hz,h2_hz\n";
  for (const auto& r : records)
    out << csv::format_double(r.tau) << ',' << csv::format_double(r.h1) << ',' << csv::format_double(r.h2) << '\n';
}

std::vector<PulsePairRecord> read_pulse_pairs_csv(std::istream& in) {
  return read_rows<PulsePairRecord>(in, 3, 3, {"tau_s", "h1_hz", "h2_hz"}, [](const std::vector<double>& v) {
    if (v[0] < 0.0) throw InvalidParameters("tau must be >= 0");
    if (!(v[1] > 0.0) || v[2] < 0.0) throw InvalidParameters("heights must be positive");
    return PulsePairRecord{v[0], v[1], v[2]};
  });
}

void write_relaxation_csv(std::ostream& out, const std::vector<RelaxationPoint>& points) {
  out << "temperature_K,rate_hz,sigma_hz\n";
  for (const auto& p : points)
    out << csv::format_double(p.temperature) << ',' << csv::format_double(p.rate) << ','
        << csv::format_double(p.sigma) << '\n';
}

std::vector<RelaxationPoint> read_relaxation_csv(std::istream& in) {
  return read_rows<RelaxationPoint>(in, 2, 3, {"temperature_k", "rate_hz", "sigma_hz"}, [](const std::vector<double>& v) {
    if (!(v[0] > 0.0)) throw InvalidParameters("temperature must be > 0");
    if (!(v[1] > 0.0)) throw InvalidParameters("rate must be > 0");
    const double sigma = v.size() > 2 ? v[2] : 0.0;
    if (sigma < 0.0) throw InvalidParameters("sigma must be >= 0");
    return RelaxationPoint{v[0], v[1], sigma};
  });
}

void write_populations_csv(std::ostream& out, const PopulationSeries& s) {
  out << "t_s,p1,p2,p3\n";
  for (std::size_t k = 0; k < s.times.size(); ++k) {
    const auto col = s.populations.col(static_cast<Eigen::Index>(k));
    out << csv::format_double(s.times[k]) << ',' << csv::format_double(col(0)) << ',' << csv::format_double(col(1))
        << ',' << csv::format_double(col(2)) << '\n';
  }
}

}  // namespace spinrelax
