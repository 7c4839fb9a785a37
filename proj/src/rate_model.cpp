#include "spinrelax/rate_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spinrelax/constants.hpp"
#include "spinrelax/errors.hpp"
#include "spinrelax/markov_propagator.hpp"

namespace spinrelax {

namespace {

void require_rate(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0) {
    throw InvalidParameters(std::string(name) + " must be finite and >= 0");
  }
}

// Clears round-off negatives and restores the unit sum.
Populations renormalize(Populations p) {
  p = p.cwiseMax(0.0);
  return p / p.sum();
}

}  // namespace

void validate(const RateParams& params) {
  require_rate(params.gamma31, "gamma31");
  require_rate(params.gamma32, "gamma32");
  require_rate(params.gamma21, "gamma21");
  require_rate(params.delta, "delta");
  require_rate(params.temperature, "temperature");
  require_rate(params.rabi, "rabi");
}

double back_rate(const RateParams& params) {
  if (params.temperature <= 0.0 || params.gamma21 == 0.0) return 0.0;
  return params.gamma21 *
         std::exp(-params.delta / (constants::kBoltzmannMeVPerK * params.temperature));
}

double pump_rate_from_rabi(double rabi, const RateParams& params) {
  if (!std::isfinite(rabi) || rabi < 0.0) throw InvalidParameters("rabi must be >= 0");
  if (rabi == 0.0) return 0.0;
  const double optical = params.gamma31 + params.gamma32;
  if (!(optical > 0.0)) {
    throw InvalidParameters("non-zero drive needs gamma31 + gamma32 > 0");
  }
  return rabi * rabi / optical;
}

bool is_valid(const Populations& p, double tolerance) {
  if (!p.allFinite()) return false;
  if (std::abs(p.sum() - 1.0) > tolerance) return false;
  return (p.array() >= -tolerance).all() && (p.array() <= 1.0 + tolerance).all();
}

double DriveSchedule::duration() const {
  double total = 0.0;
  for (const auto& s : segments) total += s.duration;
  return total;
}

void validate(const DriveSchedule& schedule) {
  if (schedule.segments.empty()) throw InvalidParameters("drive schedule is empty");
  for (const auto& s : schedule.segments) {
    if (!std::isfinite(s.duration) || !(s.duration > 0.0)) {
      throw InvalidParameters("drive segment durations must be > 0");
    }
    require_rate(s.pumpRate, "pumpRate");
    require_rate(s.pumpRate2, "pumpRate2");
  }
}

Populations propagate(const RateParams& params, double pumpRate, double pumpRate2,
                      double duration, const Populations& init) {
  validate(params);
  require_rate(pumpRate, "pumpRate");
  require_rate(pumpRate2, "pumpRate2");
  if (!is_valid(init)) throw InvalidParameters("initial populations invalid");
  if (!(duration >= 0.0)) throw InvalidParameters("duration must be >= 0");
  const MarkovPropagator3<double> prop(rate_generator(params, pumpRate, pumpRate2));
  return renormalize(prop(duration) * init);
}

Trajectory evolve(const RateParams& params, const DriveSchedule& schedule,
                  const Populations& init, double binWidth) {
  validate(params);
  validate(schedule);
  if (!std::isfinite(binWidth) || !(binWidth > 0.0)) {
    throw InvalidParameters("binWidth must be > 0");
  }
  if (!is_valid(init)) throw InvalidParameters("initial populations invalid");

  const auto& segs = schedule.segments;
  std::vector<double> ends(segs.size());
  std::vector<MarkovPropagator3<double>> props;
  props.reserve(segs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    acc += segs[i].duration;
    ends[i] = acc;
    props.emplace_back(rate_generator(params, segs[i].pumpRate, segs[i].pumpRate2));
  }
  const double total = acc;
  const auto nSteps = static_cast<Eigen::Index>(std::floor(total / binWidth + 1e-9));

  // One-bin propagator per segment, reused for steps entirely inside it.
  std::vector<Eigen::Matrix3d> stepProps;
  stepProps.reserve(segs.size());
  for (const auto& p : props) stepProps.push_back(p(binWidth));

  Trajectory traj;
  traj.t0 = 0.0;
  traj.binWidth = binWidth;
  traj.populations.resize(3, nSteps + 1);
  Populations p = init;
  traj.populations.col(0) = p;

  const double eps = 1e-12 * binWidth;
  std::size_t seg = 0;
  for (Eigen::Index k = 1; k <= nSteps; ++k) {
    const double tStart = static_cast<double>(k - 1) * binWidth;
    const double tEnd = std::min(static_cast<double>(k) * binWidth, total);
    while (seg + 1 < segs.size() && ends[seg] <= tStart + eps) ++seg;
    if (tEnd <= ends[seg] + eps) {
      p = stepProps[seg] * p;
    } else {
      double t = tStart;
      std::size_t s = seg;
      while (t < tEnd - eps && s < segs.size()) {
        const double stop = std::min(ends[s], tEnd);
        if (stop > t) p = props[s](stop - t) * p;
        t = stop;
        if (t >= ends[s] - eps) ++s;
      }
    }
    p = renormalize(p);
    traj.populations.col(k) = p;
  }
  return traj;
}

Populations steady_state(const RateParams& params, double pumpRate, double pumpRate2) {
  validate(params);
  require_rate(pumpRate, "pumpRate");
  require_rate(pumpRate2, "pumpRate2");
  const Eigen::Vector3d w = stationary_tree_sums(rate_generator(params, pumpRate, pumpRate2));
  const double total = w.sum();
  if (!(total > 0.0)) {
    throw AmbiguousSteadyState("rate generator has a stationary space of dimension > 1");
  }
  return w / total;
}

Populations thermal_equilibrium(const RateParams& params) { return steady_state(params, 0.0); }

TimeTrace ple_signal(const Trajectory& trajectory, double scale) {
  if (!std::isfinite(scale) || !(scale > 0.0)) throw InvalidParameters("scale must be > 0");
  TimeTrace trace;
  trace.t0 = trajectory.t0;
  trace.binWidth = trajectory.binWidth;
  trace.unit = TraceUnit::RateHz;
  trace.counts = scale * trajectory.populations.row(2).transpose();
  return trace;
}

void validate(const FieldConfig& field) {
  if (!std::isfinite(field.b) || field.b < 0.0) throw InvalidParameters("field b must be >= 0");
  if (!(field.theta >= 0.0 && field.theta <= constants::kPi / 2 + 1e-12)) {
    throw InvalidParameters("field angle must lie in [0, pi/2]");
  }
  if (!(field.gParallel > 0.0 && field.gParallel <= 2.0)) {
    throw InvalidParameters("gParallel must lie in (0, 2]");
  }
}

double zeeman_splitting(const FieldConfig& field) {
  validate(field);
  // sin(pi/2 - theta) is exactly 0 at theta = pi/2, unlike cos(theta).
  return field.gParallel * std::abs(std::sin(constants::kPi / 2 - field.theta)) *
         constants::kBohrMagnetonHzPerT *
         field.b;
}

}  // namespace spinrelax
