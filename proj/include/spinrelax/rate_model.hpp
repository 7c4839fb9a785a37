#pragma once

#include <Eigen/Core>
#include <vector>

#include "spinrelax/time_trace.hpp"

// Three-level population model of an optically addressed defect:
//   state 1  ground level addressed by the laser
//   state 2  shelving level (dark spin sublevel, or a second orbital doublet)
//   state 3  optically excited level
// The PLE observable is proportional to the excited-state population.

namespace spinrelax {

struct RateParams {
  double gamma31 = 0.0;      ///< decay 3 -> 1, Hz
  double gamma32 = 0.0;      ///< decay 3 -> 2, Hz
  double gamma21 = 0.0;      ///< relaxation 2 -> 1, Hz
  double delta = 0.0;        ///< energy of level 2 above level 1, meV
  double temperature = 0.0;  ///< K
  double rabi = 0.0;         ///< optical drive strength, Hz
};

/// Throws InvalidParameters on negative or non-finite fields.
void validate(const RateParams& params);

/// Thermal back-rate 1 -> 2, gamma21 * exp(-delta / kT). Exactly 0 at T = 0.
double back_rate(const RateParams& params);

/// Incoherent pump rate W = rabi^2 / (gamma31 + gamma32).
double pump_rate_from_rabi(double rabi, const RateParams& params);

using Populations = Eigen::Vector3d;

bool is_valid(const Populations& p, double tolerance = 1e-9);

/// Piece of constant optical drive. `pumpRate` drives 1 <-> 3; `pumpRate2`
/// drives 2 <-> 3 and is non-zero only when both ground levels are resonant
/// (zero-field degeneracy).
struct DriveSegment {
  double duration = 0.0;
  double pumpRate = 0.0;
  double pumpRate2 = 0.0;
};

struct DriveSchedule {
  std::vector<DriveSegment> segments;
  double duration() const;
};

void validate(const DriveSchedule& schedule);

/// Rate generator Q with dp/dt = Q p. Columns sum to zero.
template <typename Scalar = double>
Eigen::Matrix<Scalar, 3, 3> rate_generator(const RateParams& params, Scalar pumpRate,
                                           Scalar pumpRate2 = Scalar(0)) {
  const Scalar g31 = Scalar(params.gamma31), g32 = Scalar(params.gamma32);
  const Scalar g21 = Scalar(params.gamma21), g12 = Scalar(back_rate(params));
  Eigen::Matrix<Scalar, 3, 3> Q;
  // rate(from -> to) sits at Q(to, from)
  Q(1, 0) = g12;
  Q(2, 0) = pumpRate;
  Q(0, 1) = g21;
  Q(2, 1) = pumpRate2;
  Q(0, 2) = g31 + pumpRate;
  Q(1, 2) = g32 + pumpRate2;
  for (int i = 0; i < 3; ++i) Q(i, i) = Scalar(0);
  for (int i = 0; i < 3; ++i) Q(i, i) = -Q.col(i).sum();
  return Q;
}

/// Populations sampled at t0 + k*binWidth, k = 0..N; column k is sample k.
struct Trajectory {
  double t0 = 0.0;
  double binWidth = 1.0;
  Eigen::Matrix3Xd populations;

  Eigen::Index size() const { return populations.cols(); }
};

/// Advances `init` through `duration` of constant drive.
Populations propagate(const RateParams& params, double pumpRate, double pumpRate2,
                      double duration, const Populations& init);

/// Exact piecewise-constant evolution, sampled every binWidth from t = 0 to
/// the last grid point inside the schedule.
Trajectory evolve(const RateParams& params, const DriveSchedule& schedule,
                  const Populations& init, double binWidth);

/// Stationary populations under constant drive. Throws AmbiguousSteadyState
/// when the generator has more than one stationary vector.
Populations steady_state(const RateParams& params, double pumpRate, double pumpRate2 = 0.0);

/// Laser-off stationary state (Boltzmann populations of levels 1 and 2).
Populations thermal_equilibrium(const RateParams& params);

/// scale * p3(t) on the trajectory grid.
TimeTrace ple_signal(const Trajectory& trajectory, double scale);

struct FieldConfig {
  double b = 0.0;          ///< T
  double theta = 0.0;      ///< angle to the c-axis, rad
  double gParallel = 1.6;  ///< g-factor along the axis; perpendicular g is 0
};

void validate(const FieldConfig& field);

/// Zeeman splitting in Hz: gParallel |cos theta| (muB/h) b.
double zeeman_splitting(const FieldConfig& field);

}  // namespace spinrelax
