#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <iosfwd>
#include <string>

namespace spinrelax {

enum class TraceUnit { Counts, RateHz };

/// Uniformly binned photon-count (or rate) time series. Bin k covers
/// [t0 + k*binWidth, t0 + (k+1)*binWidth).
struct TimeTrace {
  double t0 = 0.0;
  double binWidth = 1.0;
  Eigen::VectorXd counts;
  TraceUnit unit = TraceUnit::RateHz;

  Eigen::Index size() const { return counts.size(); }
  double time(Eigen::Index k) const { return t0 + static_cast<double>(k) * binWidth; }
  double duration() const { return static_cast<double>(counts.size()) * binWidth; }
};

/// Throws InvalidParameters if binWidth <= 0 or any value is negative or non-finite.
void validate(const TimeTrace& trace);

/// Bins [first, first+count) as a new trace with t0 shifted accordingly.
TimeTrace slice(const TimeTrace& trace, Eigen::Index first, Eigen::Index count);

/// Averages groups of `factor` consecutive bins. Trailing partial groups are dropped.
TimeTrace rebin(const TimeTrace& trace, Eigen::Index factor);

// CSV layout:
//   t0_s,bin_width_s
//   <t0>,<bin width>
//   <value>        (one per line)
// LF or CRLF line endings. An optional `counts` line may precede the values.
void write_trace_csv(std::ostream& out, const TimeTrace& trace);
TimeTrace read_trace_csv(std::istream& in);
void save_trace(const std::string& path, const TimeTrace& trace);
TimeTrace load_trace(const std::string& path);

}  // namespace spinrelax
