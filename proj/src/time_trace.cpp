#include "spinrelax/time_trace.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <vector>

#include "spinrelax/csv.hpp"
#include "spinrelax/errors.hpp"

namespace spinrelax {

namespace csv {

bool read_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    fields.emplace_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return std::string(s.substr(first, last - first + 1));
}

double parse_double(std::string_view field, std::size_t line) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  if (!field.empty() && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (field.empty() || ec != std::errc() || ptr != end) {
    throw ParseError("not a number: '" + std::string(field) + "'", line);
  }
  return value;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace csv

void validate(const TimeTrace& trace) {
  if (!(trace.binWidth > 0.0) || !std::isfinite(trace.binWidth)) {
    throw InvalidParameters("trace bin width must be positive");
  }
  if (!std::isfinite(trace.t0)) throw InvalidParameters("trace t0 must be finite");
  for (Eigen::Index k = 0; k < trace.counts.size(); ++k) {
    const double v = trace.counts[k];
    if (!std::isfinite(v) || v < 0.0) {
      throw InvalidParameters("trace value " + std::to_string(k) + " is negative or non-finite");
    }
  }
}

TimeTrace slice(const TimeTrace& trace, Eigen::Index first, Eigen::Index count) {
  if (first < 0 || count < 0 || first + count > trace.size()) {
    throw RangeError("slice outside trace");
  }
  TimeTrace out;
  out.t0 = trace.time(first);
  out.binWidth = trace.binWidth;
  out.unit = trace.unit;
  out.counts = trace.counts.segment(first, count);
  return out;
}

TimeTrace rebin(const TimeTrace& trace, Eigen::Index factor) {
  if (factor < 1) throw InvalidParameters("rebin factor must be >= 1");
  const Eigen::Index n = trace.size() / factor;
  TimeTrace out;
  out.t0 = trace.t0;
  out.binWidth = trace.binWidth * static_cast<double>(factor);
  out.unit = trace.unit;
  out.counts = Eigen::Map<const Eigen::MatrixXd>(trace.counts.data(), factor, n)
                   .colwise()
                   .mean()
                   .transpose();
  if (trace.unit == TraceUnit::Counts) out.counts *= static_cast<double>(factor);
  return out;
}

void write_trace_csv(std::ostream& out, const TimeTrace& trace) {
  out << "t0_s,bin_width_s\n";
  out << csv::format_double(trace.t0) << ',' << csv::format_double(trace.binWidth) << '\n';
  for (Eigen::Index k = 0; k < trace.size(); ++k) out << csv::format_double(trace.counts[k]) << '\n';
}

TimeTrace read_trace_csv(std::istream& in) {
  std::string line;
  std::size_t lineNo = 0;
  auto next = [&]() {
    while (csv::read_line(in, line)) {
      ++lineNo;
      if (!csv::trim(line).empty()) return true;
    }
    return false;
  };

  if (!next()) throw ParseError("empty trace file", 1);
  auto fields = csv::split(line);
  if (fields.size() != 2) throw ParseError("expected header 't0_s,bin_width_s'", lineNo);
  if (fields[0] == "t0_s" && fields[1] == "bin_width_s") {
    if (!next()) throw ParseError("missing t0/bin width values", lineNo + 1);
    fields = csv::split(line);
    if (fields.size() != 2) throw ParseError("expected two values: t0, bin width", lineNo);
  }
  TimeTrace trace;
  trace.t0 = csv::parse_double(fields[0], lineNo);
  trace.binWidth = csv::parse_double(fields[1], lineNo);
  if (!(trace.binWidth > 0.0)) throw ParseError("bin width must be positive", lineNo);

  std::vector<double> values;
  bool first = true;
  while (next()) {
    const auto value = csv::trim(line);
    if (first && value == "counts") {
      first = false;
      continue;
    }
    first = false;
    if (value.find(',') != std::string::npos) throw ParseError("expected a single value", lineNo);
    const double v = csv::parse_double(value, lineNo);
    if (!std::isfinite(v) || v < 0.0) throw ParseError("value must be finite and >= 0", lineNo);
    values.push_back(v);
  }
  trace.counts = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  return trace;
}

void save_trace(const std::string& path, const TimeTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_trace_csv(out, trace);
}

TimeTrace load_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read_trace_csv(in);
}

}  // namespace spinrelax
