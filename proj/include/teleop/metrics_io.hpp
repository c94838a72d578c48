#pragma once

// Cross-track deflection metric, per-region RMS and the CSV formats used by
// the simulator: closed-loop logs, packet traces and comparison reports.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "teleop/geometry.hpp"

namespace teleop::io {

struct CrossTrack {
  double dy = 0.0;  // signed CG deflection, positive left of the path [m]
  double d = 0.0;   // arc length of the projection [m]
};

/// Nearest-segment projection of the CG onto the path; ties go to the smaller D.
CrossTrack cross_track(const Pose2D& pose, const Trajectory& path);

struct RegionBounds {
  std::string label;
  double start = 0.0;  // D_i [m]
  double end = 0.0;    // D_{i+1} [m]

  void validate() const;
  bool contains(double d) const { return d >= start && d < end; }
};

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DeflectionSample {
  double d = 0.0;
  double dy = 0.0;
};

/// sqrt(1/(D_{i+1} - D_i) * integral dY^2 dD) over the samples inside the
/// region, integrated with the trapezoid rule after sorting by D. The mean is
/// taken over the arc length the samples cover, so the unsampled sliver at
/// the region ends (and the rest of a region a run never finished) does not
/// dilute it. Throws MetricError("no samples") when the region holds no sample.
double rms_deflection(std::vector<DeflectionSample> samples, const RegionBounds& region);

inline constexpr const char* kLogVersionLine = "# teleop-sim log v1";

struct LogRow {
  double t = 0.0;
  double x = 0.0, y = 0.0, psi = 0.0, v = 0.0, beta = 0.0, yaw_rate = 0.0, delta = 0.0;
  std::string mode;
  std::string section;
  double dy = 0.0;
  double d = 0.0;
  std::int64_t obs_seq = -1;  // -1 before the first observation
  double obs_age = -1.0;      // [s], -1 before the first observation
  double cmd1 = 0.0;          // steering angle command, or NMPC steer rate
  double cmd2 = 0.0;          // acceleration command
  double nmpc_ms = 0.0;
  int nmpc_iters = 0;
  std::string nmpc_status = "none";

  bool operator==(const LogRow&) const = default;
};

struct SimLog {
  std::string mode;
  std::uint64_t seed = 0;
  std::vector<RegionBounds> regions;
  std::vector<LogRow> rows;
  std::vector<std::string> events;  // e.g. NMPC fallbacks, kept out of the CSV body

  std::vector<DeflectionSample> deflection_samples() const;
};

/// RMS deflection of a log inside a region.
double rms_deflection(const SimLog& log, const RegionBounds& region);

class LogFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_log(std::ostream& out, const SimLog& log);
void write_log(const std::string& path, const SimLog& log);
/// Throws LogFormatError on a version mismatch or a malformed line (with its number).
SimLog read_log(std::istream& in);
SimLog read_log(const std::string& path);

struct TraceRow {
  std::uint64_t seq = 0;
  double departure = 0.0;  // [s]
  double delay = 0.0;      // [s]
  double arrival = 0.0;    // [s]
  std::string payload_id;

  bool operator==(const TraceRow&) const = default;
};

void write_packet_trace(std::ostream& out, const std::vector<TraceRow>& rows);
std::vector<TraceRow> read_packet_trace(std::istream& in);
std::vector<TraceRow> read_packet_trace(const std::string& path);

struct SectionRms {
  std::string section;
  std::string mode;
  std::uint64_t seed = 0;
  double rms = 0.0;
};

void write_report_csv(std::ostream& out, const std::vector<SectionRms>& rows);
/// Aligned table of the seed-averaged RMS, one line per section, one column per mode;
/// n/a when a run never reached the section.
std::string format_report_text(const std::vector<SectionRms>& rows);

/// Columnar plot data: the track with deflection, then the per-region RMS.
void write_plot_track(std::ostream& out, const SimLog& log);
void write_plot_regions(std::ostream& out, const SimLog& log);

}  // namespace teleop::io
