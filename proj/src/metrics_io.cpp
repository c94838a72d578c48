#include "teleop/metrics_io.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace teleop::io {

namespace {

constexpr const char* kLogHeader =
    "t,x,y,psi,V,beta,yawrate,delta,mode,section,dY,D,obs_seq,obs_age,cmd1,cmd2,nmpc_ms,"
    "nmpc_iters,nmpc_status";
constexpr const char* kTraceHeader = "seq,departure_s,delay_s,arrival_s,payload_id";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string where(std::size_t line) { return "line " + std::to_string(line) + ": "; }

double parse_double(const std::string& s, std::size_t line, const char* field) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
    throw LogFormatError(where(line) + "bad number '" + s + "' in field " + field);
  }
  return v;
}

long long parse_int(const std::string& s, std::size_t line, const char* field) {
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
    throw LogFormatError(where(line) + "bad integer '" + s + "' in field " + field);
  }
  return v;
}

std::uint64_t parse_uint(const std::string& s, std::size_t line, const char* field) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || s[0] == '-' || end != s.c_str() + s.size() || errno == ERANGE) {
    throw LogFormatError(where(line) + "bad unsigned integer '" + s + "' in field " + field);
  }
  return v;
}

void check_token(const std::string& s, const char* what) {
  if (s.find_first_of(",\n\r") != std::string::npos) {
    throw std::invalid_argument(std::string(what) + " must not contain commas or newlines");
  }
}

}  // namespace

CrossTrack cross_track(const Pose2D& pose, const Trajectory& path) {
  if (path.empty()) throw std::invalid_argument("cross_track on an empty path");
  const PathProjection p = path.project(pose.x, pose.y);
  return {p.lateral, p.s};
}

void RegionBounds::validate() const {
  if (!(end > start)) throw std::invalid_argument("region " + label + " has end <= start");
}

double rms_deflection(std::vector<DeflectionSample> samples, const RegionBounds& region) {
  region.validate();
  std::erase_if(samples, [&](const DeflectionSample& s) { return !region.contains(s.d); });
  if (samples.empty()) throw MetricError("no samples in region " + region.label);
  std::stable_sort(samples.begin(), samples.end(),
                   [](const DeflectionSample& a, const DeflectionSample& b) { return a.d < b.d; });
  const double span = samples.back().d - samples.front().d;
  if (!(span > 0.0)) {
    double sum = 0.0;
    for (const auto& s : samples) sum += s.dy * s.dy;
    return std::sqrt(sum / static_cast<double>(samples.size()));
  }
  double integral = 0.0;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const double h = samples[i].d - samples[i - 1].d;
    integral += 0.5 * h * (samples[i].dy * samples[i].dy + samples[i - 1].dy * samples[i - 1].dy);
  }
  return std::sqrt(integral / span);
}

std::vector<DeflectionSample> SimLog::deflection_samples() const {
  std::vector<DeflectionSample> s;
  s.reserve(rows.size());
  for (const auto& r : rows) s.push_back({r.d, r.dy});
  return s;
}

double rms_deflection(const SimLog& log, const RegionBounds& region) {
  return rms_deflection(log.deflection_samples(), region);
}

void write_log(std::ostream& out, const SimLog& log) {
  check_token(log.mode, "mode");
  out << kLogVersionLine << '\n';
  out << "# mode " << log.mode << '\n';
  out << "# seed " << log.seed << '\n';
  for (const auto& r : log.regions) {
    check_token(r.label, "region label");
    if (r.label.find(' ') != std::string::npos) {
      throw std::invalid_argument("region labels must not contain spaces");
    }
    out << "# region " << r.label << ' ' << fmt(r.start) << ' ' << fmt(r.end) << '\n';
  }
  for (const auto& e : log.events) {
    if (e.find('\n') != std::string::npos) throw std::invalid_argument("event text has a newline");
    out << "# event " << e << '\n';
  }
  out << kLogHeader << '\n';
  for (const auto& r : log.rows) {
    check_token(r.mode, "mode");
    check_token(r.section, "section");
    check_token(r.nmpc_status, "status");
    out << fmt(r.t) << ',' << fmt(r.x) << ',' << fmt(r.y) << ',' << fmt(r.psi) << ','
        << fmt(r.v) << ',' << fmt(r.beta) << ',' << fmt(r.yaw_rate) << ',' << fmt(r.delta) << ','
        << r.mode << ',' << r.section << ',' << fmt(r.dy) << ',' << fmt(r.d) << ',' << r.obs_seq
        << ',' << fmt(r.obs_age) << ',' << fmt(r.cmd1) << ',' << fmt(r.cmd2) << ','
        << fmt(r.nmpc_ms) << ',' << r.nmpc_iters << ',' << r.nmpc_status << '\n';
  }
}

void write_log(const std::string& path, const SimLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write log " + path);
  write_log(out, log);
}

SimLog read_log(std::istream& in) {
  SimLog log;
  std::string line;
  std::size_t n = 0;
  if (!std::getline(in, line)) throw LogFormatError("empty log");
  ++n;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kLogVersionLine) {
    throw LogFormatError("unsupported log version: expected '" + std::string(kLogVersionLine) +
                         "', found '" + line + "'");
  }
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header_seen) {
      if (line.rfind("# mode ", 0) == 0) {
        log.mode = line.substr(7);
      } else if (line.rfind("# seed ", 0) == 0) {
        log.seed = parse_uint(line.substr(7), n, "seed");
      } else if (line.rfind("# region ", 0) == 0) {
        std::istringstream ss(line.substr(9));
        std::string label, a, b;
        if (!(ss >> label >> a >> b)) throw LogFormatError(where(n) + "bad region line");
        log.regions.push_back({label, parse_double(a, n, "region start"),
                               parse_double(b, n, "region end")});
      } else if (line.rfind("# event ", 0) == 0) {
        log.events.push_back(line.substr(8));
      } else if (line == kLogHeader) {
        header_seen = true;
      } else if (!line.empty() && line[0] == '#') {
        // unknown comment lines are ignored
      } else {
        throw LogFormatError(where(n) + "expected the column header");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 19) {
      throw LogFormatError(where(n) + "expected 19 fields, found " + std::to_string(f.size()));
    }
    LogRow r;
    r.t = parse_double(f[0], n, "t");
    r.x = parse_double(f[1], n, "x");
    r.y = parse_double(f[2], n, "y");
    r.psi = parse_double(f[3], n, "psi");
    r.v = parse_double(f[4], n, "V");
    r.beta = parse_double(f[5], n, "beta");
    r.yaw_rate = parse_double(f[6], n, "yawrate");
    r.delta = parse_double(f[7], n, "delta");
    r.mode = f[8];
    r.section = f[9];
    r.dy = parse_double(f[10], n, "dY");
    r.d = parse_double(f[11], n, "D");
    r.obs_seq = parse_int(f[12], n, "obs_seq");
    r.obs_age = parse_double(f[13], n, "obs_age");
    r.cmd1 = parse_double(f[14], n, "cmd1");
    r.cmd2 = parse_double(f[15], n, "cmd2");
    r.nmpc_ms = parse_double(f[16], n, "nmpc_ms");
    r.nmpc_iters = static_cast<int>(parse_int(f[17], n, "nmpc_iters"));
    r.nmpc_status = f[18];
    log.rows.push_back(std::move(r));
  }
  if (!header_seen) throw LogFormatError("log has no column header");
  return log;
}

SimLog read_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open log " + path);
  return read_log(in);
}

void write_packet_trace(std::ostream& out, const std::vector<TraceRow>& rows) {
  out << kTraceHeader << '\n';
  for (const auto& r : rows) {
    check_token(r.payload_id, "payload id");
    out << r.seq << ',' << fmt(r.departure) << ',' << fmt(r.delay) << ',' << fmt(r.arrival) << ','
        << r.payload_id << '\n';
  }
}

std::vector<TraceRow> read_packet_trace(std::istream& in) {
  std::vector<TraceRow> rows;
  std::string line;
  std::size_t n = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != kTraceHeader) {
        throw LogFormatError(where(n) + "expected header '" + std::string(kTraceHeader) + "'");
      }
      header_seen = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 5) {
      throw LogFormatError(where(n) + "expected 5 fields, found " + std::to_string(f.size()));
    }
    TraceRow r;
    const long long seq = parse_int(f[0], n, "seq");
    if (seq < 0) throw LogFormatError(where(n) + "negative sequence number");
    r.seq = static_cast<std::uint64_t>(seq);
    r.departure = parse_double(f[1], n, "departure_s");
    r.delay = parse_double(f[2], n, "delay_s");
    r.arrival = parse_double(f[3], n, "arrival_s");
    r.payload_id = f[4];
    if (std::abs(r.departure + r.delay - r.arrival) > 1e-9) {
      throw LogFormatError(where(n) + "arrival differs from departure + delay");
    }
    rows.push_back(std::move(r));
  }
  if (!header_seen) throw LogFormatError("packet trace has no header");
  return rows;
}

std::vector<TraceRow> read_packet_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open packet trace " + path);
  return read_packet_trace(in);
}

void write_report_csv(std::ostream& out, const std::vector<SectionRms>& rows) {
  out << "section,mode,seed,rms_m\n";
  for (const auto& r : rows) {
    out << r.section << ',' << r.mode << ',' << r.seed << ',' << fmt(r.rms) << '\n';
  }
}

std::string format_report_text(const std::vector<SectionRms>& rows) {
  std::vector<std::string> sections, modes;
  std::map<std::pair<std::string, std::string>, std::pair<double, int>> acc;
  for (const auto& r : rows) {
    if (std::find(sections.begin(), sections.end(), r.section) == sections.end()) {
      sections.push_back(r.section);
    }
    if (std::find(modes.begin(), modes.end(), r.mode) == modes.end()) modes.push_back(r.mode);
    auto& a = acc[{r.section, r.mode}];
    a.first += r.rms;
    a.second += 1;
  }
  std::ostringstream ss;
  ss << std::left << std::setw(10) << "section";
  for (const auto& m : modes) ss << std::right << std::setw(14) << m;
  ss << '\n';
  for (const auto& s : sections) {
    ss << std::left << std::setw(10) << s;
    for (const auto& m : modes) {
      auto it = acc.find({s, m});
      if (it == acc.end()) {
        ss << std::right << std::setw(14) << "-";
      } else if (std::isnan(it->second.first)) {
        ss << std::right << std::setw(14) << "n/a";
      } else {
        ss << std::right << std::setw(14) << std::fixed << std::setprecision(4)
           << it->second.first / it->second.second;
      }
    }
    ss << '\n';
  }
  return ss.str();
}

void write_plot_track(std::ostream& out, const SimLog& log) {
  out << "t,x,y,psi,V,delta,D,dY,section\n";
  for (const auto& r : log.rows) {
    out << fmt(r.t) << ',' << fmt(r.x) << ',' << fmt(r.y) << ',' << fmt(r.psi) << ','
        << fmt(r.v) << ',' << fmt(r.delta) << ',' << fmt(r.d) << ',' << fmt(r.dy) << ','
        << r.section << '\n';
  }
}

void write_plot_regions(std::ostream& out, const SimLog& log) {
  out << "section,D_start,D_end,rms_m\n";
  for (const auto& region : log.regions) {
    out << region.label << ',' << fmt(region.start) << ',' << fmt(region.end) << ',';
    try {
      out << fmt(rms_deflection(log, region));
    } catch (const MetricError&) {
      out << "nan";
    }
    out << '\n';
  }
}

}  // namespace teleop::io
