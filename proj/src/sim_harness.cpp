#include "teleop/sim_harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace teleop::sim {

using vehicle::kDeg;
using vehicle::VehicleParams;
using vehicle::VehicleState;

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::kSmith: return "smith";
    case Mode::kSrpt: return "srpt";
    case Mode::kNoDelay: return "nodelay";
    case Mode::kDelayOnly: return "delay-only";
  }
  return "unknown";
}

Mode parse_mode(const std::string& text) {
  if (text == "smith") return Mode::kSmith;
  if (text == "srpt") return Mode::kSrpt;
  if (text == "nodelay") return Mode::kNoDelay;
  if (text == "delay-only") return Mode::kDelayOnly;
  throw std::invalid_argument("unknown mode '" + text +
                              "' (expected smith, srpt, nodelay or delay-only)");
}

namespace {

void check_primitive(const Primitive& p, const std::string& label) {
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("section " + label + ": " + what);
  };
  using K = Primitive::Kind;
  switch (p.kind) {
    case K::kStraight:
      if (!(p.length > 0.0)) fail("straight needs a positive length");
      break;
    case K::kArc:
      if (!(p.radius > 0.0)) fail("arc needs a positive radius");
      if (!(std::abs(p.angle) > 0.0) || std::abs(p.angle) > 2.0 * std::numbers::pi) {
        fail("arc angle must be non-zero and at most a full turn");
      }
      break;
    case K::kClothoid:
      if (!(p.length > 0.0)) fail("clothoid needs a positive length");
      if (!std::isfinite(p.curvature_start) || !std::isfinite(p.curvature_end)) {
        fail("clothoid curvatures must be finite");
      }
      break;
    case K::kLaneChange:
      if (!(p.length > 0.0)) fail("lane change needs a positive transition length");
      if (!(p.hold >= 0.0)) fail("lane change hold must be non-negative");
      if (!std::isfinite(p.offset)) fail("lane change offset must be finite");
      break;
    case K::kSlalom: {
      if (!(p.length > 0.0)) fail("slalom needs a positive period");
      const double twice = 2.0 * p.periods;
      // a fractional half-period would leave the path with a heading kink
      if (!(p.periods > 0.0) || std::abs(twice - std::round(twice)) > 1e-9) {
        fail("slalom periods must be a positive multiple of 0.5");
      }
      if (!std::isfinite(p.offset)) fail("slalom amplitude must be finite");
      break;
    }
  }
}

}  // namespace

void ScenarioConfig::validate() const {
  if (sections.empty()) throw std::invalid_argument("scenario has no sections");
  std::set<std::string> labels;
  for (const auto& s : sections) {
    if (s.label.empty()) throw std::invalid_argument("section labels must be non-empty");
    if (!labels.insert(s.label).second) {
      throw std::invalid_argument("duplicate section label '" + s.label + "'");
    }
    if (s.primitives.empty()) throw std::invalid_argument("section " + s.label + " is empty");
    for (const auto& p : s.primitives) check_primitive(p, s.label);
    if (!(s.mu_road > 0.0)) throw std::invalid_argument("section " + s.label + ": mu_road <= 0");
    if (s.mu_cons && !(*s.mu_cons > 0.0)) {
      throw std::invalid_argument("section " + s.label + ": mu_cons <= 0");
    }
    if (!(s.wind_speed >= 0.0)) throw std::invalid_argument("wind speed must be >= 0");
  }
  if (lead_in < 0.0 || run_out < 0.0) throw std::invalid_argument("lead-in/run-out must be >= 0");
  if (!(v_ref > 0.0)) throw std::invalid_argument("V_Ref must be positive");
  if (!(mu_cons_default > 0.0)) throw std::invalid_argument("default mu_cons must be positive");
  if (!(sample_spacing > 0.0 && sample_spacing <= 0.1)) {
    throw std::invalid_argument("reference spacing must lie in (0, 0.1] m");
  }
  if (!(tick > 0.0)) throw std::invalid_argument("tick must be positive");
  auto multiple_of_tick = [&](double period) {
    const double r = period / tick;
    return period > 0.0 && std::abs(r - std::round(r)) < 1e-9;
  };
  if (!multiple_of_tick(nmpc_period) || !multiple_of_tick(smith_command_period)) {
    throw std::invalid_argument("controller periods must be multiples of the tick");
  }
  if (time_limit < 0.0) throw std::invalid_argument("time limit must be >= 0");
  if (!(lost_deflection > 0.0)) throw std::invalid_argument("lost deflection must be positive");
  channel.validate();
}

namespace {

using nlohmann::json;

double get_or(const json& j, const char* key, double fallback) {
  return j.contains(key) ? j.at(key).get<double>() : fallback;
}

Primitive parse_primitive(const json& j) {
  Primitive p;
  const std::string type = j.at("type").get<std::string>();
  using K = Primitive::Kind;
  if (type == "straight") {
    p.kind = K::kStraight;
    p.length = j.at("length").get<double>();
  } else if (type == "arc") {
    p.kind = K::kArc;
    p.radius = j.at("radius").get<double>();
    p.angle = j.at("angle_deg").get<double>() * kDeg;
  } else if (type == "clothoid") {
    p.kind = K::kClothoid;
    p.length = j.at("length").get<double>();
    p.curvature_start = get_or(j, "curvature_start", 0.0);
    p.curvature_end = get_or(j, "curvature_end", 0.0);
  } else if (type == "lane_change") {
    p.kind = K::kLaneChange;
    p.length = j.at("transition").get<double>();
    p.offset = j.at("offset").get<double>();
    p.hold = get_or(j, "hold", 0.0);
  } else if (type == "slalom") {
    p.kind = K::kSlalom;
    p.length = j.at("period").get<double>();
    p.offset = j.at("amplitude").get<double>();
    p.periods = j.at("periods").get<double>();
  } else {
    throw std::invalid_argument("unknown primitive type '" + type + "'");
  }
  return p;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("scenario is not valid JSON: ") + e.what());
  }
  ScenarioConfig c;
  try {
    c.lead_in = get_or(j, "lead_in", c.lead_in);
    c.run_out = get_or(j, "run_out", c.run_out);
    if (j.contains("v_ref_kmh")) c.v_ref = j.at("v_ref_kmh").get<double>() / 3.6;
    c.mu_cons_default = get_or(j, "mu_cons_default", c.mu_cons_default);
    c.sample_spacing = get_or(j, "sample_spacing", c.sample_spacing);
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    c.tick = get_or(j, "tick", c.tick);
    c.nmpc_period = get_or(j, "nmpc_period", c.nmpc_period);
    c.smith_command_period = get_or(j, "smith_command_period", c.smith_command_period);
    c.time_limit = get_or(j, "time_limit", c.time_limit);
    c.lost_deflection = get_or(j, "lost_deflection", c.lost_deflection);
    if (j.contains("channel")) {
      const json& ch = j.at("channel");
      c.channel.uplink_delay_s = get_or(ch, "uplink_delay_s", c.channel.uplink_delay_s);
      c.channel.sample_interval_s = get_or(ch, "sample_interval_s", c.channel.sample_interval_s);
      if (ch.contains("gev")) {
        const json& g = ch.at("gev");
        c.channel.downlink.shape = get_or(g, "shape", c.channel.downlink.shape);
        c.channel.downlink.location_ms = get_or(g, "location_ms", c.channel.downlink.location_ms);
        c.channel.downlink.scale_ms = get_or(g, "scale_ms", c.channel.downlink.scale_ms);
      }
    }
    for (const json& s : j.at("sections")) {
      Section sec;
      sec.label = s.at("label").get<std::string>();
      sec.mu_road = get_or(s, "mu_road", 1.0);
      sec.wind_speed = get_or(s, "wind_speed", 0.0);
      sec.wind_bearing = get_or(s, "wind_bearing_deg", 0.0) * kDeg;
      if (s.contains("mu_cons")) sec.mu_cons = s.at("mu_cons").get<double>();
      for (const json& p : s.at("primitives")) sec.primitives.push_back(parse_primitive(p));
      c.sections.push_back(std::move(sec));
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("scenario schema error: ") + e.what());
  }
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

ScenarioConfig default_scenario() {
  using K = Primitive::Kind;
  auto straight = [](double len) { return Primitive{.kind = K::kStraight, .length = len}; };
  auto arc = [](double radius, double deg) {
    return Primitive{.kind = K::kArc, .radius = radius, .angle = deg * kDeg};
  };
  auto section = [](std::string label, std::vector<Primitive> prims) {
    Section s;
    s.label = std::move(label);
    s.primitives = std::move(prims);
    return s;
  };
  ScenarioConfig c;
  c.sections.push_back(section("A", {straight(10.0), arc(30.0, 90.0)}));
  c.sections.push_back(section("B", {straight(10.0), arc(30.0, -90.0)}));
  c.sections.push_back(section(
      "C", {Primitive{.kind = K::kLaneChange, .length = 15.0, .offset = 3.5, .hold = 15.0},
            straight(15.0)}));
  Section d = section("D", {straight(10.0), arc(25.0, 90.0)});
  d.mu_road = 0.3;
  d.mu_cons = 0.25;
  c.sections.push_back(d);
  Section e = section("E", {straight(30.0), arc(30.0, -90.0)});
  e.wind_speed = 100.0 / 3.6;
  e.wind_bearing = 135.0 * kDeg;
  c.sections.push_back(e);
  c.sections.push_back(section(
      "F", {straight(10.0),
            Primitive{.kind = K::kSlalom, .length = 30.0, .offset = 3.0, .periods = 4.0},
            straight(20.0)}));
  return c;
}

namespace {

struct LocalPoint {
  double x, y, psi;
};

// Primitive samples in its own frame, starting at the origin with heading 0.
// The first sample is the origin itself.
std::vector<LocalPoint> sample_primitive(const Primitive& p, double ds) {
  std::vector<LocalPoint> out;
  using K = Primitive::Kind;
  auto count = [&](double len) { return std::max(1, static_cast<int>(std::ceil(len / ds))); };
  switch (p.kind) {
    case K::kStraight: {
      const int n = count(p.length);
      for (int i = 0; i <= n; ++i) out.push_back({p.length * i / n, 0.0, 0.0});
      break;
    }
    case K::kArc: {
      const double sign = p.angle > 0.0 ? 1.0 : -1.0;
      const int n = count(p.radius * std::abs(p.angle));
      for (int i = 0; i <= n; ++i) {
        const double phi = p.angle * i / n;
        out.push_back({p.radius * std::sin(std::abs(phi)),
                       sign * p.radius * (1.0 - std::cos(phi)), phi});
      }
      break;
    }
    case K::kClothoid: {
      // heading is exact; position by composite Simpson on sub-steps
      const int n = count(p.length);
      const double k0 = p.curvature_start;
      const double dk = (p.curvature_end - k0) / p.length;
      auto heading = [&](double s) { return k0 * s + 0.5 * dk * s * s; };
      double x = 0.0, y = 0.0;
      out.push_back({0.0, 0.0, 0.0});
      const int sub = 8;
      for (int i = 1; i <= n; ++i) {
        const double s0 = p.length * (i - 1) / n, s1 = p.length * i / n;
        const double h = (s1 - s0) / sub;
        for (int j = 0; j < sub; ++j) {
          const double a = s0 + j * h, m = a + 0.5 * h, b = a + h;
          x += h / 6.0 * (std::cos(heading(a)) + 4.0 * std::cos(heading(m)) + std::cos(heading(b)));
          y += h / 6.0 * (std::sin(heading(a)) + 4.0 * std::sin(heading(m)) + std::sin(heading(b)));
        }
        out.push_back({x, y, heading(s1)});
      }
      break;
    }
    case K::kLaneChange: {
      const double lt = p.length, hold = p.hold, h = p.offset;
      const double total = 2.0 * lt + hold;
      const int n = count(total);
      for (int i = 0; i <= n; ++i) {
        const double x = total * i / n;
        double y = h, dy = 0.0;
        if (x < lt) {
          y = 0.5 * h * (1.0 - std::cos(std::numbers::pi * x / lt));
          dy = 0.5 * h * std::numbers::pi / lt * std::sin(std::numbers::pi * x / lt);
        } else if (x > lt + hold) {
          const double u = x - lt - hold;
          y = 0.5 * h * (1.0 + std::cos(std::numbers::pi * u / lt));
          dy = -0.5 * h * std::numbers::pi / lt * std::sin(std::numbers::pi * u / lt);
        }
        out.push_back({x, y, std::atan(dy)});
      }
      break;
    }
    case K::kSlalom: {
      const double period = p.length, h = p.offset;
      const double total = period * p.periods;
      const double w = 2.0 * std::numbers::pi / period;
      const int n = count(total);
      for (int i = 0; i <= n; ++i) {
        const double x = total * i / n;
        out.push_back({x, 0.5 * h * (1.0 - std::cos(w * x)), std::atan(0.5 * h * w * std::sin(w * x))});
      }
      break;
    }
  }
  return out;
}

}  // namespace

std::optional<std::size_t> Reference::section_at(double s) const {
  auto it = std::upper_bound(regions.begin(), regions.end(), s,
                             [](double v, const io::RegionBounds& r) { return v < r.start; });
  if (it == regions.begin()) return std::nullopt;
  const std::size_t i = static_cast<std::size_t>(it - regions.begin()) - 1;
  if (!regions[i].contains(s)) return std::nullopt;
  return i;
}

Reference build_reference(const ScenarioConfig& config) {
  config.validate();
  // the spacing bound is on arc length; slopes up to ~1.7 keep chords below 2x
  const double ds = config.sample_spacing;
  Reference ref;
  std::vector<PathPoint> pts{{0.0, 0.0, 0.0, 0.0}};

  auto append = [&](const Primitive& prim) {
    const PathPoint start = pts.back();
    const double c = std::cos(start.psi), s = std::sin(start.psi);
    const auto local = sample_primitive(prim, ds);
    for (std::size_t i = 1; i < local.size(); ++i) {
      const auto& q = local[i];
      PathPoint p;
      p.x = start.x + c * q.x - s * q.y;
      p.y = start.y + s * q.x + c * q.y;
      p.psi = start.psi + q.psi;  // unwrapped
      const auto& prev = pts.back();
      p.s = prev.s + std::hypot(p.x - prev.x, p.y - prev.y);
      pts.push_back(p);
    }
  };

  if (config.lead_in > 0.0) append({.kind = Primitive::Kind::kStraight, .length = config.lead_in});
  for (const auto& sec : config.sections) {
    const double start = pts.back().s;
    for (const auto& prim : sec.primitives) append(prim);
    ref.regions.push_back({sec.label, start, pts.back().s});
    ref.regions.back().validate();
    ref.sections.push_back(sec);
  }
  if (config.run_out > 0.0) append({.kind = Primitive::Kind::kStraight, .length = config.run_out});

  // G1 check: chord directions must follow the stored headings and both must
  // turn smoothly from one sample to the next
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const auto& a = pts[i - 1];
    const auto& b = pts[i];
    const double chord = std::atan2(b.y - a.y, b.x - a.x);
    const double mid = 0.5 * (a.psi + b.psi);
    if (std::abs(normalize_angle(chord - mid)) > 0.05 || std::abs(b.psi - a.psi) > 0.1 ||
        b.s - a.s > 0.1 + 1e-9) {
      throw std::invalid_argument("reference is not G1-continuous near s = " +
                                  std::to_string(a.s));
    }
  }
  ref.path = Trajectory(std::move(pts));
  return ref;
}

namespace {

struct Uplink {
  double steer = 0.0;     // Smith / delay-only: steering angle command
  Pose2D ref;             // SRPT: target pose, global frame
  double mu_cons = 0.9;   // SRPT
};

vehicle::Disturbance disturbance_at(const Reference& ref, double s) {
  vehicle::Disturbance d;
  if (const auto i = ref.section_at(s)) {
    const Section& sec = ref.sections[*i];
    d.mu_road = sec.mu_road;
    d.wind_speed = sec.wind_speed;
    d.wind_bearing = sec.wind_bearing;
  }
  return d;
}

// Most conservative friction the operator would announce for the road between
// the delayed vehicle position and the selected pose.
double mu_cons_over(const Reference& ref, double s0, double s1, double fallback) {
  double mu = std::numeric_limits<double>::infinity();
  bool any_gap = false;
  double cursor = s0;
  for (std::size_t i = 0; i < ref.regions.size(); ++i) {
    const auto& r = ref.regions[i];
    if (r.end <= s0 || r.start > s1) continue;
    if (r.start > cursor) any_gap = true;
    cursor = std::max(cursor, r.end);
    mu = std::min(mu, ref.sections[i].mu_cons.value_or(fallback));
  }
  if (cursor < s1 || any_gap || !std::isfinite(mu)) mu = std::min(mu, fallback);
  return mu;
}

VehicleState interpolate(const VehicleState& a, const VehicleState& b, double w) {
  const auto xa = a.to_array();
  const auto xb = b.to_array();
  vehicle::StateVec<double> r;
  for (int i = 0; i < vehicle::kNx; ++i) r[i] = xa[i] + w * (xb[i] - xa[i]);
  return VehicleState::from_array(r);
}

std::string section_label(const Reference& ref, double s) {
  const auto i = ref.section_at(s);
  return i ? ref.regions[*i].label : std::string("-");
}

}  // namespace

io::SimLog run(const ScenarioConfig& config, Mode mode, const RunOptions& options) {
  config.validate();
  options.params.validate();
  options.stanley.validate();
  options.actuator.validate();
  const Reference ref = build_reference(config);
  const Trajectory& path = ref.path;
  const VehicleParams& params = options.params;
  const double tick = config.tick;
  const double v_ref = config.v_ref;
  const double tau1 = config.channel.uplink_delay_s;
  const double end_s = ref.regions.back().end;
  const double time_limit =
      config.time_limit > 0.0 ? config.time_limit : 2.0 * path.length() / v_ref + 30.0;
  const auto tick_count = [&](double period) {
    return static_cast<std::int64_t>(std::llround(period / tick));
  };
  const std::int64_t nmpc_every = tick_count(config.nmpc_period);
  const std::int64_t command_every = tick_count(config.smith_command_period);

  io::SimLog log;
  log.mode = to_string(mode);
  log.seed = config.seed;
  log.regions = ref.regions;

  vehicle::PlantState plant;
  {
    const PathPoint& p0 = path.points().front();
    plant.vehicle.x = p0.x;
    plant.vehicle.y = p0.y;
    plant.vehicle.psi = p0.psi;
    plant.vehicle.v = v_ref;
  }

  delay::ChannelConfig channel = config.channel;
  channel.rng_seed = config.seed;
  delay::DownlinkDelaySampler sampler(channel);
  delay::EventChannel<VehicleState> downlink;
  delay::EventChannel<Uplink> uplink;
  std::uint64_t down_seq = 0, up_seq = 0;
  const double frame = channel.sample_interval_s;

  // station side
  std::optional<delay::Packet<VehicleState>> observation;
  control::PredictorBuffer buffer(
      static_cast<std::size_t>(std::ceil((tau1 + 5.0) / tick)) + 8);
  control::SmithLocalModel local_model(params, options.actuator, plant.vehicle);
  double station_steer = 0.0;

  // vehicle side
  std::optional<delay::Packet<Uplink>> command;
  control::CruiseConfig cruise = control::default_cruise(params);
  control::CruiseState cruise_state;
  nmpc::SolverConfig solver = options.solver;
  solver.measure_time = config.measure_solver_time;
  nmpc::NmpcController nmpc(params, solver);
  vehicle::ControlInput held{0.0, 0.0};
  double speed_target = v_ref;
  std::string held_status = "no_ref";

  double hint_s = 0.0;
  VehicleState previous_state = plant.vehicle;
  for (std::int64_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * tick;
    const VehicleState& state = plant.vehicle;
    const PathProjection proj = path.project_near(state.x, state.y, hint_s, 10.0, 10.0);
    hint_s = proj.s;

    // downlink departures at exact multiples of the frame interval
    while (static_cast<double>(down_seq) * frame <= t + 1e-12) {
      const double departure = static_cast<double>(down_seq) * frame;
      const double w = k == 0 ? 1.0 : (departure - (t - tick)) / tick;
      downlink.push(delay::make_packet(down_seq, interpolate(previous_state, state, w),
                                       departure, sampler.next_delay_s()));
      ++down_seq;
    }

    // control station
    bool fresh = false;
    for (auto& p : downlink.poll(t + 1e-9)) {
      if (!observation || p.seq > observation->seq) {
        observation = std::move(p);
        fresh = true;
      }
    }
    const double age = observation ? t - observation->departure : -1.0;
    if (mode == Mode::kSmith) {
      buffer.push(t, local_model.state());
      if (fresh) {
        const auto fb = control::smith_feedback(buffer, observation->payload, t, tau1, age);
        station_steer = control::stanley_command(path, fb.state.pose(), fb.state.v, params.lf,
                                                 options.stanley);
        local_model.reset_speed(observation->payload.v);
      }
    } else if (mode == Mode::kDelayOnly && fresh) {
      const VehicleState& m = observation->payload;
      station_steer = control::stanley_command(path, m.pose(), m.v, params.lf, options.stanley);
    }
    if ((mode == Mode::kSmith || mode == Mode::kDelayOnly) && observation &&
        k % command_every == 0) {
      Uplink msg;
      msg.steer = station_steer;
      uplink.push(delay::make_packet(up_seq++, msg, t, tau1));
    }
    if (mode == Mode::kSmith) local_model.step(station_steer, tick);
    if (mode == Mode::kSrpt && fresh) {
      const VehicleState& m = observation->payload;
      const double s_obs = path.project(m.x, m.y).s;
      const double s_look =
          control::lookahead_arc_length(path, m.pose(), m.v, age, tau1, options.horizon);
      Uplink msg;
      msg.ref = path.pose_at(s_look);
      msg.mu_cons = mu_cons_over(ref, s_obs, s_look, config.mu_cons_default);
      uplink.push(delay::make_packet(up_seq++, msg, t, tau1));
    }

    // vehicle
    for (auto& p : uplink.poll(t + 1e-9)) {
      if (!command || p.seq > command->seq) command = std::move(p);
    }
    io::LogRow row;
    vehicle::ControlInput input;
    if (mode == Mode::kSrpt) {
      if (k % nmpc_every == 0) {
        if (!command) {
          held = {0.0, 0.0};
          speed_target = v_ref;
          held_status = "no_ref";
        } else {
          try {
            const nmpc::OcpSolution sol =
                nmpc.step(state, command->payload.ref, v_ref, command->payload.mu_cons);
            if (options.on_solve) {
              options.on_solve(t, section_label(ref, proj.s), command->payload.mu_cons, sol);
            }
            row.nmpc_ms = sol.solve_ms;
            row.nmpc_iters = sol.iterations;
            held_status = nmpc::to_string(sol.status);
            if (sol.status == nmpc::SolveStatus::kDiverged) {
              held = {0.0, held.accel};
              log.events.push_back("t=" + std::to_string(t) + " nmpc diverged, holding");
            } else {
              held = nmpc::first_input(sol);
              speed_target = sol.x[1].v;
            }
          } catch (const spline::SplineFitError& e) {
            held = {0.0, held.accel};
            held_status = "spline_error";
            log.events.push_back("t=" + std::to_string(t) + " spline: " + e.what());
          }
        }
        row.nmpc_status = held_status;
      }
      const double mu = command ? command->payload.mu_cons : config.mu_cons_default;
      input.steer_rate = std::clamp(held.steer_rate, -options.actuator.steer_rate_max,
                                    options.actuator.steer_rate_max);
      // position limit of the actuator
      const double next_delta = state.delta + input.steer_rate * tick;
      if (std::abs(next_delta) > options.actuator.steer_max) {
        input.steer_rate = control::limited_steer_rate(state.delta,
                                                       std::copysign(options.actuator.steer_max,
                                                                     next_delta),
                                                       tick, options.actuator);
      }
      input.accel = control::pi_cruise(speed_target, state.v, tick, cruise_state, cruise,
                                       held.accel, -4.0 * mu, mu);
      row.cmd1 = held.steer_rate;
      row.cmd2 = held.accel;
    } else {
      double steer = 0.0;
      if (mode == Mode::kNoDelay) {
        steer = control::stanley_command(path, state.pose(), state.v, params.lf, options.stanley);
      } else if (command) {
        steer = command->payload.steer;
      }
      input.steer_rate = control::limited_steer_rate(state.delta, steer, tick, options.actuator);
      input.accel = control::pi_cruise(v_ref, state.v, tick, cruise_state, cruise);
      row.cmd1 = steer;
      row.cmd2 = input.accel;
    }

    row.t = t;
    row.x = state.x;
    row.y = state.y;
    row.psi = state.psi;
    row.v = state.v;
    row.beta = state.beta;
    row.yaw_rate = state.yaw_rate;
    row.delta = state.delta;
    row.mode = log.mode;
    row.section = section_label(ref, proj.s);
    row.dy = proj.lateral;
    row.d = proj.s;
    if (observation && mode != Mode::kNoDelay) {
      row.obs_seq = static_cast<std::int64_t>(observation->seq);
      row.obs_age = age;
    }
    log.rows.push_back(std::move(row));

    if (proj.s >= end_s) break;
    if (std::abs(proj.lateral) > config.lost_deflection) {
      log.events.push_back("t=" + std::to_string(t) + " vehicle lost the reference");
      break;
    }
    if (t >= time_limit) {
      log.events.push_back("t=" + std::to_string(t) + " time limit reached");
      break;
    }
    previous_state = plant.vehicle;
    plant = vehicle::plant_step(plant, input, params, disturbance_at(ref, proj.s), options.plant,
                                tick);
  }
  return log;
}

Comparison compare(const ScenarioConfig& config, const std::vector<Mode>& modes,
                   const std::vector<std::uint64_t>& seeds, const RunOptions& options) {
  if (modes.size() < 2) throw std::invalid_argument("compare needs at least two modes");
  if (seeds.empty()) throw std::invalid_argument("compare needs at least one seed");
  Comparison out;
  for (const std::uint64_t seed : seeds) {
    ScenarioConfig c = config;
    c.seed = seed;
    for (const Mode mode : modes) {
      io::SimLog log = run(c, mode, options);
      for (const auto& region : log.regions) {
        double rms = std::numeric_limits<double>::quiet_NaN();
        try {
          rms = io::rms_deflection(log, region);
        } catch (const io::MetricError&) {
          // the run ended (lost the reference) before reaching this region
        }
        out.rms.push_back({region.label, log.mode, seed, rms});
      }
      out.logs.push_back(std::move(log));
    }
  }
  return out;
}

}  // namespace teleop::sim
