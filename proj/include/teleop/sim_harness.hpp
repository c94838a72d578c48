#pragma once

// Closed-loop teleoperation runs: reference construction, the 100 Hz tick loop
// with the delayed downlink/uplink, and multi-mode comparisons.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "teleop/controllers.hpp"
#include "teleop/delay_channel.hpp"
#include "teleop/geometry.hpp"
#include "teleop/metrics_io.hpp"
#include "teleop/nmpc.hpp"
#include "teleop/vehicle_models.hpp"

namespace teleop::sim {

enum class Mode { kSmith, kSrpt, kNoDelay, kDelayOnly };
std::string to_string(Mode mode);
/// Accepts smith, srpt, nodelay, delay-only.
Mode parse_mode(const std::string& text);

/// One piece of road geometry, laid out from the end pose of the previous one.
struct Primitive {
  enum class Kind { kStraight, kArc, kClothoid, kLaneChange, kSlalom };
  Kind kind = Kind::kStraight;
  double length = 0.0;     // straight / clothoid length, lane-change transition, slalom period [m]
  double radius = 0.0;     // arc radius [m]
  double angle = 0.0;      // arc turning angle, positive left [rad]
  double curvature_start = 0.0;  // clothoid [1/m], positive left
  double curvature_end = 0.0;
  double offset = 0.0;     // lane-change lateral offset / slalom peak-to-peak amplitude [m]
  double hold = 0.0;       // lane-change length held at the offset [m]
  double periods = 0.0;    // slalom periods, a multiple of 0.5
};

struct Section {
  std::string label;
  std::vector<Primitive> primitives;
  double mu_road = 1.0;
  double wind_speed = 0.0;    // [m/s]
  double wind_bearing = 0.0;  // direction the wind blows towards [rad]
  std::optional<double> mu_cons;  // operator's conservative friction for SRPT
};

struct ScenarioConfig {
  std::vector<Section> sections;
  double lead_in = 20.0;    // unlabeled straight before the first section [m]
  double run_out = 40.0;    // unlabeled straight after the last section [m]
  double v_ref = 20.0 / 3.6;  // [m/s]
  double mu_cons_default = 0.9;
  double sample_spacing = 0.05;  // reference polyline spacing [m]
  delay::ChannelConfig channel;
  std::uint64_t seed = 1;
  double tick = 0.01;              // plant and controller clock [s]
  double nmpc_period = 0.02;       // onboard NMPC cadence [s]
  double smith_command_period = 0.01;  // command uplink rate in the Smith modes [s]
  double time_limit = 0.0;         // 0 picks a limit from the path length
  double lost_deflection = 15.0;   // runs stop when |dY| exceeds this [m]
  bool measure_solver_time = true; // false writes zero solve times for byte-stable logs

  void validate() const;
};

ScenarioConfig load_scenario(const std::string& path);
ScenarioConfig parse_scenario(const std::string& json_text);
/// The A-F scenario shipped with the simulator.
ScenarioConfig default_scenario();

struct Reference {
  Trajectory path;
  std::vector<io::RegionBounds> regions;  // labeled sections only
  std::vector<Section> sections;          // parallel to regions

  /// Index of the labeled section containing arc length `s`, if any.
  std::optional<std::size_t> section_at(double s) const;
};

/// Dense G1 polyline of the scenario. Throws on a discontinuous chain.
Reference build_reference(const ScenarioConfig& config);

struct RunOptions {
  vehicle::VehicleParams params;
  vehicle::PlantConfig plant;
  control::StanleyConfig stanley;
  control::ActuatorLimits actuator;
  nmpc::SolverConfig solver;
  double horizon = 1.0;  // look-ahead horizon of the SRPT operator [s]
  /// Called after every onboard NMPC solve with the tick time, the section
  /// label at the vehicle and the friction value the solve used.
  std::function<void(double t, const std::string& section, double mu_cons,
                     const nmpc::OcpSolution& solution)>
      on_solve;
};

io::SimLog run(const ScenarioConfig& config, Mode mode, const RunOptions& options = {});

struct Comparison {
  std::vector<io::SectionRms> rms;  // section x mode x seed; NaN for regions a run never reached
  std::vector<io::SimLog> logs;
};

/// Runs every mode on every seed of the same scenario.
Comparison compare(const ScenarioConfig& config, const std::vector<Mode>& modes,
                   const std::vector<std::uint64_t>& seeds, const RunOptions& options = {});

}  // namespace teleop::sim
