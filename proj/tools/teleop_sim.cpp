// Command-line front end of the teleoperation simulator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "teleop/metrics_io.hpp"
#include "teleop/sim_harness.hpp"

namespace {

using namespace teleop;

sim::ScenarioConfig scenario_from(const std::string& path) {
  return path.empty() ? sim::default_scenario() : sim::load_scenario(path);
}

sim::RunOptions options_from(const std::string& vehicle_path) {
  sim::RunOptions opt;
  if (!vehicle_path.empty()) opt.params = vehicle::load_vehicle_params(vehicle_path);
  return opt;
}

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_run(const std::string& mode, const std::string& scenario, std::uint64_t seed,
            const std::string& out, bool no_timing, double speed_kmh, const std::string& vehicle) {
  sim::ScenarioConfig cfg = scenario_from(scenario);
  cfg.seed = seed;
  cfg.measure_solver_time = !no_timing;
  if (speed_kmh > 0.0) cfg.v_ref = speed_kmh / 3.6;
  const io::SimLog log = sim::run(cfg, sim::parse_mode(mode), options_from(vehicle));
  io::write_log(out, log);
  for (const auto& e : log.events) std::cerr << "event: " << e << '\n';
  for (const auto& region : log.regions) {
    try {
      const double rms = io::rms_deflection(log, region);
      std::cout << region.label << " rms_dY = " << rms << " m\n";
    } catch (const io::MetricError& e) {
      std::cout << region.label << " rms_dY = n/a (" << e.what() << ")\n";
    }
  }
  return 0;
}

int cmd_compare(const std::string& modes, const std::string& seeds_text,
                const std::string& scenario, const std::string& out, bool no_timing,
                const std::string& vehicle) {
  sim::ScenarioConfig cfg = scenario_from(scenario);
  cfg.measure_solver_time = !no_timing;
  std::vector<sim::Mode> mode_list;
  for (const auto& m : split(modes)) mode_list.push_back(sim::parse_mode(m));
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split(seeds_text)) seeds.push_back(std::stoull(s));
  const sim::Comparison cmp = sim::compare(cfg, mode_list, seeds, options_from(vehicle));
  std::ofstream csv(out);
  if (!csv) throw std::runtime_error("cannot write " + out);
  io::write_report_csv(csv, cmp.rms);
  std::cout << io::format_report_text(cmp.rms);
  return 0;
}

int cmd_emit_plots(const std::string& log_path, std::string prefix) {
  const io::SimLog log = io::read_log(log_path);
  if (prefix.empty()) {
    prefix = log_path;
    if (prefix.size() > 4 && prefix.ends_with(".csv")) prefix.resize(prefix.size() - 4);
  }
  std::ofstream track(prefix + "_track.dat");
  std::ofstream regions(prefix + "_regions.dat");
  if (!track || !regions) throw std::runtime_error("cannot write plot files at " + prefix);
  io::write_plot_track(track, log);
  io::write_plot_regions(regions, log);
  std::cout << "wrote " << prefix << "_track.dat and " << prefix << "_regions.dat\n";
  return 0;
}

int cmd_delay_validate(const std::string& trace_path) {
  const auto rows = io::read_packet_trace(trace_path);
  std::vector<double> departures, delays;
  for (const auto& r : rows) {
    departures.push_back(r.departure);
    delays.push_back(r.delay);
  }
  delay::EventChannel<std::string> channel;
  for (const auto& r : rows) {
    channel.push(delay::make_packet(r.seq, r.payload_id, r.departure, r.delay));
  }
  double horizon = 0.0;
  for (const auto& r : rows) horizon = std::max(horizon, r.arrival);
  std::vector<double> arrivals(rows.size(), -1.0);
  // 1 ms sweep, the resolution of the replay
  for (long step = 0; step <= static_cast<long>(std::ceil(horizon * 1000.0)) + 1; ++step) {
    const double t = static_cast<double>(step) * 1e-3;
    for (const auto& p : channel.poll(t + 1e-9)) {
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].seq == p.seq) arrivals[i] = t;
      }
    }
  }
  bool ok = true;
  std::cout << "seq departure delay expected_arrival replayed_arrival\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const bool match = std::abs(arrivals[i] - rows[i].arrival) <= 1e-3 + 1e-9;
    ok = ok && match;
    std::cout << rows[i].seq << ' ' << rows[i].departure << ' ' << rows[i].delay << ' '
              << rows[i].arrival << ' ' << arrivals[i] << (match ? "" : "  MISMATCH") << '\n';
  }
  std::cout << (ok ? "trace replay matches\n" : "trace replay differs\n");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Delayed teleoperation simulator: Smith predictor vs reference-pose tracking"};
  app.require_subcommand(1);

  std::string vehicle;
  app.add_option("--vehicle", vehicle, "vehicle parameter JSON");

  auto* run = app.add_subcommand("run", "simulate one mode and write its log");
  std::string mode = "srpt", scenario, out = "log.csv";
  std::uint64_t seed = 1;
  bool no_timing = false;
  double speed_kmh = 0.0;
  run->add_option("--mode", mode, "smith|srpt|nodelay|delay-only")->required();
  run->add_option("--scenario", scenario, "scenario JSON (default: built-in A-F)");
  run->add_option("--seed", seed, "delay RNG seed");
  run->add_option("--out", out, "log CSV path");
  run->add_flag("--no-timing", no_timing, "log zero solve times so logs are byte-stable");
  run->add_option("--speed-kmh", speed_kmh, "override V_Ref [km/h]");

  auto* cmp = app.add_subcommand("compare", "per-section RMS deflection of several modes");
  std::string modes = "smith,srpt", seeds = "1,2,3,4,5", report = "report.csv";
  cmp->add_option("--modes", modes, "comma-separated modes");
  cmp->add_option("--seeds", seeds, "comma-separated seeds");
  cmp->add_option("--scenario", scenario, "scenario JSON (default: built-in A-F)");
  cmp->add_option("--out", report, "report CSV path");
  cmp->add_flag("--no-timing", no_timing, "skip solver timing");

  auto* plots = app.add_subcommand("emit-plots", "columnar plot data from a log");
  std::string log_path, prefix;
  plots->add_option("log", log_path, "log CSV")->required();
  plots->add_option("--out", prefix, "output prefix (default: log path without .csv)");

  auto* dv = app.add_subcommand("delay-validate", "replay a packet trace through the channel");
  std::string trace;
  dv->add_option("trace", trace, "packet trace CSV")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(mode, scenario, seed, out, no_timing, speed_kmh, vehicle);
    if (*cmp) return cmd_compare(modes, seeds, scenario, report, no_timing, vehicle);
    if (*plots) return cmd_emit_plots(log_path, prefix);
    if (*dv) return cmd_delay_validate(trace);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
