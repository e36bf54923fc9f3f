#pragma once

// The two attack scenarios, run end to end against an in-process agent, and
// their reports.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "netagent/gateway.hpp"
#include "netagent/memory_guard.hpp"
#include "netagent/packet.hpp"
#include "netagent/telemetry.hpp"
#include "netagent/tuner.hpp"

namespace netagent::harness {

struct ScenarioReport {
  std::string scenario;  // "tc1" / "tc2"
  int threat_id = 0;
  std::vector<std::string> maestro_layers;
  std::string exploit_method;
  std::string observed_impact;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  bool validated = false;
  bool defense = false;
};

nlohmann::ordered_json to_json(const ScenarioReport& r);
ScenarioReport report_from_json(const nlohmann::ordered_json& j);
std::string report_markdown(const ScenarioReport& r);

/// Where a scenario publishes and logs. Both may be null.
struct ScenarioEnv {
  gateway::MessageHub* hub = nullptr;
  memory_guard::ForensicLog* log = nullptr;
};

struct Tc1Config {
  double rate_pps = 10'000.0;
  std::uint32_t iterations = 5;
  std::size_t packets_per_iteration = 100'000;
  double background_pps = 100.0;
  bool defense = false;
  std::uint64_t seed = 7;
  /// Quiet snapshots published before the flood starts.
  std::size_t baseline_snapshots = 3;
  /// Snapshots observed after the replay ends.
  std::size_t tail_snapshots = 6;
  /// Recovery must show within this many snapshots after the replay.
  std::size_t recovery_window = 5;
  telemetry::TelemetryConfig telemetry;
  /// Refused unless simulated: host timing would not be comparable.
  telemetry::Mode mode = telemetry::Mode::Simulated;
};

/// Success: baseline within [7,8] s, peak > 13 s and a threat-7 alert; with
/// defense on, additionally the rate_limit action executed and an interval
/// within [7,8] s among the first `recovery_window` snapshots after the
/// replay.
ScenarioReport run_tc1(const Tc1Config& config, ScenarioEnv env = {});

struct Tc2Config {
  std::filesystem::path work_dir;
  bool defense = false;
  std::size_t injected_entries = 20;
  std::string seal_secret = "netagent-scenario-key";
  tuner::TunerConfig tuner;
  /// Traffic offered during a capture window, for the load comparison.
  double capture_traffic_pps = 2'000.0;
  telemetry::TelemetryConfig telemetry;
  std::string token = "scenario-token";
};

/// Builds a clean history, records the baseline duration, injects entries
/// straight into the file bytes and lets the agent respond. With defense on
/// the rollback proposal is approved through the HTTP router.
ScenarioReport run_tc2(const Tc2Config& config, ScenarioEnv env = {});

/// The raw bytes an attacker would splice in: `n` high-severity entries
/// inserted before the closing bracket of the array.
std::string inject_entries(std::string_view history_bytes, std::size_t n);

/// Rows: Test Case, Threat, MAESTRO Layer(s), Exploit Method, Observed
/// Impact, Validated. Throws std::invalid_argument for an empty list or a
/// report missing any of those fields.
std::string emit_validation_summary(const std::vector<ScenarioReport>& reports);

/// Writes <scenario>-defense-<on|off>.json and .md under `dir`.
void persist_report(const ScenarioReport& r, const std::filesystem::path& dir);

}  // namespace netagent::harness
