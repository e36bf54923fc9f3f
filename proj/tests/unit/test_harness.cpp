#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "netagent/errors.hpp"
#include "netagent/harness.hpp"
#include "netagent/tuner.hpp"

using namespace netagent;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("netagent_harness_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

struct Sample {
  double t;
  double interval;
  std::uint64_t q;
};

// Independent model of TC1 without background traffic: the flood is one
// busy period starting at `start`, N packets spaced 1/rate apart, served at
// mu. A snapshot samples the queue one base interval after the previous one,
// before any packet stamped at that same instant, and is published
// interval(q) after it.
std::vector<Sample> flood_oracle(double start, double rate, std::uint64_t n, double mu, std::size_t count) {
  const auto queue_at = [&](double s) -> std::uint64_t {
    if (s < start) return 0;
    const auto arrived = std::min<std::uint64_t>(n, static_cast<std::uint64_t>(std::ceil((s - start) * rate - 1e-9)));
    const auto served = std::min<std::uint64_t>(arrived, static_cast<std::uint64_t>(std::floor((s - start) * mu + 1e-9)));
    return arrived - served;
  };
  std::vector<Sample> out;
  double t = start;
  for (std::size_t k = 0; k < count; ++k) {
    const auto q = queue_at(t + 7.5);
    const double interval = 7.5 + static_cast<double>(q) / 6000.0;
    t += interval;
    out.push_back({t, interval, q});
  }
  return out;
}

std::size_t count_rows(const std::string& table) {
  std::size_t rows = 0;
  std::istringstream in(table);
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("| TC", 0) == 0) ++rows;
  }
  return rows;
}

}  // namespace

TEST(Harness, Tc1WithoutDefenseDegrades) {
  harness::Tc1Config cfg;
  const auto r = harness::run_tc1(cfg);
  const auto& m = r.metrics;
  EXPECT_TRUE(r.validated);
  EXPECT_EQ(r.threat_id, 7);
  EXPECT_EQ(r.maestro_layers, (std::vector<std::string>{"L4", "L5"}));
  EXPECT_GE(m["baseline_interval_s"].get<double>(), 7.0);
  EXPECT_LE(m["baseline_interval_s"].get<double>(), 8.0);
  EXPECT_GT(m["peak_interval_s"].get<double>(), 13.0);
  EXPECT_TRUE(m["threat7_alert"].get<bool>());
  EXPECT_NEAR(m["degradation_ratio"].get<double>(),
              m["peak_interval_s"].get<double>() / m["baseline_interval_s"].get<double>(), 1e-12);
  EXPECT_EQ(m["flood_packets"], 500'000);
  EXPECT_EQ(m["packets_dropped"], 0);
  EXPECT_FALSE(m["rate_limit_executed"].get<bool>());
  // Each published interval is the queue formula of its own sample, and
  // consecutive publications are spaced by the later interval.
  const auto& series = m["intervals"];
  ASSERT_GT(series.size(), 6u);
  for (std::size_t i = 0; i < series.size(); ++i) {
    EXPECT_NEAR(series[i]["interval_s"].get<double>(), 7.5 + series[i]["queue_len"].get<double>() / 6000.0, 1e-9);
    if (i > 0) {
      EXPECT_NEAR(series[i]["t"].get<double>() - series[i - 1]["t"].get<double>(),
                  series[i]["interval_s"].get<double>(), 1e-6);
    }
  }
}

TEST(Harness, Tc1MatchesBusyPeriodOracle) {
  harness::Tc1Config cfg;
  cfg.background_pps = 0;
  const auto r = harness::run_tc1(cfg);
  const double start = r.metrics["replay_start_s"].get<double>();
  EXPECT_DOUBLE_EQ(start, 22.5);
  EXPECT_NEAR(r.metrics["replay_end_s"].get<double>(), start + 50.0, 1e-6);

  const auto& series = r.metrics["intervals"];
  std::vector<Sample> flood;
  for (const auto& s : series) {
    if (s["t"].get<double>() > start) flood.push_back({s["t"], s["interval_s"], s["queue_len"]});
  }
  const auto expect = flood_oracle(start, 10'000, 500'000, 6'000, flood.size());
  ASSERT_GE(flood.size(), 4u);
  double peak = 0;
  for (std::size_t i = 0; i < flood.size(); ++i) {
    SCOPED_TRACE(i);
    EXPECT_NEAR(static_cast<double>(flood[i].q), static_cast<double>(expect[i].q), 2.0);
    EXPECT_NEAR(flood[i].interval, expect[i].interval, 2.0 / 6000.0 + 1e-9);
    EXPECT_NEAR(flood[i].t, expect[i].t, 1e-3);
    peak = std::max(peak, expect[i].interval);
  }
  EXPECT_NEAR(r.metrics["peak_interval_s"].get<double>(), peak, 2.0 / 6000.0);
}

TEST(Harness, Tc1DefenseRecovers) {
  harness::Tc1Config off;
  harness::Tc1Config on;
  on.defense = true;
  const auto a = harness::run_tc1(off);
  const auto b = harness::run_tc1(on);
  EXPECT_TRUE(b.validated);
  EXPECT_TRUE(b.defense);
  EXPECT_TRUE(b.metrics["rate_limit_executed"].get<bool>());
  ASSERT_FALSE(b.metrics["recovered_after_snapshots"].is_null());
  EXPECT_LE(b.metrics["recovered_after_snapshots"].get<int>(), 5);
  EXPECT_GT(b.metrics["packets_dropped"].get<int>(), 0);
  // The defended arm is never worse than the undefended one.
  EXPECT_LE(b.metrics["peak_interval_s"].get<double>(), a.metrics["peak_interval_s"].get<double>());
  EXPECT_LT(b.metrics["queue_integral_packet_s"].get<double>(), a.metrics["queue_integral_packet_s"].get<double>());
}

TEST(Harness, Tc1IsDeterministic) {
  harness::Tc1Config cfg;
  cfg.iterations = 2;
  EXPECT_EQ(harness::to_json(harness::run_tc1(cfg)).dump(), harness::to_json(harness::run_tc1(cfg)).dump());
  cfg.defense = true;
  EXPECT_EQ(harness::to_json(harness::run_tc1(cfg)).dump(), harness::to_json(harness::run_tc1(cfg)).dump());
}

TEST(Harness, Tc1BelowServiceRateIsNotValidated) {
  harness::Tc1Config cfg;
  cfg.rate_pps = 1'000;
  cfg.packets_per_iteration = 10'000;
  const auto r = harness::run_tc1(cfg);
  EXPECT_FALSE(r.validated);
  EXPECT_DOUBLE_EQ(r.metrics["peak_interval_s"].get<double>(), r.metrics["baseline_interval_s"].get<double>());
  EXPECT_FALSE(r.metrics["threat7_alert"].get<bool>());
}

TEST(Harness, Tc1RefusesHostMode) {
  harness::Tc1Config cfg;
  cfg.mode = telemetry::Mode::Host;
  EXPECT_THROW(harness::run_tc1(cfg), std::invalid_argument);
  cfg.mode = telemetry::Mode::Simulated;
  cfg.iterations = 0;
  EXPECT_THROW(harness::run_tc1(cfg), std::invalid_argument);
}

TEST(Harness, Tc2WithoutDefenseIsPoisoned) {
  harness::Tc2Config cfg;
  cfg.work_dir = scratch("tc2_off");
  const auto r = harness::run_tc2(cfg);
  const auto& m = r.metrics;
  EXPECT_TRUE(r.validated);
  EXPECT_EQ(r.threat_id, 8);
  EXPECT_EQ(m["baseline_duration_s"], 34.0);
  EXPECT_EQ(m["poisoned_duration_s"], 170.0);
  EXPECT_EQ(m["injected_file_duration_s"], 170.0);
  EXPECT_FALSE(m["tamper_detected"].get<bool>());
  EXPECT_EQ(m["integrity_before"], "unsealed");
  // Capture load is duration times offered rate.
  EXPECT_EQ(m["baseline_capture_packets"], 34 * 2'000);
  EXPECT_EQ(m["poisoned_capture_packets"], 170 * 2'000);
  EXPECT_GT(m["poisoned_queue_integral_packet_s"].get<double>(), m["baseline_queue_integral_packet_s"].get<double>());
  // The file on disk holds exactly the injected entries.
  const auto history = tuner::load_history(cfg.work_dir / "tc2-defense-off" / "history.json");
  EXPECT_EQ(history.size(), 20u);
}

TEST(Harness, Tc2DefenseRollsBack) {
  const auto dir = scratch("tc2_on");
  memory_guard::ForensicLog log(dir / "forensic.log");
  gateway::MessageHub hub("tok", &log, 100'000);
  auto sub = hub.subscribe("tok");
  harness::Tc2Config cfg;
  cfg.work_dir = dir;
  cfg.defense = true;
  const auto r = harness::run_tc2(cfg, {&hub, &log});
  const auto& m = r.metrics;
  EXPECT_TRUE(r.validated);
  EXPECT_TRUE(m["tamper_detected"].get<bool>());
  EXPECT_TRUE(m["threat8_suspected"].get<bool>());
  EXPECT_TRUE(m["rollback_proposed"].get<bool>());
  EXPECT_TRUE(m["rollback_executed"].get<bool>());
  EXPECT_EQ(m["integrity_before"], "tampered");
  EXPECT_EQ(m["integrity_after"], "valid");
  EXPECT_EQ(m["baseline_duration_s"], 34.0);
  EXPECT_EQ(m["poisoned_duration_s"], 34.0);
  EXPECT_EQ(m["injected_file_duration_s"], 170.0);
  EXPECT_TRUE(tuner::load_history(dir / "tc2-defense-on" / "history.json").empty());

  // The operator path is visible on the stream: proposal, then approved and
  // executed status updates for the same id.
  const auto msgs = sub->drain();
  std::string rollback_id;
  for (const auto& msg : msgs) {
    if (msg.type == gateway::MessageType::ActionProposal && msg.payload["kind"] == "rollback_history") {
      rollback_id = msg.payload["id"];
    }
  }
  ASSERT_FALSE(rollback_id.empty());
  std::vector<std::string> statuses;
  for (const auto& msg : msgs) {
    if (msg.type == gateway::MessageType::ActionStatus && msg.payload["id"] == rollback_id) {
      statuses.push_back(msg.payload["status"]);
    }
  }
  EXPECT_EQ(statuses, (std::vector<std::string>{"approved", "executed"}));

  // And in the forensic log, whose chain still verifies.
  const auto text = read_file(log.path());
  EXPECT_TRUE(memory_guard::chain_verify(text).ok);
  EXPECT_NE(text.find(R"("event":"rollback")"), std::string::npos);
  EXPECT_NE(text.find(R"("outcome":"restored")"), std::string::npos);
}

TEST(Harness, Tc2WithoutInjectionIsNotValidated) {
  for (bool defense : {false, true}) {
    harness::Tc2Config cfg;
    cfg.work_dir = scratch("tc2_zero");
    cfg.defense = defense;
    cfg.injected_entries = 0;
    const auto r = harness::run_tc2(cfg);
    EXPECT_FALSE(r.validated) << defense;
    EXPECT_EQ(r.metrics["baseline_duration_s"], r.metrics["poisoned_duration_s"]);
    EXPECT_FALSE(r.metrics["rollback_executed"].get<bool>());
  }
}

TEST(Harness, Tc2DefenseNeverWorse) {
  for (std::size_t n : {1u, 3u, 20u, 50u}) {
    harness::Tc2Config off;
    off.work_dir = scratch("tc2_cmp");
    off.injected_entries = n;
    auto on = off;
    on.defense = true;
    const auto a = harness::run_tc2(off);
    const auto b = harness::run_tc2(on);
    EXPECT_LE(b.metrics["poisoned_duration_s"].get<double>(), a.metrics["poisoned_duration_s"].get<double>()) << n;
    EXPECT_EQ(b.metrics["poisoned_duration_s"], 34.0) << n;
  }
}

TEST(Harness, InjectEntries) {
  const auto one = harness::inject_entries("[]", 1);
  EXPECT_EQ(nlohmann::json::parse(one).size(), 1u);
  const auto many = harness::inject_entries("[\n]\n", 30);
  const auto j = nlohmann::json::parse(many);
  ASSERT_EQ(j.size(), 30u);
  for (const auto& e : j) EXPECT_EQ(e["severity"], "high");

  const std::string existing = R"([{"t": "2025-05-01T00:00:00Z", "severity": "low"}])";
  const auto grown = nlohmann::json::parse(harness::inject_entries(existing, 2));
  ASSERT_EQ(grown.size(), 3u);
  EXPECT_EQ(grown[0]["severity"], "low");
  EXPECT_EQ(harness::inject_entries(existing, 0), existing);
  EXPECT_THROW(harness::inject_entries("{}", 1), std::invalid_argument);
}

TEST(Harness, ValidationSummary) {
  harness::Tc1Config c1;
  harness::Tc2Config c2;
  c2.work_dir = scratch("summary");
  const std::vector<harness::ScenarioReport> reports{harness::run_tc1(c1), harness::run_tc2(c2)};
  const auto table = harness::emit_validation_summary(reports);
  EXPECT_EQ(table.rfind("| Test Case | Threat | MAESTRO Layer(s) | Exploit Method | Observed Impact | Validated |", 0), 0u);
  EXPECT_EQ(count_rows(table), 2u);
  std::istringstream in(table);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(in, line)) {
    if (line.rfind("| TC", 0) == 0) rows.push_back(line);
  }
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_NE(rows[0].find("L4"), std::string::npos);
  EXPECT_NE(rows[0].find("L5"), std::string::npos);
  EXPECT_NE(rows[0].find("Threat #7"), std::string::npos);
  EXPECT_NE(rows[1].find("Threat #8"), std::string::npos);
  for (const auto& row : rows) EXPECT_NE(row.find("| Validated |"), std::string::npos) << row;

  EXPECT_THROW(harness::emit_validation_summary({}), std::invalid_argument);
  auto broken = reports[0];
  broken.observed_impact.clear();
  EXPECT_THROW(harness::emit_validation_summary({broken}), std::invalid_argument);
  broken = reports[1];
  broken.maestro_layers.clear();
  EXPECT_THROW(harness::emit_validation_summary({broken}), std::invalid_argument);
}

TEST(Harness, ReportRoundTripAndPersist) {
  harness::Tc2Config cfg;
  cfg.work_dir = scratch("persist");
  cfg.defense = true;
  const auto r = harness::run_tc2(cfg);
  const auto j = harness::to_json(r);
  EXPECT_EQ(j["defense_arm"], "on");
  EXPECT_EQ(harness::to_json(harness::report_from_json(nlohmann::ordered_json::parse(j.dump()))).dump(), j.dump());

  auto bad = nlohmann::ordered_json::parse(j.dump());
  bad["defense_arm"] = "maybe";
  EXPECT_THROW(harness::report_from_json(bad), std::invalid_argument);

  const auto out = cfg.work_dir / "reports";
  harness::persist_report(r, out);
  ASSERT_TRUE(fs::exists(out / "tc2-defense-on.json"));
  ASSERT_TRUE(fs::exists(out / "tc2-defense-on.md"));
  EXPECT_EQ(nlohmann::ordered_json::parse(read_file(out / "tc2-defense-on.json")).dump(), j.dump());
  const auto md = read_file(out / "tc2-defense-on.md");
  EXPECT_NE(md.find("TC2: Memory Poisoning (defense on)"), std::string::npos);
  EXPECT_NE(md.find("| Validated | yes |"), std::string::npos);
}
