#include "netagent/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "netagent/agent.hpp"
#include "netagent/errors.hpp"
#include "netagent/gateway.hpp"
#include "netagent/harness.hpp"
#include "netagent/maestro.hpp"
#include "netagent/memory_guard.hpp"
#include "netagent/packet.hpp"
#include "netagent/reasoning.hpp"
#include "netagent/server.hpp"
#include "netagent/tuner.hpp"

namespace netagent::cli {

namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

/// Failure with a message, mapped to exit code 1 (or 2 for usage).
struct Failure {
  int code;
  std::string message;
};

telemetry::Mode parse_mode(const std::string& m) { return m == "host" ? telemetry::Mode::Host : telemetry::Mode::Simulated; }

memory_guard::SealKey require_key() {
  auto key = memory_guard::SealKey::from_env();
  if (!key) throw Failure{1, std::string(memory_guard::kSealKeyEnv) + " is not set"};
  return *key;
}

nlohmann::ordered_json history_view(const fs::path& path, const std::optional<memory_guard::SealKey>& key,
                                    const tuner::TunerConfig& tuner_cfg) {
  nlohmann::ordered_json out{{"path", path.string()}};
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  try {
    const auto history = tuner::load_history(path);
    for (const auto& e : history) entries.push_back(tuner::to_json(e));
    const auto d = tuner::decide_capture_duration(history, tuner_cfg);
    out["threat_index"] = d.threat_index;
    out["capture_duration_s"] = d.capture_duration_s;
  } catch (const std::exception& e) {
    out["error"] = e.what();
  }
  out["integrity"] = key ? std::string(memory_guard::status_tag(memory_guard::verify(path, *key).status)) : "unsealed";
  out["entries"] = entries;
  return out;
}

struct RunOptions {
  std::string bind;
  std::string token;
  std::string mode = "simulated";
  std::string rules;
  std::string state_dir = "state";
  std::string reports = "reports";
  double duration_s = 0;
  double base_interval_s = 7.5;
  std::string replay_file;
  double rate = 10'000;
  std::uint32_t iterations = 1;
};

int cmd_run(const RunOptions& o, std::ostream& out, std::ostream& err) {
  if (o.token.empty()) throw Failure{2, std::string(gateway::kTokenEnv) + " (or --token) is required"};
  const auto [host, port] = server::parse_bind(o.bind);
  fs::create_directories(o.state_dir);
  const fs::path state(o.state_dir);
  const auto history = state / "history.json";
  memory_guard::ForensicLog log(state / "forensic.log");
  gateway::MessageHub hub(o.token, &log);

  agent::AgentConfig cfg;
  cfg.telemetry.mode = parse_mode(o.mode);
  cfg.telemetry.base_interval_s = o.base_interval_s;
  if (!o.rules.empty()) cfg.rules = detection::load_rules(o.rules);
  cfg.history_path = history;
  const auto key = memory_guard::SealKey::from_env();
  memory_guard::SnapshotStore store(state / "snapshots");
  if (key) {
    cfg.seal_key = key;
    cfg.snapshots = &store;
  }
  if (!fs::exists(history)) {
    tuner::save_history(history, {});
    if (key) memory_guard::seal(history, *key, &store);
  }

  std::shared_ptr<reasoning::ReasonerAdapter> adapter;
  if (auto http = reasoning::HttpAdapter::from_env(std::chrono::seconds(10))) {
    adapter = std::make_shared<reasoning::HttpAdapter>(std::move(*http));
  }
  auto engine = std::make_shared<reasoning::ReasoningEngine>(cfg.policy, adapter, std::chrono::seconds(10), &log);
  agent::Agent agent(cfg, &hub, &log, engine, 0);

  gateway::RouterContext ctx;
  ctx.token = o.token;
  ctx.book = &agent.book();
  ctx.hub = &hub;
  ctx.history_view = [&] { return history_view(history, key, cfg.tuner); };
  ctx.scenarios = [&](const std::string& id, bool defense) {
    harness::ScenarioReport r;
    if (id == "tc1") {
      harness::Tc1Config c;
      c.defense = defense;
      r = harness::run_tc1(c, {&hub, &log});
    } else {
      harness::Tc2Config c;
      c.defense = defense;
      c.work_dir = state / "scenarios";
      c.token = o.token;
      r = harness::run_tc2(c, {&hub, &log});
    }
    harness::persist_report(r, o.reports);
    return harness::to_json(r);
  };
  gateway::ApiRouter router(ctx);
  server::GatewayServer srv(router, hub, host, port);
  srv.start();
  out << nlohmann::json{{"listening", srv.host() + ":" + std::to_string(srv.port())}}.dump() << std::endl;

  g_stop = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed_us = [&] {
    return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - t0).count();
  };
  std::thread feeder;
  if (!o.replay_file.empty()) {
    packet::ReplayPlan plan;
    plan.source = o.replay_file;
    plan.rate_pps = o.rate;
    plan.iterations = o.iterations;
    plan.clock = packet::ClockMode::Wall;
    feeder = std::thread([&, plan] {
      try {
        packet::replay(plan, [&](const packet::PacketRecord& p) { return !g_stop && agent.offer(p); });
      } catch (const packet::ReplayAborted&) {
      } catch (const std::exception& e) {
        err << "replay failed: " << e.what() << "\n";
      }
    });
  }
  while (!g_stop && (o.duration_s <= 0 || static_cast<double>(elapsed_us()) / 1e6 < o.duration_s)) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    agent.advance_to(elapsed_us());
  }
  g_stop = true;
  if (feeder.joinable()) feeder.join();
  srv.stop();
  std::signal(SIGINT, SIG_DFL);
  std::signal(SIGTERM, SIG_DFL);

  out << nlohmann::json{{"stopped", true},
                        {"snapshots", agent.snapshots().size()},
                        {"alerts", agent.events().size()},
                        {"packets_offered", agent.offered()}}
             .dump()
      << std::endl;
  return 0;
}

int cmd_scenario(const std::string& id, const std::string& defense, const std::string& mode,
                 const std::string& format, const std::string& reports, const std::string& work_dir, double rate,
                 std::uint32_t iterations, std::size_t inject, std::ostream& out) {
  if (mode != "simulated") throw Failure{2, "scenarios run only in simulated mode"};
  harness::ScenarioReport r;
  if (id == "tc1") {
    harness::Tc1Config c;
    c.defense = defense == "on";
    c.rate_pps = rate;
    c.iterations = iterations;
    r = harness::run_tc1(c);
  } else {
    harness::Tc2Config c;
    c.defense = defense == "on";
    c.work_dir = work_dir;
    c.injected_entries = inject;
    r = harness::run_tc2(c);
  }
  if (!reports.empty()) harness::persist_report(r, reports);
  out << (format == "json" ? harness::to_json(r).dump(2) + "\n" : harness::report_markdown(r));
  return 0;
}

int cmd_report_validation(const std::string& dir, const std::string& format, std::ostream& out) {
  std::vector<fs::path> files;
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() == ".json") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<harness::ScenarioReport> reports;
  for (const auto& f : files) reports.push_back(harness::report_from_json(nlohmann::ordered_json::parse(read_file(f))));
  if (reports.empty()) throw Failure{1, "no scenario reports under " + dir};
  if (format == "json") {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : reports) arr.push_back(harness::to_json(r));
    out << nlohmann::ordered_json{{"reports", arr}}.dump(2) << "\n";
  } else {
    out << harness::emit_validation_summary(reports);
  }
  return 0;
}

int cmd_replay(const std::string& file, double rate, std::uint32_t iterations, const std::string& rules,
               std::ostream& out) {
  agent::AgentConfig cfg;
  cfg.defense = false;
  if (!rules.empty()) cfg.rules = detection::load_rules(rules);
  agent::Agent agent(cfg, nullptr, nullptr);
  packet::ReplayPlan plan;
  plan.source = file;
  plan.rate_pps = rate;
  plan.iterations = iterations;
  const auto stats = packet::replay(plan, [&](const packet::PacketRecord& p) { return agent.offer(p); });
  agent.advance_to(std::llround(stats.elapsed_s * 1e6) + cfg.detection_tick_us);

  nlohmann::ordered_json events = nlohmann::ordered_json::array();
  for (const auto& e : agent.events()) events.push_back(detection::to_json(e));
  nlohmann::ordered_json snaps = nlohmann::ordered_json::array();
  for (const auto& s : agent.snapshots()) snaps.push_back(telemetry::to_json(s));
  out << nlohmann::ordered_json{{"packets_sent", stats.packets_sent},
                                {"elapsed_s", stats.elapsed_s},
                                {"achieved_pps", stats.achieved_pps},
                                {"events", events},
                                {"snapshots", snaps}}
             .dump(2)
      << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-monitoring network telemetry agent", "agent"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Host the gateway and the agent loop");
  RunOptions ro;
  ro.bind = env_or(gateway::kBindEnv, "127.0.0.1:8080");
  ro.token = env_or(gateway::kTokenEnv, "");
  run->add_option("--bind", ro.bind, "host:port to listen on")->capture_default_str();
  run->add_option("--token", ro.token, "bearer token (default from AGENT_TOKEN)");
  run->add_option("--mode", ro.mode)->check(CLI::IsMember({"simulated", "host"}))->capture_default_str();
  run->add_option("--rules", ro.rules, "detection rule file")->check(CLI::ExistingFile);
  run->add_option("--state-dir", ro.state_dir)->capture_default_str();
  run->add_option("--reports", ro.reports)->capture_default_str();
  run->add_option("--duration", ro.duration_s, "seconds to run; 0 runs until interrupted")->check(CLI::NonNegativeNumber);
  run->add_option("--base-interval", ro.base_interval_s, "healthy telemetry interval in seconds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  run->add_option("--replay", ro.replay_file, "capture file to replay in wall-clock time")->check(CLI::ExistingFile);
  run->add_option("--rate", ro.rate)->check(CLI::PositiveNumber);
  run->add_option("--iterations", ro.iterations)->check(CLI::PositiveNumber);

  auto* scenario = app.add_subcommand("scenario", "Run an attack scenario and print its report");
  std::string sc_id, sc_defense = "off", sc_mode = "simulated", sc_format = "json", sc_reports = "reports",
                     sc_work = "state/scenarios";
  double sc_rate = 10'000;
  std::uint32_t sc_iterations = 5;
  std::size_t sc_inject = 20;
  scenario->add_option("id", sc_id)->required()->check(CLI::IsMember({"tc1", "tc2"}));
  scenario->add_option("--defense", sc_defense)->check(CLI::IsMember({"on", "off"}))->capture_default_str();
  scenario->add_option("--mode", sc_mode)->check(CLI::IsMember({"simulated", "host"}))->capture_default_str();
  scenario->add_option("--format", sc_format)->check(CLI::IsMember({"json", "md"}))->capture_default_str();
  scenario->add_option("--reports", sc_reports, "directory for report files; empty disables")->capture_default_str();
  scenario->add_option("--work-dir", sc_work, "tc2 state directory")->capture_default_str();
  scenario->add_option("--rate", sc_rate, "tc1 flood rate in pps")->check(CLI::PositiveNumber);
  scenario->add_option("--iterations", sc_iterations, "tc1 replay iterations")->check(CLI::PositiveNumber);
  scenario->add_option("--inject", sc_inject, "tc2 entries to inject")->check(CLI::NonNegativeNumber);

  auto* report = app.add_subcommand("report", "Emit reports");
  report->require_subcommand(1);
  auto* risk = report->add_subcommand("risk-matrix", "Scored MAESTRO threat matrix");
  std::string risk_format = "json";
  risk->add_option("--format", risk_format)->check(CLI::IsMember({"json", "md", "markdown"}))->capture_default_str();
  auto* validation = report->add_subcommand("validation", "Summary table of persisted scenario reports");
  std::string val_dir = "reports", val_format = "md";
  validation->add_option("--reports", val_dir)->capture_default_str();
  validation->add_option("--format", val_format)->check(CLI::IsMember({"json", "md"}))->capture_default_str();

  std::string history_path = "state/history.json";
  std::string snapshot_dir;
  auto* seal = app.add_subcommand("seal", "Seal a persisted file");
  seal->require_subcommand(1);
  auto* seal_history = seal->add_subcommand("history", "Seal history.json (key from AGENT_SEAL_KEY)");
  seal_history->add_option("--history", history_path)->capture_default_str();
  seal_history->add_option("--snapshots", snapshot_dir, "snapshot directory (default: next to the history)");

  auto* verify = app.add_subcommand("verify", "Check integrity");
  verify->require_subcommand(1);
  auto* verify_history = verify->add_subcommand("history", "Verify the history seal; exit 1 unless valid");
  verify_history->add_option("--history", history_path)->capture_default_str();
  auto* verify_log = verify->add_subcommand("log", "Verify the forensic hash chain; exit 1 unless intact");
  std::string log_path = "state/forensic.log";
  verify_log->add_option("--log", log_path)->capture_default_str();

  auto* replay = app.add_subcommand("replay", "Replay a capture through a simulated agent");
  std::string rp_file, rp_rules;
  double rp_rate = 10'000;
  std::uint32_t rp_iterations = 1;
  replay->add_option("file", rp_file)->required()->check(CLI::ExistingFile);
  replay->add_option("--rate", rp_rate)->check(CLI::PositiveNumber)->capture_default_str();
  replay->add_option("--iterations", rp_iterations)->check(CLI::PositiveNumber)->capture_default_str();
  replay->add_option("--rules", rp_rules)->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "agent: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*run) return cmd_run(ro, out, err);
    if (*scenario) {
      return cmd_scenario(sc_id, sc_defense, sc_mode, sc_format, sc_reports, sc_work, sc_rate, sc_iterations, sc_inject,
                          out);
    }
    if (*risk) {
      out << maestro::emit_report(maestro::build_risk_matrix(maestro::builtin_registry()),
                                  maestro::report_format_from_tag(risk_format));
      return 0;
    }
    if (*validation) return cmd_report_validation(val_dir, val_format, out);
    if (*seal_history) {
      const auto key = require_key();
      if (!fs::exists(history_path)) throw Failure{1, "history not found: " + history_path};
      tuner::load_history(history_path);  // refuse to seal a malformed file
      const auto dir = snapshot_dir.empty() ? fs::path(history_path).parent_path() / "snapshots" : fs::path(snapshot_dir);
      memory_guard::SnapshotStore store(dir);
      const auto s = memory_guard::seal(history_path, key, &store);
      auto j = memory_guard::to_json(s);
      j["path"] = history_path;
      out << j.dump(2) << "\n";
      return 0;
    }
    if (*verify_history) {
      const auto key = require_key();
      if (!fs::exists(history_path)) throw Failure{1, "history not found: " + history_path};
      const auto r = memory_guard::verify(history_path, key);
      out << nlohmann::ordered_json{{"path", history_path},
                                    {"status", memory_guard::status_tag(r.status)},
                                    {"expected_mac_hex", r.expected_mac_hex},
                                    {"computed_mac_hex", r.computed_mac_hex}}
                 .dump(2)
          << "\n";
      return r.valid() ? 0 : 1;
    }
    if (*verify_log) {
      if (!fs::exists(log_path)) throw Failure{1, "forensic log not found: " + log_path};
      const auto r = memory_guard::chain_verify_file(log_path);
      nlohmann::ordered_json j{{"path", log_path}, {"ok", r.ok}, {"records", r.records}};
      j["first_bad_index"] = r.first_bad_index ? nlohmann::ordered_json(*r.first_bad_index) : nlohmann::ordered_json();
      j["reason"] = r.reason;
      out << j.dump(2) << "\n";
      return r.ok ? 0 : 1;
    }
    if (*replay) return cmd_replay(rp_file, rp_rate, rp_iterations, rp_rules, out);
  } catch (const Failure& f) {
    err << "agent: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& e) {
    err << "agent: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace netagent::cli
