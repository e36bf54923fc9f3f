// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
// fails. Usage: acceptance <path-to-agent-binary>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "netagent/errors.hpp"
#include "netagent/gateway.hpp"
#include "netagent/harness.hpp"
#include "netagent/maestro.hpp"
#include "netagent/memory_guard.hpp"
#include "netagent/packet.hpp"
#include "netagent/reasoning.hpp"
#include "netagent/tuner.hpp"

using namespace netagent;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Failed {
  std::string why;
};

void require(bool cond, const std::string& why) {
  if (!cond) throw Failed{why};
}

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("netagent_acceptance_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string g_agent;

// ---- risk matrix -----------------------------------------------------------

void risk_matrix() {
  const std::string cmd = "\"" + g_agent + "\" report risk-matrix --format json";
  FILE* p = ::popen(cmd.c_str(), "r");
  require(p != nullptr, "cannot start " + g_agent);
  std::string out;
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;) out.append(buf, n);
  const int status = ::pclose(p);
  require(status == 0, "agent exited with status " + std::to_string(status));
  const auto j = nlohmann::json::parse(out);
  const std::vector<int> expected{12, 9, 18, 12, 12, 18, 27, 9, 12, 18};
  std::vector<int> scores(10, -1);
  for (const auto& t : j.at("threats")) {
    const int id = t.at("id");
    require(id >= 1 && id <= 10, "unexpected threat id " + std::to_string(id));
    scores[static_cast<std::size_t>(id - 1)] = t.at("score");
  }
  require(j.at("threats").size() == 10, "expected ten threats");
  for (std::size_t i = 0; i < 10; ++i) {
    require(scores[i] == expected[i], "threat " + std::to_string(i + 1) + " scored " + std::to_string(scores[i]) +
                                          ", expected " + std::to_string(expected[i]));
  }
  require(j.at("ranking").at(0) == 7, "Resource Exhaustion is not ranked first");
  for (const auto& t : j.at("threats")) {
    if (t.at("id") == 7) require(t.at("name") == "Resource Exhaustion", "threat 7 name");
  }
}

// ---- score worked examples -------------------------------------------------

void score_examples() {
  using maestro::Level;
  require(maestro::score(Level::Low, Level::Low, Level::High) == 3, "score(1,1,3) != 3");
  require(maestro::score(Level::Medium, Level::Medium, Level::Medium) == 8, "score(2,2,2) != 8");
  require(maestro::score(Level::High, Level::High, Level::Low) == 9, "score(3,3,1) != 9");
}

// ---- TC1 --------------------------------------------------------------------

void tc1() {
  harness::Tc1Config cfg;
  require(cfg.rate_pps == 10'000 && cfg.iterations == 5 && cfg.telemetry.service_rate_pps == 6'000,
          "scenario defaults differ from 10,000 pps x 5 iterations at 6,000 pps");
  const auto r = harness::run_tc1(cfg);
  const double baseline = r.metrics.at("baseline_interval_s");
  const double peak = r.metrics.at("peak_interval_s");
  std::ostringstream s;
  s << "baseline " << baseline << " s, peak " << peak << " s";
  require(baseline >= 7.0 && baseline <= 8.0, s.str() + ": baseline outside [7,8]");
  require(peak > 13.0, s.str() + ": peak not above 13 s");
  require(r.metrics.at("threat7_alert").get<bool>(), "no threat-7 alert");
  require(r.validated, "scenario not validated");
  std::cout << "  (" << s.str() << ")\n";
}

// ---- TC2 --------------------------------------------------------------------

void tc2_off() {
  harness::Tc2Config cfg;
  cfg.work_dir = scratch("tc2");
  require(cfg.injected_entries == 20, "default injection is not 20 entries");
  const auto r = harness::run_tc2(cfg);
  const double before = r.metrics.at("baseline_duration_s");
  const double after = r.metrics.at("poisoned_duration_s");
  require(before == 34.0, "clean history duration " + std::to_string(before));
  require(after == 170.0, "poisoned duration " + std::to_string(after));
  require(r.validated, "scenario not validated");
}

void tc2_on() {
  harness::Tc2Config cfg;
  cfg.work_dir = scratch("tc2");
  cfg.defense = true;
  const auto r = harness::run_tc2(cfg);
  require(r.metrics.at("integrity_before") == "tampered", "verify() did not report tampered");
  require(r.metrics.at("threat8_suspected").get<bool>(), "no threat-8 explanation");
  require(r.metrics.at("rollback_proposed").get<bool>(), "no rollback proposal");
  require(r.metrics.at("rollback_executed").get<bool>(), "rollback not executed after approval");
  const double after = r.metrics.at("poisoned_duration_s");
  require(after == 34.0, "post-approval duration " + std::to_string(after));
  require(r.validated, "scenario not validated");
}

// ---- integrity --------------------------------------------------------------

std::string kib_history() {
  std::string doc = "[";
  int i = 0;
  for (;;) {
    std::string item = std::string(i ? "," : "") +
                       R"({"t":"2025-06-01T12:00:00Z","severity":"low","threat_id":7,"source":"10.0.0.)" +
                       std::to_string(i) + R"(","note":""})";
    if (doc.size() + item.size() + 1 > 1024) break;
    doc += item;
    ++i;
  }
  doc += "]";
  doc.insert(doc.size() - 1, std::string(1024 - doc.size(), ' '));
  return doc;
}

void integrity() {
  using namespace memory_guard;
  // Every byte value at every offset of a sealed 1 KiB history.
  const auto bytes = kib_history();
  require(bytes.size() == 1024, "history fixture is not 1 KiB");
  const SealKey key{"acceptance"};
  const auto seal_rec = compute_seal(bytes, key, "2025-06-01T00:00:00Z");
  require(verify_bytes(bytes, seal_rec, key).valid(), "untouched history does not verify");
  std::string m = bytes;
  std::size_t mutations = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const char orig = m[i];
    for (int v = 0; v < 256; ++v) {
      if (static_cast<char>(v) == orig) continue;
      m[i] = static_cast<char>(v);
      require(verify_bytes(m, seal_rec, key).status == VerifyStatus::Tampered,
              "byte mutation undetected at offset " + std::to_string(i));
      ++mutations;
    }
    m[i] = orig;
  }
  require(mutations == 1024u * 255u, "mutation count");

  // Every bit of a 100-record chain, located at the record it lands in.
  const auto dir = scratch("chain");
  {
    ForensicLog log(dir / "forensic.log");
    for (int i = 0; i < 100; ++i) log.append({{"event", "test"}, {"i", i}, {"note", "record " + std::to_string(i)}});
  }
  const auto text = read_file(dir / "forensic.log");
  require(chain_verify(text).ok, "untouched chain does not verify");
  std::vector<std::size_t> starts{0};
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\n') starts.push_back(i + 1);
  }
  require(starts.size() == 101, "chain does not hold 100 records");
  std::vector<ChainCursor> cursors{{}};
  for (std::size_t rec = 0; rec < 100; ++rec) {
    const auto step =
        chain_verify(std::string_view(text).substr(starts[rec], starts[rec + 1] - starts[rec]), cursors.back());
    require(step.ok, "record " + std::to_string(rec) + " does not verify");
    cursors.push_back(step.end);
  }
  std::string c = text;
  std::size_t flips = 0;
  for (std::size_t rec = 0; rec < 100; ++rec) {
    for (std::size_t i = starts[rec]; i < starts[rec + 1]; ++i) {
      for (int bit = 0; bit < 8; ++bit) {
        c[i] ^= static_cast<char>(1 << bit);
        // The prefix before the record is untouched; resume there.
        const auto v = chain_verify(std::string_view(c).substr(starts[rec]), cursors[rec]);
        require(!v.ok && v.first_bad_index == rec,
                "bit flip at byte " + std::to_string(i) + " bit " + std::to_string(bit) + " not reported at record " +
                    std::to_string(rec));
        if (flips++ % 101 == 0) {
          const auto full = chain_verify(c);
          require(full.first_bad_index == v.first_bad_index, "resumed and full verification disagree");
        }
        c[i] ^= static_cast<char>(1 << bit);
      }
    }
  }
  require(flips == text.size() * 8, "not every bit was flipped");
  std::cout << "  (" << mutations << " byte mutations, " << flips << " bit flips)\n";
}

// ---- packets ----------------------------------------------------------------

packet::PacketRecord random_record(std::mt19937_64& rng) {
  using namespace packet;
  PacketRecord r;
  r.ts_sec = static_cast<std::uint32_t>(rng());
  r.ts_usec = static_cast<std::uint32_t>(rng() % 1'000'000);
  r.protocol = static_cast<Protocol>(rng() % 4);
  const std::uint32_t min_len = min_frame_len(r.protocol);
  r.original_len = min_len + static_cast<std::uint32_t>(rng() % 70'000);
  const std::uint32_t cap_max = std::min<std::uint32_t>(r.original_len, kSnapLen);
  r.captured_len = min_len + static_cast<std::uint32_t>(rng() % (std::min<std::uint32_t>(cap_max, 1'600) - min_len + 1));
  if (r.protocol != Protocol::Other) {
    r.src_addr = Ipv4{static_cast<std::uint32_t>(rng())};
    r.dst_addr = Ipv4{static_cast<std::uint32_t>(rng())};
  }
  if (r.protocol == Protocol::Tcp || r.protocol == Protocol::Udp) {
    r.src_port = static_cast<std::uint16_t>(rng());
    r.dst_port = static_cast<std::uint16_t>(rng());
  }
  if (r.protocol == Protocol::Tcp) r.tcp_flags = static_cast<std::uint8_t>(rng() & tcp_flag::All);
  return r;
}

void packets() {
  using namespace packet;
  std::mt19937_64 rng(2024);
  std::vector<PacketRecord> records;
  for (int i = 0; i < 1'000; ++i) records.push_back(random_record(rng));
  const auto bytes = write_capture(records);
  const auto parsed = parse_capture(bytes);
  require(parsed == records, "round trip changed records");
  require(write_capture(parsed) == bytes, "rewrite is not byte-identical");
  const auto be = write_capture(records, ByteOrder::Big);
  require(be != bytes, "byte orders produced identical files");
  require(parse_capture(be) == parsed, "big-endian parse differs");

  std::size_t structured = 0;
  for (int i = 0; i < 10'000; ++i) {
    std::vector<std::uint8_t> input;
    if (i % 2 == 0) {
      input.resize(rng() % 512);
      for (auto& b : input) b = static_cast<std::uint8_t>(rng());
    } else {
      input = bytes;
      input.resize(rng() % (input.size() + 1));
      for (int f = 0, n = 1 + static_cast<int>(rng() % 8); f < n && !input.empty(); ++f) {
        input[rng() % input.size()] ^= static_cast<std::uint8_t>(rng());
      }
    }
    try {
      parse_capture(input);
    } catch (const ParseError&) {
      ++structured;
    }
    // Anything else propagates and fails the criterion.
  }
  std::cout << "  (" << structured << " of 10000 fuzz inputs rejected with ParseError)\n";
}

// ---- tuner --------------------------------------------------------------------

void tuner_properties() {
  using namespace tuner;
  const TunerConfig cfg;
  require(decide_capture_duration({}, cfg).capture_duration_s == 34.0, "empty history is not 34 s");
  std::mt19937_64 rng(77);
  std::vector<std::pair<double, double>> points;
  for (int i = 0; i < 1'000; ++i) {
    std::vector<HistoryEntry> h;
    for (std::size_t k = 0, n = rng() % 120; k < n; ++k) {
      HistoryEntry e;
      char t[32];
      std::snprintf(t, sizeof t, "2025-06-01T12:%02zu:00Z", k % 60);
      e.t = t;
      e.severity = static_cast<Level>(1 + rng() % 3);
      h.push_back(e);
    }
    const auto d = decide_capture_duration(h, cfg);
    require(d.capture_duration_s >= 34.0 && d.capture_duration_s <= 300.0,
            "duration " + std::to_string(d.capture_duration_s) + " outside [34, 300]");
    points.emplace_back(d.threat_index, d.capture_duration_s);
  }
  std::sort(points.begin(), points.end());
  for (std::size_t i = 1; i < points.size(); ++i) {
    require(points[i].second >= points[i - 1].second, "duration decreases as the threat index grows");
  }
}

// ---- reasoner -----------------------------------------------------------------

bool destructive(reasoning::ActionKind k) {
  using reasoning::ActionKind;
  return k == ActionKind::BlockSource || k == ActionKind::RollbackHistory || k == ActionKind::ExtendCapture;
}

detection::AnomalyEvent make_event(detection::RuleKind kind, double observed, double threshold, std::string subject) {
  detection::AnomalyEvent e;
  e.t = 30.0;
  e.kind = kind;
  e.rule_id = std::string(detection::rule_kind_tag(kind));
  e.observed = observed;
  e.threshold = threshold;
  e.severity = detection::severity_for(observed, threshold);
  e.subject = std::move(subject);
  e.maps_to_threat = kind == detection::RuleKind::PortScan ? 1 : 7;
  return e;
}

void reasoner_safety() {
  using namespace reasoning;
  using detection::RuleKind;
  using memory_guard::VerifyStatus;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> over(0.5, 20.0);
  const std::vector kinds{RuleKind::RateDos, RuleKind::IcmpFlood, RuleKind::SynFlood, RuleKind::PortScan};
  const std::vector statuses{VerifyStatus::Valid, VerifyStatus::Tampered, VerifyStatus::MissingSeal,
                             VerifyStatus::KeyMismatch};
  double now = 0;
  gateway::ProposalBook book(nullptr, nullptr, [&] { return now; });
  std::size_t destructive_runs = 0;
  for (auto k : {ActionKind::RaiseAlert, ActionKind::BlockSource, ActionKind::ExtendCapture,
                 ActionKind::RollbackHistory, ActionKind::RateLimit}) {
    book.set_executor(k, [&, k](const ActionProposal&) {
      if (destructive(k)) ++destructive_runs;
      return nlohmann::json::object();
    });
  }
  // An adapter that tries to mark every action auto.
  auto pushy = std::make_shared<FunctionAdapter>([](const std::string& req) {
    auto e = nlohmann::json::parse(MockAdapter().complete(req));
    for (auto& a : e["recommended_actions"]) a["policy"] = "auto";
    return e.dump();
  });
  ReasoningEngine engine({}, pushy, std::chrono::seconds(5));

  std::size_t destructive_seen = 0;
  for (int i = 0; i < 1'000; ++i) {
    std::vector<detection::AnomalyEvent> events;
    for (std::size_t k = 0, n = rng() % 5; k < n; ++k) {
      const auto kind = kinds[rng() % kinds.size()];
      const double thr = kind == RuleKind::PortScan ? 100 : 1'000;
      events.push_back(make_event(kind, thr * over(rng), thr, "10.0.0." + std::to_string(rng() % 250)));
    }
    std::vector<telemetry::TelemetrySnapshot> snaps;
    for (std::size_t k = 0, m = rng() % 6; k < m; ++k) {
      telemetry::TelemetrySnapshot s;
      s.seq = k + 1;
      s.queue_len = rng() % 3 ? 0 : rng() % 200'000;
      s.update_interval_s = 7.5 + static_cast<double>(s.queue_len) / 6'000;
      snaps.push_back(s);
    }
    HistoryContext h;
    h.sealing_enabled = rng() % 2;
    h.integrity = statuses[rng() % statuses.size()];

    const auto r = engine.explain(events, snaps, h);
    for (auto a : r.explanation.recommended_actions) {
      if (destructive(a.kind)) {
        ++destructive_seen;
        require(a.policy == Policy::NeedsApproval, std::string("destructive ") + std::string(kind_tag(a.kind)) +
                                                       " not gated");
      }
      book.submit(a);
      a.policy = Policy::Auto;  // forged
      book.submit(a);
    }
  }
  require(destructive_seen > 0, "no destructive proposals were exercised");
  require(destructive_runs == 0, std::to_string(destructive_runs) + " destructive actions ran without approval");

  // Arbitrary adapter bytes always come back as a schema-valid explanation.
  const std::vector events{make_event(RuleKind::RateDos, 10'000, 5'000, "10.0.0.66")};
  std::vector<telemetry::TelemetrySnapshot> snaps(3);
  for (std::size_t k = 0; k < 3; ++k) {
    snaps[k].seq = k + 1;
    snaps[k].update_interval_s = k == 2 ? 14.0 : 7.5;
  }
  const HistoryContext h{true, VerifyStatus::Tampered, 20, 1.0, "ab"};
  std::string next;
  auto fuzz = std::make_shared<FunctionAdapter>([&](const std::string&) { return next; });
  ReasoningEngine fuzzed({}, fuzz, std::chrono::seconds(5));
  std::size_t fallbacks = 0;
  for (int i = 0; i < 1'000; ++i) {
    next.assign(rng() % 400, '\0');
    for (auto& ch : next) ch = static_cast<char>(rng());
    const auto r = fuzzed.explain(events, snaps, h);
    explanation_from_json(nlohmann::json::parse(to_json(r.explanation).dump()));  // throws if invalid
    fallbacks += r.fell_back;
  }
  require(fallbacks == 1'000, "random bytes accepted as an explanation");
  std::cout << "  (" << destructive_seen << " destructive proposals held, " << fallbacks << " fuzz fallbacks)\n";
}

struct Criterion {
  std::string name;
  std::function<void()> run;
  double limit_s;  // 0: no runtime limit
};

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <agent-binary>\n";
    return 2;
  }
  g_agent = argv[1];
  const std::vector<Criterion> criteria{
      {"risk-matrix fidelity", risk_matrix, 1.0},
      {"risk score worked examples", score_examples, 0},
      {"TC1 desk-scale reproduction", tc1, 60.0},
      {"TC2 defense off", tc2_off, 5.0},
      {"TC2 defense on", tc2_on, 5.0},
      {"integrity property suite", integrity, 30.0},
      {"packet round-trip property", packets, 60.0},
      {"tuner properties", tuner_properties, 0},
      {"reasoner safety floor", reasoner_safety, 0},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = Clock::now();
    std::string why;
    try {
      c.run();
    } catch (const Failed& f) {
      why = f.why;
    } catch (const std::exception& e) {
      why = std::string("exception: ") + e.what();
    }
    const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    if (why.empty() && c.limit_s > 0 && elapsed >= c.limit_s) {
      why = "took " + std::to_string(elapsed) + " s, limit " + std::to_string(c.limit_s) + " s";
    }
    char timing[64];
    std::snprintf(timing, sizeof timing, "%.3f s", elapsed);
    if (why.empty()) {
      std::cout << "PASS " << c.name << " [" << timing << "]\n";
    } else {
      ++failures;
      std::cout << "FAIL " << c.name << " [" << timing << "]: " << why << "\n";
    }
    std::cout.flush();
  }
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << criteria.size() - failures << "/" << criteria.size() << "\n";
  return failures ? 1 : 0;
}
