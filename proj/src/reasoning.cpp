#include "netagent/reasoning.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <future>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "netagent/maestro.hpp"

namespace netagent::reasoning {

namespace {

using detection::AnomalyEvent;
using detection::RuleKind;
using memory_guard::VerifyStatus;

bool is_flood(RuleKind k) { return k == RuleKind::RateDos || k == RuleKind::IcmpFlood || k == RuleKind::SynFlood; }

double rate_confidence(const AnomalyEvent& e) { return std::min(1.0, e.observed / e.threshold / 2.0); }

std::string fixed(double v, int digits = 2) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(digits);
  out << v;
  return out.str();
}

double checked_confidence(const nlohmann::json& j, const char* what) {
  if (!j.is_number()) throw SchemaError(std::string(what) + ": confidence must be a number");
  const double c = j.get<double>();
  if (!std::isfinite(c) || c < 0.0 || c > 1.0) throw SchemaError(std::string(what) + ": confidence outside [0,1]");
  return c;
}

const nlohmann::json& field(const nlohmann::json& j, const char* key, const char* what) {
  const auto it = j.find(key);
  if (it == j.end()) throw SchemaError(std::string(what) + ": missing '" + key + "'");
  return *it;
}

std::string string_field(const nlohmann::json& j, const char* key, const char* what) {
  const auto& v = field(j, key, what);
  if (!v.is_string()) throw SchemaError(std::string(what) + ": '" + key + "' must be a string");
  return v.get<std::string>();
}

int threat_field(const nlohmann::json& j, const char* key, const char* what) {
  const auto& v = field(j, key, what);
  if (!v.is_number_integer()) throw SchemaError(std::string(what) + ": '" + key + "' must be an integer");
  const auto id = v.get<long long>();
  if (id < 1 || id > 1000 || maestro::find_threat(static_cast<int>(id)) == nullptr) {
    throw SchemaError(std::string(what) + ": unknown threat id " + std::to_string(id));
  }
  return static_cast<int>(id);
}

}  // namespace

std::string_view kind_tag(ActionKind kind) {
  switch (kind) {
    case ActionKind::RaiseAlert: return "raise_alert";
    case ActionKind::BlockSource: return "block_source";
    case ActionKind::ExtendCapture: return "extend_capture";
    case ActionKind::RollbackHistory: return "rollback_history";
    case ActionKind::RateLimit: return "rate_limit";
  }
  return "raise_alert";
}

ActionKind kind_from_tag(std::string_view tag) {
  for (auto k : {ActionKind::RaiseAlert, ActionKind::BlockSource, ActionKind::ExtendCapture,
                 ActionKind::RollbackHistory, ActionKind::RateLimit}) {
    if (kind_tag(k) == tag) return k;
  }
  throw std::invalid_argument("unknown action kind: " + std::string(tag));
}

std::string_view policy_tag(Policy p) { return p == Policy::Auto ? "auto" : "needs_approval"; }

Policy policy_from_tag(std::string_view tag) {
  if (tag == "auto") return Policy::Auto;
  if (tag == "needs_approval") return Policy::NeedsApproval;
  throw std::invalid_argument("unknown policy: " + std::string(tag));
}

std::string_view status_tag(ActionStatus s) {
  switch (s) {
    case ActionStatus::Pending: return "pending";
    case ActionStatus::Approved: return "approved";
    case ActionStatus::Overridden: return "overridden";
    case ActionStatus::Executed: return "executed";
    case ActionStatus::Expired: return "expired";
  }
  return "pending";
}

ActionStatus status_from_tag(std::string_view tag) {
  for (auto s : {ActionStatus::Pending, ActionStatus::Approved, ActionStatus::Overridden, ActionStatus::Executed,
                 ActionStatus::Expired}) {
    if (status_tag(s) == tag) return s;
  }
  throw std::invalid_argument("unknown action status: " + std::string(tag));
}

Policy policy_for(ActionKind kind, double confidence, const ReasonerPolicy& policy) {
  const bool allow_listed = kind == ActionKind::RaiseAlert || kind == ActionKind::RateLimit;
  return allow_listed && confidence >= policy.auto_threshold ? Policy::Auto : Policy::NeedsApproval;
}

nlohmann::ordered_json to_json(const ActionProposal& p) {
  return {{"id", p.id},
          {"kind", kind_tag(p.kind)},
          {"params", nlohmann::ordered_json::parse(p.params.dump())},
          {"confidence", p.confidence},
          {"policy", policy_tag(p.policy)},
          {"status", status_tag(p.status)},
          {"threat_id", p.threat_id}};
}

nlohmann::ordered_json to_json(const Explanation& e) {
  nlohmann::ordered_json threats = nlohmann::ordered_json::array();
  for (const auto& t : e.suspected_threats) threats.push_back({{"id", t.id}, {"confidence", t.confidence}});
  nlohmann::ordered_json actions = nlohmann::ordered_json::array();
  for (const auto& a : e.recommended_actions) actions.push_back(to_json(a));
  return {{"summary", e.summary},
          {"suspected_threats", threats},
          {"evidence", e.evidence},
          {"recommended_actions", actions}};
}

ActionProposal proposal_from_json(const nlohmann::json& j, const ReasonerPolicy& policy) {
  constexpr const char* what = "action proposal";
  if (!j.is_object()) throw SchemaError("action proposal must be an object");
  ActionProposal p;
  p.id = string_field(j, "id", what);
  if (p.id.empty()) throw SchemaError("action proposal: empty id");
  try {
    p.kind = kind_from_tag(string_field(j, "kind", what));
    p.policy = policy_from_tag(string_field(j, "policy", what));
    p.status = status_from_tag(string_field(j, "status", what));
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("action proposal: ") + e.what());
  }
  p.params = field(j, "params", what);
  if (!p.params.is_object()) throw SchemaError("action proposal: params must be an object");
  p.confidence = checked_confidence(field(j, "confidence", what), what);
  p.threat_id = threat_field(j, "threat_id", what);
  if (p.status != ActionStatus::Pending) throw SchemaError("action proposal: new proposals must be pending");
  if (p.policy != policy_for(p.kind, p.confidence, policy)) {
    throw SchemaError("action proposal: policy '" + std::string(policy_tag(p.policy)) + "' not permitted for " +
                      std::string(kind_tag(p.kind)));
  }
  return p;
}

Explanation explanation_from_json(const nlohmann::json& j, const ReasonerPolicy& policy) {
  if (!j.is_object()) throw SchemaError("explanation must be an object");
  Explanation e;
  e.summary = string_field(j, "summary", "explanation");

  const auto& threats = field(j, "suspected_threats", "explanation");
  if (!threats.is_array()) throw SchemaError("explanation: suspected_threats must be an array");
  std::set<int> suspected;
  for (const auto& t : threats) {
    if (!t.is_object()) throw SchemaError("suspected threat must be an object");
    SuspectedThreat st{threat_field(t, "id", "suspected threat"),
                       checked_confidence(field(t, "confidence", "suspected threat"), "suspected threat")};
    if (!suspected.insert(st.id).second) throw SchemaError("explanation: duplicate suspected threat");
    e.suspected_threats.push_back(st);
  }

  const auto& evidence = field(j, "evidence", "explanation");
  if (!evidence.is_array()) throw SchemaError("explanation: evidence must be an array");
  for (const auto& ev : evidence) {
    if (!ev.is_string()) throw SchemaError("explanation: evidence items must be strings");
    e.evidence.push_back(ev.get<std::string>());
  }

  const auto& actions = field(j, "recommended_actions", "explanation");
  if (!actions.is_array()) throw SchemaError("explanation: recommended_actions must be an array");
  for (const auto& a : actions) {
    auto p = proposal_from_json(a, policy);
    if (!suspected.count(p.threat_id)) throw SchemaError("action proposal references an unsuspected threat");
    e.recommended_actions.push_back(std::move(p));
  }
  return e;
}

nlohmann::ordered_json to_json(const HistoryContext& h) {
  return {{"sealing_enabled", h.sealing_enabled},
          {"integrity", memory_guard::status_tag(h.integrity)},
          {"entries", h.entries},
          {"threat_index", h.threat_index},
          {"sha256", h.sha256_hex}};
}

HistoryContext history_context_from_json(const nlohmann::json& j) {
  HistoryContext h;
  h.sealing_enabled = j.at("sealing_enabled").get<bool>();
  const auto tag = j.at("integrity").get<std::string>();
  h.integrity = VerifyStatus::Tampered;
  for (auto s : {VerifyStatus::Valid, VerifyStatus::Tampered, VerifyStatus::MissingSeal, VerifyStatus::KeyMismatch}) {
    if (memory_guard::status_tag(s) == tag) h.integrity = s;
  }
  h.entries = j.at("entries").get<std::size_t>();
  h.threat_index = j.at("threat_index").get<double>();
  h.sha256_hex = j.at("sha256").get<std::string>();
  return h;
}

Explanation correlate(std::span<const AnomalyEvent> events, std::span<const telemetry::TelemetrySnapshot> snapshots,
                      const HistoryContext& history, const ReasonerPolicy& policy) {
  Explanation out;
  std::vector<std::string> summary;
  int next_id = 1;
  const auto propose = [&](ActionKind kind, nlohmann::json params, double confidence, int threat) {
    out.recommended_actions.push_back({"p" + std::to_string(next_id++), kind, std::move(params), confidence,
                                       policy_for(kind, confidence, policy), ActionStatus::Pending, threat});
  };

  const AnomalyEvent* strongest_flood = nullptr;
  const AnomalyEvent* strongest_scan = nullptr;
  for (const auto& e : events) {
    out.evidence.push_back("event:" + e.rule_id + "@" + fixed(e.t, 3));
    const auto** slot = is_flood(e.kind) ? &strongest_flood : (e.kind == RuleKind::PortScan ? &strongest_scan : nullptr);
    if (slot && (*slot == nullptr || e.observed / e.threshold > (*slot)->observed / (*slot)->threshold)) *slot = &e;
  }

  double interval_ratio = 0;
  bool degraded = false;
  if (snapshots.size() >= 2) {
    interval_ratio = snapshots.back().update_interval_s / telemetry::baseline_interval(snapshots);
    degraded = interval_ratio >= policy.degradation_threshold;
    if (degraded) {
      out.evidence.push_back("snapshot:" + std::to_string(snapshots.back().seq) + " interval " +
                             fixed(snapshots.back().update_interval_s) + "s");
    }
  }

  if (strongest_flood != nullptr) {
    const double conf = rate_confidence(*strongest_flood);
    out.suspected_threats.push_back({7, conf});
    const auto& src = strongest_flood->subject;
    std::string s = "resource exhaustion: " + strongest_flood->rule_id + " at " +
                    fixed(strongest_flood->observed / strongest_flood->threshold) + "x threshold";
    if (degraded) {
      s += ", telemetry interval " + fixed(interval_ratio) + "x baseline";
      propose(ActionKind::RateLimit, {{"scope", "ingress"}, {"subject", src}}, conf, 7);
      propose(ActionKind::BlockSource, {{"address", src}}, conf, 7);
    } else {
      propose(ActionKind::RaiseAlert, {{"threat_id", 7}, {"subject", src}}, conf, 7);
    }
    summary.push_back(std::move(s));
  } else if (degraded) {
    out.suspected_threats.push_back({7, 0.5});
    summary.push_back("telemetry interval " + fixed(interval_ratio) + "x baseline without a matching flood rule");
    propose(ActionKind::RaiseAlert, {{"threat_id", 7}}, 0.5, 7);
  }

  if (history.sealing_enabled && history.integrity != VerifyStatus::Valid) {
    out.evidence.push_back("history:" + std::string(memory_guard::status_tag(history.integrity)));
    if (history.integrity == VerifyStatus::Tampered) {
      out.suspected_threats.push_back({8, 1.0});
      summary.push_back("knowledge base poisoning: history seal does not verify (" +
                        std::to_string(history.entries) + " entries on disk)");
      propose(ActionKind::RollbackHistory, {{"integrity", "tampered"}}, 1.0, 8);
    } else {
      out.suspected_threats.push_back({8, 0.5});
      summary.push_back("history integrity unknown: " + std::string(memory_guard::status_tag(history.integrity)));
      propose(ActionKind::RaiseAlert, {{"threat_id", 8}}, 0.5, 8);
    }
  }

  if (strongest_scan != nullptr) {
    const double conf = rate_confidence(*strongest_scan);
    out.suspected_threats.push_back({1, conf});
    summary.push_back("port scan from " + strongest_scan->subject + " (" + fixed(strongest_scan->observed, 0) +
                      " ports)");
    propose(ActionKind::RaiseAlert, {{"threat_id", 1}, {"subject", strongest_scan->subject}}, conf, 1);
  }

  if (summary.empty()) {
    out.summary = "no anomalies";
  } else {
    for (std::size_t i = 0; i < summary.size(); ++i) out.summary += (i ? "; " : "") + summary[i];
  }
  return out;
}

nlohmann::ordered_json adapter_request(std::span<const AnomalyEvent> events,
                                       std::span<const telemetry::TelemetrySnapshot> snapshots,
                                       const HistoryContext& history) {
  nlohmann::ordered_json ev = nlohmann::ordered_json::array();
  for (const auto& e : events) ev.push_back(detection::to_json(e));
  nlohmann::ordered_json snaps = nlohmann::ordered_json::array();
  for (const auto& s : snapshots) snaps.push_back(telemetry::to_json(s));
  return {{"events", ev},
          {"snapshots", snaps},
          {"history_digest", to_json(history)},
          {"registry_version", maestro::kRegistryVersion}};
}

std::string MockAdapter::complete(const std::string& request_json) {
  const auto req = nlohmann::json::parse(request_json);
  std::vector<AnomalyEvent> events;
  for (const auto& e : req.at("events")) events.push_back(detection::event_from_json(e));
  std::vector<telemetry::TelemetrySnapshot> snaps;
  for (const auto& s : req.at("snapshots")) snaps.push_back(telemetry::snapshot_from_json(s));
  const auto history = history_context_from_json(req.at("history_digest"));
  return to_json(correlate(events, snaps, history, policy_)).dump();
}

HttpAdapter::HttpAdapter(std::string url, std::string token, std::chrono::milliseconds timeout)
    : url_(std::move(url)), token_(std::move(token)), timeout_(timeout) {}

std::optional<HttpAdapter> HttpAdapter::from_env(std::chrono::milliseconds timeout) {
  const char* url = std::getenv("AGENT_LLM_URL");
  if (url == nullptr || *url == '\0') return std::nullopt;
  const char* token = std::getenv("AGENT_LLM_TOKEN");
  return HttpAdapter(url, token ? token : "", timeout);
}

std::string HttpAdapter::complete(const std::string& request_json) {
  const auto scheme = url_.find("://");
  const auto path_at = url_.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  const auto base = path_at == std::string::npos ? url_ : url_.substr(0, path_at);
  const auto path = path_at == std::string::npos ? std::string("/") : url_.substr(path_at);

  httplib::Client client(base);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
  auto res = client.Post(path, headers, request_json, "application/json");
  if (!res) throw std::runtime_error("adapter transport error: " + httplib::to_string(res.error()));
  if (res->status != 200) throw std::runtime_error("adapter returned HTTP " + std::to_string(res->status));
  return res->body;
}

ReasoningEngine::ReasoningEngine(ReasonerPolicy policy, std::shared_ptr<ReasonerAdapter> adapter,
                                 std::chrono::milliseconds timeout, memory_guard::ForensicLog* log)
    : policy_(policy),
      adapter_(std::move(adapter)),
      timeout_(timeout),
      log_(log),
      in_flight_(std::make_shared<std::atomic<bool>>(false)) {}

ReasoningResult ReasoningEngine::explain(std::span<const AnomalyEvent> events,
                                         std::span<const telemetry::TelemetrySnapshot> snapshots,
                                         const HistoryContext& history) {
  ReasoningResult result;
  result.explanation = correlate(events, snapshots, history, policy_);
  if (!adapter_) return result;
  result.used_adapter = true;

  const auto fallback = [&](std::string reason) {
    result.fell_back = true;
    result.fallback_reason = reason;
    if (log_) {
      log_->append({{"event", "adapter_fallback"}, {"adapter", adapter_->name()}, {"reason", std::move(reason)}});
    }
    return result;
  };

  bool expected = false;
  if (!in_flight_->compare_exchange_strong(expected, true)) return fallback("adapter call already in flight");

  auto promise = std::make_shared<std::promise<std::string>>();
  auto future = promise->get_future();
  const auto request = adapter_request(events, snapshots, history).dump();
  std::thread([adapter = adapter_, promise, request, in_flight = in_flight_] {
    // Clear the flag before waking the caller so its next call is not refused.
    try {
      auto body = adapter->complete(request);
      in_flight->store(false);
      promise->set_value(std::move(body));
    } catch (...) {
      in_flight->store(false);
      promise->set_exception(std::current_exception());
    }
  }).detach();

  if (future.wait_for(timeout_) != std::future_status::ready) return fallback("adapter timed out");
  std::string body;
  try {
    body = future.get();
  } catch (const std::exception& e) {
    return fallback(std::string("adapter failed: ") + e.what());
  }
  const auto doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded()) return fallback("adapter returned malformed JSON");
  try {
    result.explanation = explanation_from_json(doc, policy_);
  } catch (const SchemaError& e) {
    return fallback(std::string("adapter response rejected: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    return fallback(std::string("adapter response rejected: ") + e.what());
  }
  return result;
}

}  // namespace netagent::reasoning
