#pragma once

// Rule-based reasoning core and the validated adapter boundary for an
// external language model.

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "netagent/detection.hpp"
#include "netagent/memory_guard.hpp"
#include "netagent/telemetry.hpp"

namespace netagent::reasoning {

enum class ActionKind { RaiseAlert, BlockSource, ExtendCapture, RollbackHistory, RateLimit };
enum class Policy { Auto, NeedsApproval };
enum class ActionStatus { Pending, Approved, Overridden, Executed, Expired };

std::string_view kind_tag(ActionKind kind);
ActionKind kind_from_tag(std::string_view tag);
std::string_view policy_tag(Policy policy);
Policy policy_from_tag(std::string_view tag);
std::string_view status_tag(ActionStatus status);
ActionStatus status_from_tag(std::string_view tag);

struct ReasonerPolicy {
  double auto_threshold = 0.9;
  /// Latest update interval over the baseline at which telemetry counts as
  /// degraded.
  double degradation_threshold = 1.25;
};

/// Auto only for raise_alert and rate_limit at or above the auto threshold.
Policy policy_for(ActionKind kind, double confidence, const ReasonerPolicy& policy = {});

struct ActionProposal {
  std::string id;
  ActionKind kind = ActionKind::RaiseAlert;
  nlohmann::json params = nlohmann::json::object();
  double confidence = 0;
  Policy policy = Policy::NeedsApproval;
  ActionStatus status = ActionStatus::Pending;
  int threat_id = 0;

  bool operator==(const ActionProposal&) const = default;
};

struct SuspectedThreat {
  int id = 0;
  double confidence = 0;
  bool operator==(const SuspectedThreat&) const = default;
};

struct Explanation {
  std::string summary;
  std::vector<SuspectedThreat> suspected_threats;
  std::vector<std::string> evidence;
  std::vector<ActionProposal> recommended_actions;

  bool operator==(const Explanation&) const = default;
  bool quiet() const { return suspected_threats.empty(); }
};

nlohmann::ordered_json to_json(const ActionProposal& p);
nlohmann::ordered_json to_json(const Explanation& e);

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Strict decoding: unknown threat ids, confidences outside [0,1], unknown
/// kinds, non-pending proposals or a policy that disagrees with
/// policy_for() are all SchemaError.
ActionProposal proposal_from_json(const nlohmann::json& j, const ReasonerPolicy& policy = {});
Explanation explanation_from_json(const nlohmann::json& j, const ReasonerPolicy& policy = {});

/// State of the persisted history as seen by the reasoner.
struct HistoryContext {
  bool sealing_enabled = false;
  memory_guard::VerifyStatus integrity = memory_guard::VerifyStatus::MissingSeal;
  std::size_t entries = 0;
  double threat_index = 0;
  std::string sha256_hex;
};

nlohmann::ordered_json to_json(const HistoryContext& h);
HistoryContext history_context_from_json(const nlohmann::json& j);

/// Deterministic rule table:
///  - flood events plus degraded telemetry: threat 7, confidence
///    min(1, observed/threshold / 2); rate_limit and block_source;
///  - flood events alone: threat 7, raise_alert only;
///  - degraded telemetry alone: threat 7 at 0.5, raise_alert;
///  - tampered history (sealing on): threat 8 at 1.0, rollback_history;
///    missing seal or key mismatch: threat 8 at 0.5, raise_alert;
///  - port scan: threat 1, confidence as for floods; raise_alert.
Explanation correlate(std::span<const detection::AnomalyEvent> events,
                      std::span<const telemetry::TelemetrySnapshot> snapshots, const HistoryContext& history,
                      const ReasonerPolicy& policy = {});

/// Adapter request: { "events", "snapshots", "history_digest", "registry_version" }.
nlohmann::ordered_json adapter_request(std::span<const detection::AnomalyEvent> events,
                                       std::span<const telemetry::TelemetrySnapshot> snapshots,
                                       const HistoryContext& history);

/// Raw transport to an external reasoner. Returns the response body.
class ReasonerAdapter {
 public:
  virtual ~ReasonerAdapter() = default;
  virtual std::string name() const = 0;
  virtual std::string complete(const std::string& request_json) = 0;
};

/// Decodes the request and answers with the rule-based core.
class MockAdapter final : public ReasonerAdapter {
 public:
  explicit MockAdapter(ReasonerPolicy policy = {}) : policy_(policy) {}
  std::string name() const override { return "mock"; }
  std::string complete(const std::string& request_json) override;

 private:
  ReasonerPolicy policy_;
};

class FunctionAdapter final : public ReasonerAdapter {
 public:
  explicit FunctionAdapter(std::function<std::string(const std::string&)> fn, std::string name = "function")
      : fn_(std::move(fn)), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  std::string complete(const std::string& request_json) override { return fn_(request_json); }

 private:
  std::function<std::string(const std::string&)> fn_;
  std::string name_;
};

/// POSTs the request to `url` with a bearer token.
class HttpAdapter final : public ReasonerAdapter {
 public:
  HttpAdapter(std::string url, std::string token, std::chrono::milliseconds timeout);
  /// AGENT_LLM_URL / AGENT_LLM_TOKEN; nullopt when no URL is configured.
  static std::optional<HttpAdapter> from_env(std::chrono::milliseconds timeout);
  std::string name() const override { return "http:" + url_; }
  std::string complete(const std::string& request_json) override;

 private:
  std::string url_;
  std::string token_;
  std::chrono::milliseconds timeout_;
};

struct ReasoningResult {
  Explanation explanation;
  bool used_adapter = false;
  bool fell_back = false;
  std::string fallback_reason;
};

/// Wraps the rule-based core with an optional adapter. Adapter output that
/// fails validation, throws, or exceeds the timeout is replaced by the
/// rule-based explanation, and the fallback is written to the forensic log.
class ReasoningEngine {
 public:
  explicit ReasoningEngine(ReasonerPolicy policy = {}, std::shared_ptr<ReasonerAdapter> adapter = nullptr,
                           std::chrono::milliseconds timeout = std::chrono::seconds(10),
                           memory_guard::ForensicLog* log = nullptr);

  ReasoningResult explain(std::span<const detection::AnomalyEvent> events,
                          std::span<const telemetry::TelemetrySnapshot> snapshots,
                          const HistoryContext& history);

  const ReasonerPolicy& policy() const { return policy_; }

 private:
  ReasonerPolicy policy_;
  std::shared_ptr<ReasonerAdapter> adapter_;
  std::chrono::milliseconds timeout_;
  memory_guard::ForensicLog* log_;
  std::shared_ptr<std::atomic<bool>> in_flight_;
};

}  // namespace netagent::reasoning
