#pragma once

// Control layer: per-connection message fan-out, the approve/override
// workflow for action proposals, and the HTTP route table. Transport lives
// in server.hpp; everything here is testable in-process.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "netagent/memory_guard.hpp"
#include "netagent/reasoning.hpp"

namespace netagent::gateway {

inline constexpr const char* kTokenEnv = "AGENT_TOKEN";
inline constexpr const char* kBindEnv = "AGENT_BIND_ADDR";

enum class MessageType { Telemetry, Alert, Explanation, ActionProposal, ActionStatus, ScenarioStatus };
std::string_view type_tag(MessageType type);
MessageType type_from_tag(std::string_view tag);

struct WireMessage {
  MessageType type = MessageType::Telemetry;
  nlohmann::ordered_json payload;
  std::uint64_t seq = 0;
};

nlohmann::ordered_json to_json(const WireMessage& m);
WireMessage message_from_json(const nlohmann::json& j);

/// Constant-time comparison; an empty expected token refuses everything.
bool token_matches(std::string_view expected, std::string_view presented);

class MessageHub;

/// One connection's bounded queue. Sequence numbers start at 1.
class Subscription {
 public:
  Subscription(std::uint64_t id, std::size_t capacity) : id_(id), capacity_(capacity) {}

  /// Waits up to `timeout` for the next message; nullopt on timeout or once
  /// closed and drained.
  std::optional<WireMessage> pop(std::chrono::milliseconds timeout);
  std::vector<WireMessage> drain();
  void close();
  bool closed() const;
  std::uint64_t id() const { return id_; }

 private:
  friend class MessageHub;
  /// False when the buffer is full.
  bool offer(MessageType type, const nlohmann::ordered_json& payload);

  const std::uint64_t id_;
  const std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<WireMessage> queue_;
  std::uint64_t next_seq_ = 1;
  bool closed_ = false;
};

class MessageHub {
 public:
  explicit MessageHub(std::string token, memory_guard::ForensicLog* log = nullptr, std::size_t buffer = 1000);

  /// nullptr when the token does not match; no message is ever queued for a
  /// refused connection.
  std::shared_ptr<Subscription> subscribe(std::string_view presented_token);
  void unsubscribe(const std::shared_ptr<Subscription>& sub);

  /// Fans out to every open subscription under one lock, so all
  /// connections see messages in the same order. A subscriber whose buffer
  /// is full is closed and the drop is written to the forensic log.
  void publish(MessageType type, const nlohmann::ordered_json& payload);

  std::size_t connections() const;
  const std::string& token() const { return token_; }

 private:
  std::string token_;
  memory_guard::ForensicLog* log_;
  std::size_t buffer_;
  mutable std::mutex mu_;
  std::uint64_t next_id_ = 1;
  std::vector<std::shared_ptr<Subscription>> subs_;
};

enum class Verdict { Approve, Override };
std::string_view verdict_tag(Verdict v);

struct OperatorDecision {
  std::string action_id;
  Verdict verdict = Verdict::Approve;
  std::string operator_name = "operator";
  std::string t;
};

class DecisionError : public std::runtime_error {
 public:
  enum class Code { NotFound, Conflict, Expired };
  DecisionError(Code code, std::string what) : std::runtime_error(std::move(what)), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

/// Applies an approved action. Returns a JSON description of the effect;
/// throwing leaves the proposal approved but unexecuted.
using Executor = std::function<nlohmann::json(const reasoning::ActionProposal&)>;
/// Seconds, simulated or wall.
using Clock = std::function<double()>;

/// The single owner of proposal state. Every transition is written to the
/// forensic log and broadcast as an action_status message.
class ProposalBook {
 public:
  ProposalBook(MessageHub* hub, memory_guard::ForensicLog* log, Clock clock, double expiry_s = 120.0);

  void set_executor(reasoning::ActionKind kind, Executor executor);

  /// Assigns an id (act-000001, ...) and records the proposal as pending.
  /// Auto-policy proposals are executed straight away.
  reasoning::ActionProposal submit(reasoning::ActionProposal proposal);

  reasoning::ActionProposal decide(const OperatorDecision& decision);

  /// Marks overdue pending proposals expired (auto-deny).
  void expire_due();

  std::vector<reasoning::ActionProposal> list(std::optional<reasoning::ActionStatus> status = std::nullopt);
  std::optional<reasoning::ActionProposal> get(const std::string& id);

  /// (id, from, to) triples in the order they happened.
  struct Transition {
    std::string id;
    std::string from;
    std::string to;
  };
  std::vector<Transition> transitions() const;

 private:
  struct Entry {
    reasoning::ActionProposal proposal;
    double created_at = 0;
    nlohmann::json effect;
  };

  void transition(Entry& e, reasoning::ActionStatus to, const nlohmann::json& detail);
  void execute(Entry& e, const std::string& by);
  void expire_locked();

  MessageHub* hub_;
  memory_guard::ForensicLog* log_;
  Clock clock_;
  double expiry_s_;
  mutable std::mutex mu_;
  std::map<reasoning::ActionKind, Executor> executors_;
  std::map<std::string, Entry> entries_;
  std::uint64_t next_id_ = 1;
  std::vector<Transition> transitions_;
};

struct HttpRequest {
  std::string method;
  std::string target;  // path plus optional query
  std::string bearer_token;
  std::string body;
};

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Runs a scenario and returns its report JSON. Throws std::invalid_argument
/// for a bad request.
using ScenarioRunner = std::function<nlohmann::ordered_json(const std::string& scenario, bool defense)>;

struct RouterContext {
  std::string token;
  ProposalBook* book = nullptr;
  MessageHub* hub = nullptr;
  /// Body for GET /history.
  std::function<nlohmann::ordered_json()> history_view;
  ScenarioRunner scenarios;
};

/// GET /health, /risk-matrix, /history, /actions?status=,
/// /scenarios/{id}/report; POST /actions/{id}/approve|override,
/// /scenarios/{tc1|tc2}/run. 401 bad token, 404 unknown route or id,
/// 409 invalid transition or busy, 422 bad body.
class ApiRouter {
 public:
  explicit ApiRouter(RouterContext ctx);
  HttpResponse handle(const HttpRequest& req);

 private:
  HttpResponse decide(const std::string& id, Verdict verdict, const std::string& body);
  HttpResponse run_scenario(const std::string& id, const std::string& body);

  RouterContext ctx_;
  std::mutex scenario_mu_;
  std::mutex reports_mu_;
  std::map<std::string, nlohmann::ordered_json> reports_;
};

}  // namespace netagent::gateway
