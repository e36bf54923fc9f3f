#include "netagent/gateway.hpp"

#include "netagent/crypto.hpp"
#include "netagent/maestro.hpp"

namespace netagent::gateway {

using reasoning::ActionProposal;
using reasoning::ActionStatus;
using reasoning::Policy;

std::string_view type_tag(MessageType type) {
  switch (type) {
    case MessageType::Telemetry: return "telemetry";
    case MessageType::Alert: return "alert";
    case MessageType::Explanation: return "explanation";
    case MessageType::ActionProposal: return "action_proposal";
    case MessageType::ActionStatus: return "action_status";
    case MessageType::ScenarioStatus: return "scenario_status";
  }
  return "telemetry";
}

MessageType type_from_tag(std::string_view tag) {
  for (auto t : {MessageType::Telemetry, MessageType::Alert, MessageType::Explanation, MessageType::ActionProposal,
                 MessageType::ActionStatus, MessageType::ScenarioStatus}) {
    if (type_tag(t) == tag) return t;
  }
  throw std::invalid_argument("unknown message type: " + std::string(tag));
}

nlohmann::ordered_json to_json(const WireMessage& m) {
  return {{"type", type_tag(m.type)}, {"seq", m.seq}, {"payload", m.payload}};
}

WireMessage message_from_json(const nlohmann::json& j) {
  WireMessage m;
  m.type = type_from_tag(j.at("type").get<std::string>());
  m.seq = j.at("seq").get<std::uint64_t>();
  m.payload = nlohmann::ordered_json::parse(j.at("payload").dump());
  return m;
}

bool token_matches(std::string_view expected, std::string_view presented) {
  if (expected.empty()) return false;
  // Compare digests so the comparison time does not depend on length.
  return crypto::equal(crypto::sha256(expected), crypto::sha256(presented));
}

// --- Subscription -----------------------------------------------------------

bool Subscription::offer(MessageType type, const nlohmann::ordered_json& payload) {
  {
    std::lock_guard lock(mu_);
    if (closed_) return true;
    if (queue_.size() >= capacity_) return false;
    queue_.push_back({type, payload, next_seq_++});
  }
  cv_.notify_one();
  return true;
}

std::optional<WireMessage> Subscription::pop(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
  if (queue_.empty()) return std::nullopt;
  auto m = std::move(queue_.front());
  queue_.pop_front();
  return m;
}

std::vector<WireMessage> Subscription::drain() {
  std::lock_guard lock(mu_);
  std::vector<WireMessage> out(std::make_move_iterator(queue_.begin()), std::make_move_iterator(queue_.end()));
  queue_.clear();
  return out;
}

void Subscription::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool Subscription::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

// --- MessageHub -------------------------------------------------------------

MessageHub::MessageHub(std::string token, memory_guard::ForensicLog* log, std::size_t buffer)
    : token_(std::move(token)), log_(log), buffer_(buffer) {}

std::shared_ptr<Subscription> MessageHub::subscribe(std::string_view presented_token) {
  if (!token_matches(token_, presented_token)) return nullptr;
  std::lock_guard lock(mu_);
  auto sub = std::make_shared<Subscription>(next_id_++, buffer_);
  subs_.push_back(sub);
  return sub;
}

void MessageHub::unsubscribe(const std::shared_ptr<Subscription>& sub) {
  if (!sub) return;
  sub->close();
  std::lock_guard lock(mu_);
  std::erase(subs_, sub);
}

void MessageHub::publish(MessageType type, const nlohmann::ordered_json& payload) {
  std::lock_guard lock(mu_);
  for (auto it = subs_.begin(); it != subs_.end();) {
    auto& sub = *it;
    if (sub->closed()) {
      it = subs_.erase(it);
      continue;
    }
    if (!sub->offer(type, payload)) {
      sub->close();
      if (log_) {
        log_->append({{"event", "connection_dropped"},
                      {"connection", sub->id()},
                      {"reason", "slow consumer"},
                      {"buffer", buffer_},
                      {"undelivered_type", type_tag(type)}});
      }
      it = subs_.erase(it);
      continue;
    }
    ++it;
  }
}

std::size_t MessageHub::connections() const {
  std::lock_guard lock(mu_);
  return subs_.size();
}

// --- ProposalBook -----------------------------------------------------------

std::string_view verdict_tag(Verdict v) { return v == Verdict::Approve ? "approve" : "override"; }

ProposalBook::ProposalBook(MessageHub* hub, memory_guard::ForensicLog* log, Clock clock, double expiry_s)
    : hub_(hub), log_(log), clock_(std::move(clock)), expiry_s_(expiry_s) {}

void ProposalBook::set_executor(reasoning::ActionKind kind, Executor executor) {
  std::lock_guard lock(mu_);
  executors_[kind] = std::move(executor);
}

void ProposalBook::transition(Entry& e, ActionStatus to, const nlohmann::json& detail) {
  const std::string from(reasoning::status_tag(e.proposal.status));
  e.proposal.status = to;
  transitions_.push_back({e.proposal.id, from, std::string(reasoning::status_tag(to))});
  nlohmann::ordered_json record{{"event", "action_transition"},
                                {"id", e.proposal.id},
                                {"kind", reasoning::kind_tag(e.proposal.kind)},
                                {"from", from},
                                {"to", reasoning::status_tag(to)},
                                {"t", clock_()}};
  for (const auto& [k, v] : detail.items()) record[k] = v;
  if (log_) log_->append(record);
  if (hub_) {
    nlohmann::ordered_json status{{"id", e.proposal.id}, {"status", reasoning::status_tag(to)}, {"from", from}};
    for (const auto& [k, v] : detail.items()) status[k] = v;
    hub_->publish(MessageType::ActionStatus, status);
  }
}

void ProposalBook::execute(Entry& e, const std::string& by) {
  transition(e, ActionStatus::Approved, {{"by", by}});
  nlohmann::json effect = {{"applied", false}};
  if (const auto it = executors_.find(e.proposal.kind); it != executors_.end()) {
    try {
      effect = it->second(e.proposal);
    } catch (const std::exception& ex) {
      if (log_) {
        log_->append({{"event", "action_execution_failed"}, {"id", e.proposal.id}, {"error", ex.what()}});
      }
      return;
    }
  }
  e.effect = effect;
  transition(e, ActionStatus::Executed, {{"effect", effect}});
}

ActionProposal ProposalBook::submit(ActionProposal proposal) {
  std::lock_guard lock(mu_);
  expire_locked();
  char id[16];
  std::snprintf(id, sizeof id, "act-%06llu", static_cast<unsigned long long>(next_id_++));
  proposal.id = id;
  proposal.status = ActionStatus::Pending;
  // The book never auto-runs a destructive kind, whatever the caller claims.
  if (reasoning::policy_for(proposal.kind, 1.0) != Policy::Auto) proposal.policy = Policy::NeedsApproval;
  auto& e = entries_[proposal.id];
  e.proposal = proposal;
  e.created_at = clock_();
  transitions_.push_back({e.proposal.id, "", "pending"});
  if (log_) {
    log_->append({{"event", "action_transition"},
                  {"id", e.proposal.id},
                  {"kind", reasoning::kind_tag(e.proposal.kind)},
                  {"from", ""},
                  {"to", "pending"},
                  {"t", e.created_at},
                  {"proposal", reasoning::to_json(e.proposal)}});
  }
  if (hub_) hub_->publish(MessageType::ActionProposal, reasoning::to_json(e.proposal));
  if (e.proposal.policy == Policy::Auto) execute(e, "policy:auto");
  return e.proposal;
}

ActionProposal ProposalBook::decide(const OperatorDecision& decision) {
  std::lock_guard lock(mu_);
  expire_locked();
  const auto it = entries_.find(decision.action_id);
  if (it == entries_.end()) {
    throw DecisionError(DecisionError::Code::NotFound, "unknown action id: " + decision.action_id);
  }
  auto& e = it->second;
  if (e.proposal.status == ActionStatus::Expired) {
    throw DecisionError(DecisionError::Code::Expired, decision.action_id + " expired before a decision");
  }
  if (e.proposal.status != ActionStatus::Pending) {
    throw DecisionError(DecisionError::Code::Conflict,
                        decision.action_id + " is already " + std::string(reasoning::status_tag(e.proposal.status)));
  }
  if (decision.verdict == Verdict::Override) {
    transition(e, ActionStatus::Overridden, {{"by", decision.operator_name}, {"decided_at", decision.t}});
  } else {
    execute(e, decision.operator_name);
  }
  return e.proposal;
}

void ProposalBook::expire_locked() {
  const double now = clock_();
  for (auto& [id, e] : entries_) {
    if (e.proposal.status == ActionStatus::Pending && now - e.created_at >= expiry_s_) {
      transition(e, ActionStatus::Expired, {{"by", "policy:expiry"}});
    }
  }
}

void ProposalBook::expire_due() {
  std::lock_guard lock(mu_);
  expire_locked();
}

std::vector<ActionProposal> ProposalBook::list(std::optional<ActionStatus> status) {
  std::lock_guard lock(mu_);
  expire_locked();
  std::vector<ActionProposal> out;
  for (const auto& [id, e] : entries_) {
    if (!status || e.proposal.status == *status) out.push_back(e.proposal);
  }
  return out;
}

std::optional<ActionProposal> ProposalBook::get(const std::string& id) {
  std::lock_guard lock(mu_);
  expire_locked();
  const auto it = entries_.find(id);
  if (it == entries_.end()) return std::nullopt;
  return it->second.proposal;
}

std::vector<ProposalBook::Transition> ProposalBook::transitions() const {
  std::lock_guard lock(mu_);
  return transitions_;
}

// --- ApiRouter --------------------------------------------------------------

namespace {

HttpResponse json_response(int status, const nlohmann::ordered_json& body) { return {status, body.dump()}; }

HttpResponse error(int status, std::string message) {
  return json_response(status, {{"error", std::move(message)}, {"status", status}});
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos < path.size()) {
    const auto next = path.find('/', pos);
    const auto end = next == std::string::npos ? path.size() : next;
    if (end > pos) parts.push_back(path.substr(pos, end - pos));
    pos = end + 1;
  }
  return parts;
}

std::map<std::string, std::string> parse_query(const std::string& query) {
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  while (!query.empty()) {
    const auto amp = query.find('&', pos);
    const auto part = query.substr(pos, amp == std::string::npos ? std::string::npos : amp - pos);
    const auto eq = part.find('=');
    if (!part.empty()) out[part.substr(0, eq)] = eq == std::string::npos ? "" : part.substr(eq + 1);
    if (amp == std::string::npos) break;
    pos = amp + 1;
  }
  return out;
}

}  // namespace

ApiRouter::ApiRouter(RouterContext ctx) : ctx_(std::move(ctx)) {}

HttpResponse ApiRouter::handle(const HttpRequest& req) {
  if (!token_matches(ctx_.token, req.bearer_token)) return error(401, "missing or invalid bearer token");

  const auto qpos = req.target.find('?');
  const auto path = req.target.substr(0, qpos);
  const auto query = parse_query(qpos == std::string::npos ? "" : req.target.substr(qpos + 1));
  const auto parts = split_path(path);
  const bool get = req.method == "GET";
  const bool post = req.method == "POST";

  try {
    if (get && parts == std::vector<std::string>{"health"}) {
      return json_response(200, {{"status", "ok"}, {"connections", ctx_.hub ? ctx_.hub->connections() : 0}});
    }
    if (get && parts == std::vector<std::string>{"risk-matrix"}) {
      return {200, maestro::emit_report(maestro::build_risk_matrix(maestro::builtin_registry()),
                                        maestro::ReportFormat::Json)};
    }
    if (get && parts == std::vector<std::string>{"history"}) {
      if (!ctx_.history_view) return error(404, "no history configured");
      return json_response(200, ctx_.history_view());
    }
    if (get && parts == std::vector<std::string>{"actions"}) {
      if (!ctx_.book) return error(404, "no proposal book");
      std::optional<ActionStatus> status;
      if (const auto it = query.find("status"); it != query.end() && !it->second.empty()) {
        try {
          status = reasoning::status_from_tag(it->second);
        } catch (const std::invalid_argument& e) {
          return error(422, e.what());
        }
      }
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (const auto& p : ctx_.book->list(status)) arr.push_back(reasoning::to_json(p));
      return json_response(200, {{"actions", arr}});
    }
    if (post && parts.size() == 3 && parts[0] == "actions") {
      if (parts[2] == "approve") return decide(parts[1], Verdict::Approve, req.body);
      if (parts[2] == "override") return decide(parts[1], Verdict::Override, req.body);
    }
    if (post && parts.size() == 3 && parts[0] == "scenarios" && parts[2] == "run") {
      return run_scenario(parts[1], req.body);
    }
    if (get && parts.size() == 3 && parts[0] == "scenarios" && parts[2] == "report") {
      std::lock_guard lock(reports_mu_);
      const auto it = reports_.find(parts[1]);
      if (it == reports_.end()) return error(404, "no report for scenario '" + parts[1] + "'");
      return json_response(200, it->second);
    }
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
  return error(404, "no route for " + req.method + " " + path);
}

HttpResponse ApiRouter::decide(const std::string& id, Verdict verdict, const std::string& body) {
  if (!ctx_.book) return error(404, "no proposal book");
  OperatorDecision d{id, verdict, "operator", memory_guard::utc_now_iso()};
  if (!body.empty()) {
    const auto doc = nlohmann::json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) return error(422, "decision body must be a JSON object");
    if (const auto it = doc.find("operator"); it != doc.end()) {
      if (!it->is_string() || it->get<std::string>().empty()) return error(422, "operator must be a non-empty string");
      d.operator_name = it->get<std::string>();
    }
    if (const auto it = doc.find("t"); it != doc.end()) {
      if (!it->is_string()) return error(422, "t must be a string");
      d.t = it->get<std::string>();
    }
  }
  try {
    return json_response(200, reasoning::to_json(ctx_.book->decide(d)));
  } catch (const DecisionError& e) {
    return error(e.code() == DecisionError::Code::NotFound ? 404 : 409, e.what());
  }
}

HttpResponse ApiRouter::run_scenario(const std::string& id, const std::string& body) {
  if (id != "tc1" && id != "tc2") return error(404, "unknown scenario '" + id + "'");
  if (!ctx_.scenarios) return error(404, "scenarios are not enabled");
  bool defense = false;
  if (!body.empty()) {
    const auto doc = nlohmann::json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) return error(422, "scenario body must be a JSON object");
    if (const auto it = doc.find("defense"); it != doc.end()) {
      if (it->is_boolean()) {
        defense = it->get<bool>();
      } else if (it->is_string() && (*it == "on" || *it == "off")) {
        defense = *it == "on";
      } else {
        return error(422, "defense must be \"on\", \"off\" or a boolean");
      }
    }
  }

  std::unique_lock lock(scenario_mu_, std::try_to_lock);
  if (!lock.owns_lock()) return error(409, "a scenario is already running");
  const auto arm = defense ? "on" : "off";
  if (ctx_.hub) ctx_.hub->publish(MessageType::ScenarioStatus, {{"scenario", id}, {"defense_arm", arm}, {"state", "running"}});
  const auto failed = [&](int status, const char* what) {
    if (ctx_.hub) {
      ctx_.hub->publish(MessageType::ScenarioStatus,
                        {{"scenario", id}, {"defense_arm", arm}, {"state", "failed"}, {"error", what}});
    }
    return error(status, what);
  };
  nlohmann::ordered_json report;
  try {
    report = ctx_.scenarios(id, defense);
  } catch (const std::invalid_argument& e) {
    return failed(422, e.what());
  } catch (const std::exception& e) {
    return failed(500, e.what());
  }
  {
    std::lock_guard rlock(reports_mu_);
    reports_[id] = report;
  }
  if (ctx_.hub) {
    ctx_.hub->publish(MessageType::ScenarioStatus, {{"scenario", id},
                                                    {"defense_arm", arm},
                                                    {"state", "completed"},
                                                    {"validated", report.value("validated", false)}});
  }
  return json_response(200, report);
}

}  // namespace netagent::gateway
