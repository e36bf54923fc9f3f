#include "netagent/agent.hpp"

#include <algorithm>
#include <cmath>

#include "netagent/crypto.hpp"
#include "netagent/errors.hpp"

namespace netagent::agent {

using reasoning::ActionKind;

namespace {

std::string signature(const reasoning::Explanation& e) {
  std::string sig;
  for (const auto& t : e.suspected_threats) sig += "t" + std::to_string(t.id) + ";";
  for (const auto& a : e.recommended_actions) sig += std::string(reasoning::kind_tag(a.kind)) + ";";
  return sig;
}

}  // namespace

Agent::Agent(AgentConfig config, gateway::MessageHub* hub, memory_guard::ForensicLog* log,
             std::shared_ptr<reasoning::ReasoningEngine> engine, Micros start_us)
    : config_(std::move(config)),
      hub_(hub),
      log_(log),
      engine_(std::move(engine)),
      now_us_(start_us),
      monitor_(config_.telemetry, start_us),
      base_us_(std::llround(config_.telemetry.base_interval_s * 1e6)),
      next_due_us_(start_us + base_us_),
      next_tick_us_(start_us + config_.detection_tick_us) {
  detection::validate(config_.rules);
  if (config_.detection_tick_us <= 0 || config_.buffer_us <= 0) {
    throw std::invalid_argument("detection tick and buffer must be positive");
  }
  book_ = std::make_unique<gateway::ProposalBook>(
      hub_, log_, [this] { return static_cast<double>(now_us_.load()) / 1e6; }, config_.proposal_expiry_s);
  install_executors();
}

void Agent::install_executors() {
  book_->set_executor(ActionKind::RateLimit, [this](const reasoning::ActionProposal&) {
    const double limit = config_.limiter_fraction * config_.telemetry.service_rate_pps;
    std::lock_guard lock(admission_mu_);
    limit_pps_ = limit;
    tokens_ = std::max(1.0, limit * 0.05);
    tokens_at_ = now_us_.load();
    return nlohmann::json{{"limit_pps", limit}};
  });
  book_->set_executor(ActionKind::BlockSource, [this](const reasoning::ActionProposal& p) {
    const auto addr = packet::Ipv4::parse(p.params.at("address").get<std::string>());
    std::lock_guard lock(admission_mu_);
    blocked_.insert(addr.value);
    return nlohmann::json{{"blocked", addr.str()}};
  });
  book_->set_executor(ActionKind::RollbackHistory, [this](const reasoning::ActionProposal&) {
    if (config_.history_path.empty() || !config_.seal_key || config_.snapshots == nullptr) {
      throw std::runtime_error("rollback needs a sealed history with a snapshot store");
    }
    const auto restored = memory_guard::rollback(config_.history_path, *config_.snapshots, *config_.seal_key, log_);
    return nlohmann::json{{"restored_entries", restored}, {"path", config_.history_path.string()}};
  });
  book_->set_executor(ActionKind::RaiseAlert, [](const reasoning::ActionProposal& p) {
    return nlohmann::json{{"alerted", true}, {"threat_id", p.threat_id}};
  });
}

bool Agent::admit(const packet::PacketRecord& pkt) {
  std::lock_guard lock(admission_mu_);
  if (blocked_.count(pkt.src_addr.value)) return false;
  if (!limit_pps_) return true;
  const double burst = std::max(1.0, *limit_pps_ * 0.05);
  const auto t = pkt.micros();
  if (t > tokens_at_) {
    tokens_ = std::min(burst, tokens_ + static_cast<double>(t - tokens_at_) * *limit_pps_ / 1e6);
    tokens_at_ = t;
  }
  if (tokens_ < 1.0) return false;
  tokens_ -= 1.0;
  return true;
}

bool Agent::offer(const packet::PacketRecord& pkt) {
  std::lock_guard lock(mu_);
  step_to(pkt.micros());
  // A packet stamped before the agent's clock (wall-clock feeds) counts as
  // arriving now, which keeps the detection buffer ordered.
  auto p = pkt;
  if (p.micros() < now_us_.load()) p.set_micros(now_us_.load());
  ++offered_;
  const bool admitted = admit(p);
  if (!admitted) ++dropped_;
  monitor_.ingest(p, admitted);
  buffer_.push_back(p);
  return true;
}

void Agent::advance_to(Micros t_us) {
  std::lock_guard lock(mu_);
  step_to(t_us);
}

void Agent::step_to(Micros t_us) {
  for (;;) {
    const Micros snap_at = pending_ ? pending_->publish_us : next_due_us_;
    const Micros next = std::min(snap_at, next_tick_us_);
    if (next > t_us) break;
    now_us_ = std::max(now_us_.load(), next);
    if (snap_at <= next_tick_us_) {
      if (pending_) {
        snapshots_.push_back(pending_->snapshot);
        if (hub_) hub_->publish(gateway::MessageType::Telemetry, telemetry::to_json(pending_->snapshot));
        next_due_us_ = pending_->publish_us + base_us_;
        pending_.reset();
      } else {
        // The snapshot is computed when due and becomes visible only after
        // the backlog it reports has been worked through.
        auto snap = monitor_.next_snapshot(next_due_us_);
        const Micros publish_us = std::max(next_due_us_, static_cast<Micros>(std::llround(snap.t * 1e6)));
        pending_ = Pending{std::move(snap), publish_us};
      }
    } else {
      detection_tick(next_tick_us_);
      next_tick_us_ += config_.detection_tick_us;
    }
  }
  monitor_.advance_to(t_us);
  now_us_ = std::max(now_us_.load(), t_us);
}

void Agent::detection_tick(Micros t_us) {
  while (!buffer_.empty() && buffer_.front().micros() < t_us - config_.buffer_us) buffer_.pop_front();
  const std::vector<packet::PacketRecord> window(buffer_.begin(), buffer_.end());
  tick_events_ = detection::evaluate({window, t_us}, config_.rules);
  for (const auto& e : tick_events_) {
    events_.push_back(e);
    if (hub_) hub_->publish(gateway::MessageType::Alert, detection::to_json(e));
  }
  review_locked();
  book_->expire_due();
}

reasoning::Explanation Agent::review() {
  std::lock_guard lock(mu_);
  return review_locked();
}

reasoning::Explanation Agent::review_locked() {
  const auto history = history_context();
  reasoning::Explanation e;
  if (engine_) {
    e = engine_->explain(tick_events_, snapshots_, history).explanation;
  } else {
    e = reasoning::correlate(tick_events_, snapshots_, history, config_.policy);
  }
  const auto sig = signature(e);
  if (sig != last_signature_) {
    last_signature_ = sig;
    explanations_.push_back(e);
    if (hub_) {
      auto payload = reasoning::to_json(e);
      payload["t"] = static_cast<double>(now_us_.load()) / 1e6;
      hub_->publish(gateway::MessageType::Explanation, payload);
    }
  }
  if (config_.defense) {
    for (const auto& a : e.recommended_actions) {
      const auto key = std::string(reasoning::kind_tag(a.kind)) + "|" + std::to_string(a.threat_id) + "|" +
                       a.params.dump();
      if (submitted_.insert(key).second) book_->submit(a);
    }
  }
  return e;
}

reasoning::HistoryContext Agent::history_context() const {
  reasoning::HistoryContext ctx;
  if (config_.history_path.empty()) return ctx;
  ctx.sealing_enabled = config_.seal_key.has_value();
  if (!std::filesystem::exists(config_.history_path)) return ctx;
  const auto bytes = read_file(config_.history_path);
  ctx.sha256_hex = crypto::to_hex(crypto::sha256(bytes));
  try {
    const auto entries = tuner::parse_history(bytes);
    ctx.entries = entries.size();
    ctx.threat_index = tuner::threat_index(entries, config_.tuner.recency_window);
  } catch (const tuner::HistoryError&) {
    // Unparseable history still gets an integrity verdict below.
  }
  if (ctx.sealing_enabled) ctx.integrity = memory_guard::verify(config_.history_path, *config_.seal_key).status;
  return ctx;
}

tuner::TuningDecision Agent::tune() const {
  return tuner::decide_capture_duration(tuner::load_history(config_.history_path), config_.tuner);
}

std::vector<telemetry::TelemetrySnapshot> Agent::snapshots() const {
  std::lock_guard lock(mu_);
  return snapshots_;
}

std::vector<detection::AnomalyEvent> Agent::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::vector<reasoning::Explanation> Agent::explanations() const {
  std::lock_guard lock(mu_);
  return explanations_;
}

std::uint64_t Agent::offered() const {
  std::lock_guard lock(mu_);
  return offered_;
}

std::uint64_t Agent::dropped() const {
  std::lock_guard lock(mu_);
  return dropped_;
}

double Agent::queue_integral() const {
  std::lock_guard lock(mu_);
  return monitor_.queue_integral();
}

std::optional<double> Agent::rate_limit_pps() const {
  std::lock_guard lock(admission_mu_);
  return limit_pps_;
}

bool Agent::is_blocked(packet::Ipv4 addr) const {
  std::lock_guard lock(admission_mu_);
  return blocked_.count(addr.value) > 0;
}

}  // namespace netagent::agent
