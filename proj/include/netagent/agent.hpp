#pragma once

// The monitoring loop: admission (block list and ingress limiter),
// telemetry, once-a-second detection over a trailing buffer, reasoning, and
// publication to the gateway. Driven by packet timestamps, so the same code
// runs against a simulated clock or wall time.

#include <atomic>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "netagent/detection.hpp"
#include "netagent/gateway.hpp"
#include "netagent/memory_guard.hpp"
#include "netagent/packet.hpp"
#include "netagent/reasoning.hpp"
#include "netagent/telemetry.hpp"
#include "netagent/tuner.hpp"

namespace netagent::agent {

using packet::Micros;

struct AgentConfig {
  telemetry::TelemetryConfig telemetry;
  std::vector<detection::DetectionRule> rules = detection::default_rules();
  reasoning::ReasonerPolicy policy;
  /// Off: the agent still detects and explains but never submits proposals.
  bool defense = true;
  /// Ingress limit installed by rate_limit, as a share of the service rate.
  double limiter_fraction = 0.8;
  Micros detection_tick_us = 1'000'000;
  Micros buffer_us = 10'000'000;
  double proposal_expiry_s = 120.0;

  std::filesystem::path history_path;
  /// Sealing is enabled when a key is present.
  std::optional<memory_guard::SealKey> seal_key;
  memory_guard::SnapshotStore* snapshots = nullptr;
  tuner::TunerConfig tuner;
};

class Agent {
 public:
  Agent(AgentConfig config, gateway::MessageHub* hub, memory_guard::ForensicLog* log,
        std::shared_ptr<reasoning::ReasoningEngine> engine = nullptr, Micros start_us = 0);

  /// PacketSink-compatible: runs everything scheduled before the packet,
  /// then admits or drops it. Packets stamped earlier than the agent clock
  /// are treated as arriving now.
  bool offer(const packet::PacketRecord& pkt);

  /// Runs snapshot emission and detection ticks up to and including `t_us`.
  void advance_to(Micros t_us);

  /// Correlates the latest tick's events, the published snapshots and the
  /// history state; publishes the explanation when its content changes and
  /// submits new proposals when defense is on.
  reasoning::Explanation review();

  reasoning::HistoryContext history_context() const;
  /// Capture duration for the history currently on disk.
  tuner::TuningDecision tune() const;

  gateway::ProposalBook& book() { return *book_; }
  const AgentConfig& config() const { return config_; }
  Micros now_us() const { return now_us_.load(); }

  std::vector<telemetry::TelemetrySnapshot> snapshots() const;
  std::vector<detection::AnomalyEvent> events() const;
  std::vector<reasoning::Explanation> explanations() const;
  std::uint64_t offered() const;
  std::uint64_t dropped() const;
  double queue_integral() const;
  std::optional<double> rate_limit_pps() const;
  bool is_blocked(packet::Ipv4 addr) const;

 private:
  struct Pending {
    telemetry::TelemetrySnapshot snapshot;
    Micros publish_us = 0;
  };

  void step_to(Micros t_us);
  void detection_tick(Micros t_us);
  reasoning::Explanation review_locked();
  bool admit(const packet::PacketRecord& pkt);
  void install_executors();

  AgentConfig config_;
  gateway::MessageHub* hub_;
  memory_guard::ForensicLog* log_;
  std::shared_ptr<reasoning::ReasoningEngine> engine_;
  std::unique_ptr<gateway::ProposalBook> book_;

  mutable std::recursive_mutex mu_;
  std::atomic<Micros> now_us_;
  telemetry::TelemetryMonitor monitor_;
  Micros base_us_;
  Micros next_due_us_;
  std::optional<Pending> pending_;
  Micros next_tick_us_;
  std::deque<packet::PacketRecord> buffer_;
  std::vector<telemetry::TelemetrySnapshot> snapshots_;
  std::vector<detection::AnomalyEvent> events_;
  std::vector<detection::AnomalyEvent> tick_events_;
  std::vector<reasoning::Explanation> explanations_;
  std::string last_signature_;
  std::set<std::string> submitted_;
  std::uint64_t offered_ = 0;
  std::uint64_t dropped_ = 0;

  // Admission state is shared with executors that may run on gateway
  // threads, so it has its own lock.
  mutable std::mutex admission_mu_;
  std::optional<double> limit_pps_;
  double tokens_ = 0;
  Micros tokens_at_ = 0;
  std::set<std::uint32_t> blocked_;
};

}  // namespace netagent::agent
