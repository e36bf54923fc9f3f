#pragma once

// Resource model and periodic telemetry snapshots.
//
// In simulated mode the agent is a single work-conserving server that drains
// `service_rate_pps` packets per simulated second. Time is kept in integer
// microseconds so queue arithmetic is exact. A snapshot's update interval is
// the base interval plus the time needed to drain the backlog present when
// the snapshot comes due.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "netagent/packet.hpp"

namespace netagent::telemetry {

using packet::Micros;

enum class Mode { Simulated, Host };

struct TelemetryConfig {
  double service_rate_pps = 6'000.0;
  double base_interval_s = 7.5;
  Mode mode = Mode::Simulated;
  /// Queue length at which simulated memory utilisation reaches 1.
  double memory_capacity_packets = 200'000.0;
};

struct ResourceModel {
  double service_rate_pps = 0;
  std::uint64_t queue_len = 0;
  double cpu_util = 0;
  double mem_util = 0;
  Mode mode = Mode::Simulated;
};

struct TelemetrySnapshot {
  std::uint64_t seq = 0;
  double t = 0;  // seconds, simulated or epoch
  double pps = 0;
  double bytes_per_s = 0;
  std::string top_protocol = "none";
  double cpu_util = 0;
  double mem_util = 0;
  std::uint64_t queue_len = 0;
  double update_interval_s = 0;

  bool operator==(const TelemetrySnapshot&) const = default;
};

nlohmann::ordered_json to_json(const TelemetrySnapshot& s);
TelemetrySnapshot snapshot_from_json(const nlohmann::json& j);

/// Single-writer monitor: ingest packets in timestamp order, then call
/// next_snapshot when the scheduler's interval elapses.
class TelemetryMonitor {
 public:
  explicit TelemetryMonitor(TelemetryConfig config = {}, Micros start_us = 0);

  /// Counts the packet in the current window; when `admitted` it also joins
  /// the processing queue, otherwise it is recorded as dropped at ingress.
  void ingest(const packet::PacketRecord& pkt, bool admitted = true);

  /// Drains the queue up to `now_us` (no-op for times in the past).
  void advance_to(Micros now_us);

  /// Closes the window at `now_us`. The returned snapshot's interval is
  /// base + queue_len / service_rate; its `t` is previous t + that interval.
  TelemetrySnapshot next_snapshot(Micros now_us);

  ResourceModel resources() const;
  const TelemetryConfig& config() const { return config_; }
  std::uint64_t queue_len() const { return queue_len_; }
  std::uint64_t admitted() const { return admitted_; }
  std::uint64_t drained() const { return drained_; }
  std::uint64_t dropped() const { return dropped_; }
  Micros now() const { return now_us_; }
  /// Integral of queue length over time, in packet-seconds.
  double queue_integral() const { return queue_integral_; }
  double backlog_s() const;
  double last_snapshot_t() const { return last_t_; }

 private:
  double window_seconds(Micros now_us) const;

  TelemetryConfig config_;
  std::uint64_t service_milli_;  // service rate in milli-packets per second
  Micros now_us_;
  std::uint64_t queue_len_ = 0;
  std::uint64_t credit_ = 0;  // drain credit in us * milli-pps; one packet is 1e9
  std::uint64_t admitted_ = 0;
  std::uint64_t drained_ = 0;
  std::uint64_t dropped_ = 0;
  double queue_integral_ = 0;

  std::uint64_t seq_ = 0;
  double last_t_;
  Micros window_start_us_;
  std::uint64_t window_packets_ = 0;
  std::uint64_t window_bytes_ = 0;
  std::map<std::string, std::uint64_t> window_protocols_;
  double last_cpu_ = 0;
};

/// Interval law, shared by the monitor and its callers.
inline double update_interval(double base_interval_s, std::uint64_t queue_len, double service_rate_pps) {
  return base_interval_s + static_cast<double>(queue_len) / service_rate_pps;
}

/// Peak update interval over the baseline, where the baseline is the first
/// snapshot taken with an empty queue (or the first snapshot if none is).
/// Throws std::invalid_argument with fewer than two snapshots.
double degradation_ratio(std::span<const TelemetrySnapshot> snapshots);
double baseline_interval(std::span<const TelemetrySnapshot> snapshots);

/// Process CPU and memory utilisation for host mode.
struct HostSample {
  double cpu_util = 0;
  double mem_util = 0;
};
HostSample sample_host();

}  // namespace netagent::telemetry
