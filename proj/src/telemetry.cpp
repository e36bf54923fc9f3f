#include "netagent/telemetry.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include <sys/resource.h>
#include <sys/sysinfo.h>
#include <unistd.h>

namespace netagent::telemetry {

namespace {
constexpr std::uint64_t kPacketCredit = 1'000'000'000;  // 1e6 us * 1e3 milli
}

nlohmann::ordered_json to_json(const TelemetrySnapshot& s) {
  return {{"seq", s.seq},
          {"t", s.t},
          {"pps", s.pps},
          {"bytes_per_s", s.bytes_per_s},
          {"top_protocol", s.top_protocol},
          {"cpu_util", s.cpu_util},
          {"mem_util", s.mem_util},
          {"queue_len", s.queue_len},
          {"update_interval_s", s.update_interval_s}};
}

TelemetrySnapshot snapshot_from_json(const nlohmann::json& j) {
  TelemetrySnapshot s;
  s.seq = j.at("seq").get<std::uint64_t>();
  s.t = j.at("t").get<double>();
  s.pps = j.at("pps").get<double>();
  s.bytes_per_s = j.at("bytes_per_s").get<double>();
  s.top_protocol = j.at("top_protocol").get<std::string>();
  s.cpu_util = j.at("cpu_util").get<double>();
  s.mem_util = j.at("mem_util").get<double>();
  s.queue_len = j.at("queue_len").get<std::uint64_t>();
  s.update_interval_s = j.at("update_interval_s").get<double>();
  return s;
}

TelemetryMonitor::TelemetryMonitor(TelemetryConfig config, Micros start_us)
    : config_(config),
      now_us_(start_us),
      last_t_(static_cast<double>(start_us) / 1e6),
      window_start_us_(start_us) {
  if (!(config_.service_rate_pps > 0)) throw std::invalid_argument("service rate must be positive");
  if (!(config_.base_interval_s > 0)) throw std::invalid_argument("base interval must be positive");
  service_milli_ = static_cast<std::uint64_t>(std::llround(config_.service_rate_pps * 1000.0));
}

void TelemetryMonitor::advance_to(Micros now_us) {
  if (now_us <= now_us_) return;
  const auto dt = static_cast<std::uint64_t>(now_us - now_us_);
  const double dt_s = static_cast<double>(dt) / 1e6;
  now_us_ = now_us;
  if (queue_len_ == 0) {
    credit_ = 0;
    return;
  }
  const auto q0 = queue_len_;
  credit_ += dt * service_milli_;
  const auto drain = std::min<std::uint64_t>(queue_len_, credit_ / kPacketCredit);
  queue_len_ -= drain;
  drained_ += drain;
  credit_ -= drain * kPacketCredit;
  if (queue_len_ == 0) {
    credit_ = 0;
    // Triangle up to the moment the queue emptied.
    queue_integral_ += 0.5 * static_cast<double>(q0) *
                       std::min(dt_s, static_cast<double>(q0) / config_.service_rate_pps);
  } else {
    queue_integral_ += 0.5 * static_cast<double>(q0 + queue_len_) * dt_s;
  }
}

void TelemetryMonitor::ingest(const packet::PacketRecord& pkt, bool admitted) {
  advance_to(pkt.micros());
  ++window_packets_;
  window_bytes_ += pkt.original_len;
  ++window_protocols_[std::string(packet::protocol_name(pkt.protocol))];
  if (admitted) {
    ++queue_len_;
    ++admitted_;
  } else {
    ++dropped_;
  }
}

double TelemetryMonitor::window_seconds(Micros now_us) const {
  return static_cast<double>(now_us - window_start_us_) / 1e6;
}

double TelemetryMonitor::backlog_s() const {
  return static_cast<double>(queue_len_) / config_.service_rate_pps;
}

ResourceModel TelemetryMonitor::resources() const {
  ResourceModel r;
  r.service_rate_pps = config_.service_rate_pps;
  r.queue_len = queue_len_;
  r.mode = config_.mode;
  if (config_.mode == Mode::Host) {
    const auto host = sample_host();
    r.cpu_util = host.cpu_util;
    r.mem_util = host.mem_util;
  } else {
    const double span = window_seconds(now_us_);
    const double rate = span > 0 ? static_cast<double>(window_packets_) / span : 0.0;
    r.cpu_util = span > 0 ? std::min(1.0, rate / config_.service_rate_pps) : last_cpu_;
    r.mem_util = std::min(1.0, static_cast<double>(queue_len_) / config_.memory_capacity_packets);
  }
  return r;
}

TelemetrySnapshot TelemetryMonitor::next_snapshot(Micros now_us) {
  advance_to(now_us);
  const auto at = std::max(now_us, now_us_);
  const double span = window_seconds(at);

  TelemetrySnapshot s;
  s.seq = ++seq_;
  s.pps = span > 0 ? static_cast<double>(window_packets_) / span : 0.0;
  s.bytes_per_s = span > 0 ? static_cast<double>(window_bytes_) / span : 0.0;
  std::uint64_t best = 0;
  for (const auto& [name, count] : window_protocols_) {
    if (count > best) {
      best = count;
      s.top_protocol = name;
    }
  }
  s.queue_len = queue_len_;
  if (config_.mode == Mode::Host) {
    const auto host = sample_host();
    s.cpu_util = host.cpu_util;
    s.mem_util = host.mem_util;
  } else {
    s.cpu_util = std::min(1.0, s.pps / config_.service_rate_pps);
    s.mem_util = std::min(1.0, static_cast<double>(queue_len_) / config_.memory_capacity_packets);
  }
  last_cpu_ = s.cpu_util;
  s.update_interval_s = update_interval(config_.base_interval_s, queue_len_, config_.service_rate_pps);
  s.t = last_t_ + s.update_interval_s;
  last_t_ = s.t;

  window_start_us_ = at;
  window_packets_ = 0;
  window_bytes_ = 0;
  window_protocols_.clear();
  return s;
}

double baseline_interval(std::span<const TelemetrySnapshot> snapshots) {
  if (snapshots.empty()) throw std::invalid_argument("no snapshots");
  for (const auto& s : snapshots) {
    if (s.queue_len == 0) return s.update_interval_s;
  }
  return snapshots.front().update_interval_s;
}

double degradation_ratio(std::span<const TelemetrySnapshot> snapshots) {
  if (snapshots.size() < 2) {
    throw std::invalid_argument("degradation ratio needs at least 2 snapshots");
  }
  const double base = baseline_interval(snapshots);
  double peak = 0;
  for (const auto& s : snapshots) peak = std::max(peak, s.update_interval_s);
  return peak / base;
}

HostSample sample_host() {
  static const auto wall_start = std::chrono::steady_clock::now();
  HostSample out;
  rusage usage{};
  if (getrusage(RUSAGE_SELF, &usage) == 0) {
    const double cpu = static_cast<double>(usage.ru_utime.tv_sec + usage.ru_stime.tv_sec) +
                       static_cast<double>(usage.ru_utime.tv_usec + usage.ru_stime.tv_usec) / 1e6;
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    const auto cores = std::max(1L, sysconf(_SC_NPROCESSORS_ONLN));
    out.cpu_util = wall > 0 ? std::min(1.0, cpu / (wall * static_cast<double>(cores))) : 0.0;
  }
  struct sysinfo info {};
  if (sysinfo(&info) == 0 && info.totalram > 0) {
    // ru_maxrss is in KiB on Linux.
    const double rss = static_cast<double>(usage.ru_maxrss) * 1024.0;
    out.mem_util = std::min(1.0, rss / (static_cast<double>(info.totalram) * info.mem_unit));
  }
  return out;
}

}  // namespace netagent::telemetry
