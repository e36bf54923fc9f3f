#include <gtest/gtest.h>

#include <random>

#include "netagent/telemetry.hpp"

using namespace netagent::telemetry;
using netagent::packet::Micros;
using netagent::packet::PacketRecord;
using netagent::packet::Protocol;

namespace {

PacketRecord at(Micros t, Protocol proto = Protocol::Tcp, std::uint32_t len = 100) {
  PacketRecord p;
  p.set_micros(t);
  p.protocol = proto;
  p.captured_len = p.original_len = len;
  return p;
}

// Busy-period form of the queue: within a busy period that began at b with
// n arrivals, departures by t are floor((t - b) * mu), capped at n.
struct BusyPeriodOracle {
  std::int64_t mu_pps;
  Micros b = 0;
  std::uint64_t n = 0;

  std::uint64_t departed(Micros t) const {
    if (n == 0) return 0;
    const auto d = static_cast<std::uint64_t>((t - b) * mu_pps / 1'000'000);
    return std::min(d, n);
  }
  void arrive(Micros t) {
    if (departed(t) >= n) {
      b = t;
      n = 1;
    } else {
      ++n;
    }
  }
  std::uint64_t queue(Micros t) const { return n - departed(t); }
};

}  // namespace

TEST(Telemetry, OverloadOracleTenSeconds) {
  TelemetryMonitor m;
  for (Micros k = 0; k < 100'000; ++k) m.ingest(at(k * 100));
  m.advance_to(10'000'000);
  EXPECT_EQ(m.queue_len(), (10'000u - 6'000u) * 10u);
  const auto s = m.next_snapshot(10'000'000);
  EXPECT_EQ(s.queue_len, 40'000u);
  EXPECT_NEAR(s.update_interval_s, 7.5 + 40'000.0 / 6'000.0, 1e-12);
  EXPECT_GT(s.update_interval_s, 13.0);
  // Fluid approximation of the backlog area: a triangle of height 40,000 over 10 s.
  EXPECT_NEAR(m.queue_integral(), 0.5 * 40'000 * 10, 0.5 * 40'000 * 10 * 0.01);
}

TEST(Telemetry, StableLoadKeepsBaseInterval) {
  TelemetryMonitor m;
  for (Micros t = 0; t < 7'500'000; t += 1'000) m.ingest(at(t));
  const auto s = m.next_snapshot(7'500'000);
  EXPECT_EQ(s.queue_len, 0u);
  EXPECT_EQ(s.update_interval_s, 7.5);
  EXPECT_EQ(s.t, 7.5);
  EXPECT_NEAR(s.pps, 1'000.0, 1e-9);
  EXPECT_NEAR(s.cpu_util, 1'000.0 / 6'000.0, 1e-12);
}

TEST(Telemetry, RecoversAfterDrain) {
  TelemetryMonitor m;
  for (Micros k = 0; k < 100'000; ++k) m.ingest(at(k * 100));
  EXPECT_GT(m.next_snapshot(10'000'000).update_interval_s, 13.0);
  // 40,000 queued drain in 6.67 s.
  const auto s = m.next_snapshot(17'000'000);
  EXPECT_EQ(s.queue_len, 0u);
  EXPECT_EQ(s.update_interval_s, 7.5);
}

TEST(Telemetry, MatchesBusyPeriodOracleOnBurstyArrivals) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    TelemetryConfig cfg;
    cfg.service_rate_pps = 1'000 + static_cast<double>(rng() % 9'000);
    TelemetryMonitor m(cfg);
    BusyPeriodOracle oracle{static_cast<std::int64_t>(cfg.service_rate_pps)};
    Micros t = 0;
    for (int i = 0; i < 20'000; ++i) {
      // Bursts of back-to-back arrivals separated by idle gaps.
      t += (rng() % 10 == 0) ? static_cast<Micros>(rng() % 50'000) : static_cast<Micros>(rng() % 200);
      m.ingest(at(t));
      oracle.arrive(t);
      if (i % 997 == 0) {
        ASSERT_EQ(m.queue_len(), oracle.queue(t)) << "trial " << trial << " packet " << i;
      }
    }
    const Micros end = t + 3'000'000;
    m.advance_to(end);
    EXPECT_EQ(m.queue_len(), oracle.queue(end));
  }
}

TEST(Telemetry, QueueConservation) {
  std::mt19937_64 rng(22);
  TelemetryMonitor m;
  Micros t = 0;
  for (int i = 0; i < 50'000; ++i) {
    t += static_cast<Micros>(rng() % 300);
    m.ingest(at(t), rng() % 5 != 0);
    if (i % 101 == 0) {
      ASSERT_EQ(m.admitted(), m.drained() + m.queue_len());
    }
  }
  EXPECT_EQ(m.admitted() + m.dropped(), 50'000u);
}

TEST(Telemetry, DroppedPacketsCountButDoNotQueue) {
  TelemetryMonitor m;
  for (Micros k = 0; k < 1'000; ++k) m.ingest(at(k), false);
  EXPECT_EQ(m.queue_len(), 0u);
  EXPECT_EQ(m.dropped(), 1'000u);
  const auto s = m.next_snapshot(1'000'000);
  EXPECT_NEAR(s.pps, 1'000.0, 1e-9);
  EXPECT_EQ(s.update_interval_s, 7.5);
}

TEST(Telemetry, SnapshotSequenceAndTimes) {
  TelemetryMonitor m;
  double prev_t = 0;
  for (std::uint64_t i = 1; i <= 5; ++i) {
    for (int k = 0; k < 500; ++k) m.ingest(at(static_cast<Micros>(i) * 1'000'000 + k * 20));
    const auto s = m.next_snapshot(static_cast<Micros>(i) * 1'000'000 + 500'000);
    EXPECT_EQ(s.seq, i);
    EXPECT_GT(s.update_interval_s, 0);
    EXPECT_DOUBLE_EQ(s.t, prev_t + s.update_interval_s);
    prev_t = s.t;
  }
}

TEST(Telemetry, TopProtocol) {
  TelemetryMonitor m;
  for (int k = 0; k < 10; ++k) m.ingest(at(k * 1000, Protocol::Udp));
  for (int k = 0; k < 3; ++k) m.ingest(at(20'000 + k, Protocol::Icmp));
  EXPECT_EQ(m.next_snapshot(100'000).top_protocol, "udp");
  EXPECT_EQ(m.next_snapshot(200'000).top_protocol, "none");
}

TEST(Telemetry, IntervalMonotoneInQueue) {
  double prev = 0;
  for (std::uint64_t q = 0; q < 100'000; q += 97) {
    const double v = update_interval(7.5, q, 6'000);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(Telemetry, DegradationRatio) {
  auto snap = [](double interval, std::uint64_t q) {
    TelemetrySnapshot s;
    s.update_interval_s = interval;
    s.queue_len = q;
    return s;
  };
  std::vector<TelemetrySnapshot> flat{snap(7.5, 0), snap(7.5, 0), snap(7.5, 0)};
  EXPECT_EQ(degradation_ratio(flat), 1.0);
  std::vector<TelemetrySnapshot> tc1{snap(7.5, 0), snap(7.5 + 40'000.0 / 6'000.0, 40'000)};
  EXPECT_NEAR(degradation_ratio(tc1), (7.5 + 40'000.0 / 6'000.0) / 7.5, 1e-12);
  EXPECT_NEAR(degradation_ratio(tc1), 1.89, 0.005);
  // Baseline is the first quiescent snapshot.
  std::vector<TelemetrySnapshot> late{snap(9.0, 9'000), snap(7.5, 0), snap(15.0, 45'000)};
  EXPECT_EQ(baseline_interval(late), 7.5);
  EXPECT_EQ(degradation_ratio(late), 2.0);
  EXPECT_THROW(degradation_ratio(std::vector{snap(7.5, 0)}), std::invalid_argument);
  EXPECT_THROW(baseline_interval(std::vector<TelemetrySnapshot>{}), std::invalid_argument);
}

TEST(Telemetry, JsonRoundTrip) {
  TelemetryMonitor m;
  for (int k = 0; k < 100; ++k) m.ingest(at(k * 10));
  const auto s = m.next_snapshot(2'000'000);
  const auto j = to_json(s);
  EXPECT_EQ(j.begin().key(), "seq");
  EXPECT_EQ(snapshot_from_json(nlohmann::json::parse(j.dump())), s);
}

TEST(Telemetry, RejectsBadConfig) {
  TelemetryConfig cfg;
  cfg.service_rate_pps = 0;
  EXPECT_THROW(TelemetryMonitor{cfg}, std::invalid_argument);
  cfg = {};
  cfg.base_interval_s = -1;
  EXPECT_THROW(TelemetryMonitor{cfg}, std::invalid_argument);
}

TEST(Telemetry, HostSampleInRange) {
  const auto h = sample_host();
  EXPECT_GE(h.cpu_util, 0);
  EXPECT_LE(h.cpu_util, 1);
  EXPECT_GE(h.mem_util, 0);
  EXPECT_LE(h.mem_util, 1);
}
