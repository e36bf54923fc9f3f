#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "netagent/detection.hpp"

using namespace netagent::detection;
using netagent::packet::FloodKind;
using netagent::packet::FloodSpec;
using netagent::packet::Ipv4;
using netagent::packet::PacketRecord;
using netagent::packet::Protocol;
namespace tcp_flag = netagent::packet::tcp_flag;

namespace {

// n packets spread evenly over [end - span, end).
std::vector<PacketRecord> uniform(std::size_t n, Micros end, Micros span, Protocol proto = Protocol::Udp,
                                  std::uint8_t flags = 0) {
  std::vector<PacketRecord> out;
  for (std::size_t k = 0; k < n; ++k) {
    PacketRecord p;
    p.set_micros(end - span + static_cast<Micros>(k) * span / static_cast<Micros>(n));
    p.protocol = proto;
    p.tcp_flags = flags;
    p.src_addr = Ipv4::parse("10.0.0.66");
    p.dst_port = 80;
    p.captured_len = p.original_len = 64;
    out.push_back(p);
  }
  return out;
}

const DetectionRule* rule(const std::vector<DetectionRule>& rules, const std::string& id) {
  for (const auto& r : rules) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

}  // namespace

TEST(Detection, DefaultRuleSet) {
  const auto rules = default_rules();
  ASSERT_EQ(rules.size(), 4u);
  EXPECT_EQ(rule(rules, "rate_dos")->threshold, 5'000);
  EXPECT_EQ(rule(rules, "rate_dos")->maps_to_threat, 7);
  EXPECT_EQ(rule(rules, "icmp_flood")->threshold, 1'000);
  EXPECT_EQ(rule(rules, "syn_flood")->min_syn_ratio, 0.8);
  EXPECT_EQ(rule(rules, "port_scan")->window_s, 10.0);
  EXPECT_EQ(rule(rules, "port_scan")->maps_to_threat, 1);
}

TEST(Detection, QuiescentWindowIsSilent) {
  const auto pkts = uniform(100, 10'000'000, 1'000'000);
  EXPECT_TRUE(evaluate({pkts, 10'000'000}, default_rules()).empty());
  EXPECT_TRUE(evaluate({{}, 10'000'000}, default_rules()).empty());
}

TEST(Detection, TenThousandPpsIsHighSeverity) {
  const auto pkts = uniform(10'000, 10'000'000, 1'000'000);
  const auto events = evaluate({pkts, 10'000'000}, default_rules());
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0].rule_id, "rate_dos");
  EXPECT_EQ(events[0].observed, 10'000);
  EXPECT_EQ(events[0].severity, Level::High);
  EXPECT_EQ(events[0].subject, "10.0.0.66");
  EXPECT_EQ(events[0].maps_to_threat, 7);
  EXPECT_EQ(events[0].t, 10.0);
}

TEST(Detection, ThresholdIsStrict) {
  auto rules = std::vector{*rule(default_rules(), "rate_dos")};
  EXPECT_TRUE(evaluate({uniform(5'000, 2'000'000, 1'000'000), 2'000'000}, rules).empty());
  EXPECT_EQ(evaluate({uniform(5'001, 2'000'000, 1'000'000), 2'000'000}, rules).size(), 1u);
}

TEST(Detection, OnlyTrailingWindowCounts) {
  // 9,000 packets in the second before the window, 100 inside it.
  auto pkts = uniform(9'000, 1'000'000, 1'000'000);
  const auto inside = uniform(100, 2'000'000, 1'000'000);
  pkts.insert(pkts.end(), inside.begin(), inside.end());
  EXPECT_TRUE(evaluate({pkts, 2'000'000}, default_rules()).empty());
}

TEST(Detection, IcmpFloodFromGenerator) {
  FloodSpec spec;
  spec.kind = FloodKind::Icmp;
  spec.count = 2'000;
  spec.rate_pps = 2'000;
  spec.src = {Ipv4::parse("10.9.9.9"), 32, 0};
  spec.dst = {Ipv4::parse("192.168.10.10"), 32, 0};
  const auto pkts = netagent::packet::synthesize_flood(spec);
  const auto events = evaluate({pkts, 1'000'000}, default_rules());
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0].rule_id, "icmp_flood");
  EXPECT_EQ(events[0].severity, Level::High);
  EXPECT_EQ(events[0].subject, "10.9.9.9");
}

TEST(Detection, SynFloodNeedsBareSynRatio) {
  auto rules = std::vector{*rule(default_rules(), "syn_flood")};
  const auto syn = uniform(2'000, 1'000'000, 1'000'000, Protocol::Tcp, tcp_flag::Syn);
  EXPECT_EQ(evaluate({syn, 1'000'000}, rules).size(), 1u);

  // SYN-ACK replies are not bare SYNs.
  const auto synack = uniform(2'000, 1'000'000, 1'000'000, Protocol::Tcp, tcp_flag::Syn | tcp_flag::Ack);
  EXPECT_TRUE(evaluate({synack, 1'000'000}, rules).empty());

  // 1,500 SYN/s is over the rate, but diluted to a 0.5 ratio by established traffic.
  auto mixed = uniform(1'500, 1'000'000, 1'000'000, Protocol::Tcp, tcp_flag::Syn);
  const auto est = uniform(1'500, 1'000'000, 1'000'000, Protocol::Tcp, tcp_flag::Ack);
  mixed.insert(mixed.end(), est.begin(), est.end());
  std::sort(mixed.begin(), mixed.end(), [](auto& a, auto& b) { return a.micros() < b.micros(); });
  EXPECT_TRUE(evaluate({mixed, 1'000'000}, rules).empty());
}

TEST(Detection, PortScanMediumSeverity) {
  std::vector<PacketRecord> pkts;
  for (int k = 0; k < 150; ++k) {
    PacketRecord p;
    p.set_micros(k * 60'000);
    p.protocol = Protocol::Tcp;
    p.tcp_flags = tcp_flag::Syn;
    p.src_addr = Ipv4::parse("10.7.7.7");
    p.dst_port = static_cast<std::uint16_t>(1'000 + k);
    pkts.push_back(p);
  }
  const auto events = evaluate({pkts, 10'000'000}, default_rules());
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0].rule_id, "port_scan");
  EXPECT_EQ(events[0].observed, 150);
  EXPECT_EQ(events[0].severity, Level::Medium);
  EXPECT_EQ(events[0].subject, "10.7.7.7");
  EXPECT_EQ(events[0].maps_to_threat, 1);
}

TEST(Detection, SeverityBands) {
  EXPECT_EQ(severity_for(5'001, 5'000), Level::Low);
  EXPECT_EQ(severity_for(6'250, 5'000), Level::Medium);
  EXPECT_EQ(severity_for(9'999, 5'000), Level::Medium);
  EXPECT_EQ(severity_for(10'000, 5'000), Level::High);
}

TEST(Detection, Deterministic) {
  const auto pkts = uniform(12'000, 3'000'000, 1'000'000, Protocol::Icmp);
  EXPECT_EQ(evaluate({pkts, 3'000'000}, default_rules()), evaluate({pkts, 3'000'000}, default_rules()));
}

TEST(Detection, RuleValidation) {
  auto r = default_rules()[0];
  r.threshold = -1;
  EXPECT_THROW(validate(r), std::invalid_argument);
  r = default_rules()[0];
  r.window_s = 0;
  EXPECT_THROW(validate(r), std::invalid_argument);
  auto dup = default_rules();
  dup.push_back(dup[0]);
  EXPECT_THROW(validate(dup), std::invalid_argument);
}

TEST(Detection, RuleJsonAndLoading) {
  for (const auto& r : default_rules()) {
    EXPECT_EQ(rule_from_json(nlohmann::json::parse(to_json(r).dump())), r);
  }
  const auto dir = std::filesystem::temp_directory_path() / "netagent_detection_test";
  std::filesystem::create_directories(dir);
  {
    nlohmann::ordered_json doc;
    for (const auto& r : default_rules()) doc["rules"].push_back(to_json(r));
    std::ofstream(dir / "rules.json") << doc.dump(2);
  }
  EXPECT_EQ(load_rules(dir / "rules.json"), default_rules());
  std::ofstream(dir / "bad.json") << R"([{"id":"x","kind":"warp_flood","threshold":1,"unit":"pps","window_s":1,"maps_to_threat":7}])";
  EXPECT_THROW(load_rules(dir / "bad.json"), std::invalid_argument);
  std::filesystem::remove_all(dir);
}

TEST(Detection, EventJsonRoundTrip) {
  const auto events = evaluate({uniform(10'000, 10'000'000, 1'000'000), 10'000'000}, default_rules());
  ASSERT_FALSE(events.empty());
  EXPECT_EQ(event_from_json(nlohmann::json::parse(to_json(events[0]).dump())), events[0]);
  EXPECT_EQ(rule_kind_from_tag("syn_flood"), RuleKind::SynFlood);
  EXPECT_THROW(rule_kind_from_tag("nope"), std::invalid_argument);
}
