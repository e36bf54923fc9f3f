#include "netagent/detection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "netagent/errors.hpp"

namespace netagent::detection {

namespace {

using packet::PacketRecord;
using packet::Protocol;

std::span<const PacketRecord> trailing(std::span<const PacketRecord> packets, Micros end_us, double window_s) {
  const Micros from = end_us - static_cast<Micros>(std::llround(window_s * 1e6));
  auto first = std::find_if(packets.begin(), packets.end(),
                            [&](const PacketRecord& p) { return p.micros() >= from; });
  auto last = std::find_if(first, packets.end(),
                           [&](const PacketRecord& p) { return p.micros() >= end_us; });
  return {first, last};
}

template <typename Pred>
std::string top_source(std::span<const PacketRecord> packets, Pred pred) {
  std::map<std::uint32_t, std::uint64_t> counts;
  for (const auto& p : packets) {
    if (pred(p)) ++counts[p.src_addr.value];
  }
  std::uint32_t best = 0;
  std::uint64_t best_count = 0;
  for (const auto& [addr, n] : counts) {
    if (n > best_count) {
      best = addr;
      best_count = n;
    }
  }
  return packet::Ipv4{best}.str();
}

bool is_bare_syn(const PacketRecord& p) {
  return p.protocol == Protocol::Tcp && p.has(packet::tcp_flag::Syn) && !p.has(packet::tcp_flag::Ack);
}

}  // namespace

std::string_view rule_kind_tag(RuleKind kind) {
  switch (kind) {
    case RuleKind::RateDos: return "rate_dos";
    case RuleKind::IcmpFlood: return "icmp_flood";
    case RuleKind::SynFlood: return "syn_flood";
    case RuleKind::PortScan: return "port_scan";
  }
  return "rate_dos";
}

RuleKind rule_kind_from_tag(std::string_view tag) {
  if (tag == "rate_dos") return RuleKind::RateDos;
  if (tag == "icmp_flood") return RuleKind::IcmpFlood;
  if (tag == "syn_flood") return RuleKind::SynFlood;
  if (tag == "port_scan") return RuleKind::PortScan;
  throw std::invalid_argument("unknown rule kind: " + std::string(tag));
}

void validate(const DetectionRule& rule) {
  const auto fail = [&](const std::string& why) {
    throw std::invalid_argument("rule '" + rule.id + "': " + why);
  };
  if (rule.id.empty()) fail("id must not be empty");
  if (!(rule.threshold > 0) || !std::isfinite(rule.threshold)) fail("threshold must be > 0");
  if (!(rule.window_s > 0) || !std::isfinite(rule.window_s)) fail("window_s must be > 0");
  if (rule.maps_to_threat < 1 || rule.maps_to_threat > 10) fail("maps_to_threat must be in 1..10");
  if (rule.kind == RuleKind::SynFlood && !(rule.min_syn_ratio >= 0 && rule.min_syn_ratio < 1)) {
    fail("min_syn_ratio must be in [0, 1)");
  }
}

void validate(std::span<const DetectionRule> rules) {
  std::unordered_set<std::string> ids;
  for (const auto& r : rules) {
    validate(r);
    if (!ids.insert(r.id).second) throw std::invalid_argument("duplicate rule id '" + r.id + "'");
  }
}

std::vector<DetectionRule> default_rules() {
  return {
      {"rate_dos", RuleKind::RateDos, 5'000, "pps", 1.0, 7, 0.8},
      {"icmp_flood", RuleKind::IcmpFlood, 1'000, "pps", 1.0, 7, 0.8},
      {"syn_flood", RuleKind::SynFlood, 1'000, "pps", 1.0, 7, 0.8},
      {"port_scan", RuleKind::PortScan, 100, "ports", 10.0, 1, 0.8},
  };
}

nlohmann::ordered_json to_json(const DetectionRule& r) {
  nlohmann::ordered_json j = {{"id", r.id},
                              {"kind", rule_kind_tag(r.kind)},
                              {"threshold", r.threshold},
                              {"unit", r.unit},
                              {"window_s", r.window_s},
                              {"maps_to_threat", r.maps_to_threat}};
  if (r.kind == RuleKind::SynFlood) j["min_syn_ratio"] = r.min_syn_ratio;
  return j;
}

DetectionRule rule_from_json(const nlohmann::json& j) {
  DetectionRule r;
  r.id = j.at("id").get<std::string>();
  r.kind = rule_kind_from_tag(j.at("kind").get<std::string>());
  r.threshold = j.at("threshold").get<double>();
  r.unit = j.value("unit", r.kind == RuleKind::PortScan ? "ports" : "pps");
  r.window_s = j.at("window_s").get<double>();
  r.maps_to_threat = j.at("maps_to_threat").get<int>();
  r.min_syn_ratio = j.value("min_syn_ratio", 0.8);
  return r;
}

std::vector<DetectionRule> load_rules(const std::filesystem::path& path) {
  const auto doc = nlohmann::json::parse(read_file(path));
  const auto& arr = doc.is_object() ? doc.at("rules") : doc;
  if (!arr.is_array()) throw std::invalid_argument(path.string() + ": expected an array of rules");
  std::vector<DetectionRule> rules;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    try {
      rules.push_back(rule_from_json(arr[i]));
    } catch (const std::exception& e) {
      throw std::invalid_argument(path.string() + ": rule " + std::to_string(i) + ": " + e.what());
    }
  }
  validate(rules);
  return rules;
}

nlohmann::ordered_json to_json(const AnomalyEvent& e) {
  return {{"t", e.t},
          {"rule_id", e.rule_id},
          {"kind", rule_kind_tag(e.kind)},
          {"severity", maestro::level_label(e.severity)},
          {"observed", e.observed},
          {"threshold", e.threshold},
          {"subject", e.subject},
          {"maps_to_threat", e.maps_to_threat}};
}

AnomalyEvent event_from_json(const nlohmann::json& j) {
  AnomalyEvent e;
  e.t = j.at("t").get<double>();
  e.rule_id = j.at("rule_id").get<std::string>();
  e.kind = rule_kind_from_tag(j.at("kind").get<std::string>());
  e.severity = maestro::level_from_label(j.at("severity").get<std::string>());
  e.observed = j.at("observed").get<double>();
  e.threshold = j.at("threshold").get<double>();
  e.subject = j.at("subject").get<std::string>();
  e.maps_to_threat = j.at("maps_to_threat").get<int>();
  return e;
}

Level severity_for(double observed, double threshold) {
  const double ratio = observed / threshold;
  if (ratio >= 2.0) return Level::High;
  if (ratio >= 1.25) return Level::Medium;
  return Level::Low;
}

std::vector<AnomalyEvent> evaluate(const DetectionWindow& window, std::span<const DetectionRule> rules) {
  std::vector<AnomalyEvent> events;
  if (window.packets.empty()) return events;

  for (const auto& rule : rules) {
    const auto pkts = trailing(window.packets, window.end_us, rule.window_s);
    double observed = 0;
    std::string subject;
    bool fired = false;

    switch (rule.kind) {
      case RuleKind::RateDos:
        observed = static_cast<double>(pkts.size()) / rule.window_s;
        fired = observed > rule.threshold;
        if (fired) subject = top_source(pkts, [](const PacketRecord&) { return true; });
        break;
      case RuleKind::IcmpFlood: {
        const auto n = std::count_if(pkts.begin(), pkts.end(),
                                     [](const PacketRecord& p) { return p.protocol == Protocol::Icmp; });
        observed = static_cast<double>(n) / rule.window_s;
        fired = observed > rule.threshold;
        if (fired) subject = top_source(pkts, [](const PacketRecord& p) { return p.protocol == Protocol::Icmp; });
        break;
      }
      case RuleKind::SynFlood: {
        std::size_t tcp = 0;
        std::size_t syn = 0;
        for (const auto& p : pkts) {
          if (p.protocol != Protocol::Tcp) continue;
          ++tcp;
          if (is_bare_syn(p)) ++syn;
        }
        observed = static_cast<double>(syn) / rule.window_s;
        const double ratio = tcp ? static_cast<double>(syn) / static_cast<double>(tcp) : 0.0;
        fired = observed > rule.threshold && ratio > rule.min_syn_ratio;
        if (fired) subject = top_source(pkts, is_bare_syn);
        break;
      }
      case RuleKind::PortScan: {
        std::map<std::uint32_t, std::set<std::uint16_t>> ports;
        for (const auto& p : pkts) {
          if (p.protocol == Protocol::Tcp || p.protocol == Protocol::Udp) ports[p.src_addr.value].insert(p.dst_port);
        }
        std::uint32_t who = 0;
        std::size_t most = 0;
        for (const auto& [src, set] : ports) {
          if (set.size() > most) {
            most = set.size();
            who = src;
          }
        }
        observed = static_cast<double>(most);
        fired = observed > rule.threshold;
        if (fired) subject = packet::Ipv4{who}.str();
        break;
      }
    }

    if (fired) {
      events.push_back({static_cast<double>(window.end_us) / 1e6, rule.id, rule.kind,
                        severity_for(observed, rule.threshold), observed, rule.threshold, subject,
                        rule.maps_to_threat});
    }
  }
  return events;
}

}  // namespace netagent::detection
