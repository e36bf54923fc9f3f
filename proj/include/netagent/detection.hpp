#pragma once

// Threshold rules over packet windows: volumetric DoS, ICMP and SYN floods,
// and port scans.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "netagent/maestro.hpp"
#include "netagent/packet.hpp"

namespace netagent::detection {

using packet::Micros;
using maestro::Level;

enum class RuleKind { RateDos, IcmpFlood, SynFlood, PortScan };
std::string_view rule_kind_tag(RuleKind kind);  // "rate_dos", ...
RuleKind rule_kind_from_tag(std::string_view tag);

struct DetectionRule {
  std::string id;
  RuleKind kind = RuleKind::RateDos;
  double threshold = 0;
  std::string unit;  // "pps" or "ports"
  double window_s = 1.0;
  int maps_to_threat = 7;
  /// SYN-without-ACK share of TCP packets that must also be exceeded
  /// (syn_flood only).
  double min_syn_ratio = 0.8;

  bool operator==(const DetectionRule&) const = default;
};

/// Throws std::invalid_argument naming the offending rule.
void validate(const DetectionRule& rule);
void validate(std::span<const DetectionRule> rules);

std::vector<DetectionRule> default_rules();

nlohmann::ordered_json to_json(const DetectionRule& rule);
DetectionRule rule_from_json(const nlohmann::json& j);
/// JSON array of rules, or an object with a "rules" array. Validated.
std::vector<DetectionRule> load_rules(const std::filesystem::path& path);

struct AnomalyEvent {
  double t = 0;
  std::string rule_id;
  RuleKind kind = RuleKind::RateDos;
  Level severity = Level::Low;
  double observed = 0;
  double threshold = 0;
  std::string subject;
  int maps_to_threat = 0;

  bool operator==(const AnomalyEvent&) const = default;
};

nlohmann::ordered_json to_json(const AnomalyEvent& e);
AnomalyEvent event_from_json(const nlohmann::json& j);

/// High at >= 2x the threshold, Medium at >= 1.25x, otherwise Low.
Level severity_for(double observed, double threshold);

/// Packets ending at `end_us`. Each rule looks at the trailing `window_s`
/// seconds of it.
struct DetectionWindow {
  std::span<const packet::PacketRecord> packets;
  Micros end_us = 0;
};

/// At most one event per violated rule. Pure.
std::vector<AnomalyEvent> evaluate(const DetectionWindow& window, std::span<const DetectionRule> rules);

}  // namespace netagent::detection
