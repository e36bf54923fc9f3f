#pragma once

// MAESTRO seven-layer threat model, the built-in threat registry and the
// ordinal P x I x E risk engine.

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace netagent::maestro {

enum class Layer : std::uint8_t { L1 = 1, L2, L3, L4, L5, L6, L7 };

inline constexpr std::array<Layer, 7> kAllLayers = {Layer::L1, Layer::L2, Layer::L3, Layer::L4,
                                                     Layer::L5, Layer::L6, Layer::L7};

std::string_view layer_name(Layer layer);
std::string layer_tag(Layer layer);  // "L4"
Layer layer_from_tag(std::string_view tag);

enum class Level : std::uint8_t { Low = 1, Medium = 2, High = 3 };

inline constexpr int ordinal(Level level) { return static_cast<int>(level); }
std::string_view level_label(Level level);  // "Low" / "Medium" / "High"
/// Case-insensitive; throws std::invalid_argument on anything else.
Level level_from_label(std::string_view label);
Level level_from_ordinal(int value);

/// R = P * I * E over ordinal values.
inline constexpr int score(Level likelihood, Level impact, Level exploitability) {
  return ordinal(likelihood) * ordinal(impact) * ordinal(exploitability);
}

struct RiskAssessment {
  Level likelihood = Level::Low;
  Level impact = Level::Low;
  Level exploitability = Level::Low;

  int score() const { return maestro::score(likelihood, impact, exploitability); }
  bool operator==(const RiskAssessment&) const = default;
};

struct ThreatRecord {
  int id = 0;
  std::string name;
  std::vector<std::string> aliases;
  std::string definition;
  Layer primary_layer = Layer::L1;
  std::set<Layer> cross_layers;
  std::string example_use_case;
  RiskAssessment assessment;
  std::string notes;

  bool operator==(const ThreatRecord&) const = default;
};

struct MatrixRow {
  int id = 0;
  std::string name;
  Layer primary_layer = Layer::L1;
  std::set<Layer> cross_layers;
  RiskAssessment assessment;
  int score = 0;

  bool operator==(const MatrixRow&) const = default;
};

struct RiskMatrix {
  std::vector<MatrixRow> rows;  // registry order
  std::vector<int> ranking;     // threat ids, highest risk first

  const MatrixRow& row(int id) const;
  bool operator==(const RiskMatrix&) const = default;
};

/// The ten threats of the network-monitoring agent, ids 1..10.
const std::vector<ThreatRecord>& builtin_registry();
const ThreatRecord* find_threat(int id);
inline constexpr std::string_view kRegistryVersion = "maestro-nma-1";

/// Rows keep input order; ranking sorts by score desc, then impact desc,
/// likelihood desc, id asc. Throws std::invalid_argument on an empty
/// registry or a duplicate id.
RiskMatrix build_risk_matrix(const std::vector<ThreatRecord>& registry);

enum class ReportFormat { Json, Markdown };
ReportFormat report_format_from_tag(std::string_view tag);  // "json", "md", "markdown"

nlohmann::ordered_json to_json(const RiskMatrix& matrix);
RiskMatrix risk_matrix_from_json(const nlohmann::json& doc);

/// Deterministic serialization; rows emitted in ranking order.
std::string emit_report(const RiskMatrix& matrix, ReportFormat format);

}  // namespace netagent::maestro
