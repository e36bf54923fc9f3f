#include "netagent/maestro.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace netagent::maestro {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

ThreatRecord make(int id, std::string name, std::vector<std::string> aliases,
                  std::string definition, Layer primary, std::set<Layer> cross,
                  std::string example, Level p, Level i, Level e, std::string notes) {
  return ThreatRecord{id,      std::move(name),    std::move(aliases), std::move(definition),
                      primary, std::move(cross),   std::move(example), RiskAssessment{p, i, e},
                      std::move(notes)};
}

std::vector<ThreatRecord> make_registry() {
  using L = Layer;
  using V = Level;
  // Layers and (P, I, E) follow the operational risk matrix. The alternative
  // layer assignment from the threat-to-layer table is kept in `notes`.
  return {
      make(1, "Input-Induced Behavior Manipulation", {"Instruction Manipulation"},
           "Alters input prompts to redirect agent behavior",
           L::L3, {L::L2, L::L5}, "Injected log entry modifies anomaly thresholding",
           V::High, V::Medium, V::Medium, "layer-table variant: primary L7, cross L1, L3"),
      make(2, "Goal Manipulation", {"Goal Manipulation (Agent Drift)"},
           "Shifts agent's objectives via ambiguous feedback",
           L::L3, {L::L1, L::L2}, "Agent favors performance over security after drift",
           V::High, V::High, V::Low, "layer-table variant: primary L3, cross L1, L6"),
      make(3, "Chain-of-Thought Manipulation", {},
           "Corrupts stepwise inference of the LLM",
           L::L1, {L::L2, L::L5}, "Agent interprets attack as normal backup",
           V::High, V::High, V::Medium, "layer-table variant: primary L1, cross L3"),
      make(4, "Memory & Context Manipulation", {"Memory and Context Manipulation"},
           "Poisons historical memory/context for decisions",
           L::L3, {L::L2, L::L5}, "Altered alert history causes missed repeat attack",
           V::Medium, V::High, V::Medium, "layer-table variant: primary L1, cross L2, L3, L5"),
      make(5, "Critical System Interaction", {},
           "Misuses tool invocation to harm system",
           L::L4, {L::L3, L::L7}, "Malicious firewall update via spoofed trigger",
           V::Medium, V::High, V::Medium, "layer-table variant: primary L4, cross L6, L7"),
      make(6, "Planning & Reasoning Exploitation",
           {"Planning & Reasoning Exploit", "Planning and Reasoning Exploitation"},
           "Degrades long-term decisions through input shaping",
           L::L3, {L::L5, L::L6}, "Attacker simulates load balancing to hide DDoS",
           V::High, V::High, V::Medium, "layer-table variant: primary L3, cross L1, L5"),
      make(7, "Resource Exhaustion", {},
           "Overloads agent with data to reduce functionality",
           L::L4, {L::L5, L::L7}, "Flooding logs exhaust token capacity",
           V::High, V::High, V::High, "layer-table variant: primary L4, cross L2, L5"),
      make(8, "Knowledge Base Poisoning", {},
           "Corrupts learned information or references",
           L::L2, {L::L1, L::L3}, "False threat Intel causes misclassification",
           V::High, V::High, V::Low, "layer-table variant: primary L2, cross L1, L3"),
      make(9, "Supply Chain Compromise", {},
           "Inserts vulnerability via plugins or models",
           L::L2, {L::L1, L::L4}, "Tainted plugin leaks sensitive data",
           V::Medium, V::High, V::Medium, "layer-table variant: primary L6, cross L1-L4"),
      make(10, "Multi-Agent Exploitation", {},
           "One agent sabotages others via shared memory",
           L::L3, {L::L4, L::L7}, "Poisoned memory misguides downstream classification",
           V::Medium, V::High, V::High, "layer-table variant: primary L7, cross L1-L6"),
  };
}

std::string cell_layer(Layer layer) {
  return std::string(layer_name(layer)) + " (" + layer_tag(layer) + ")";
}

std::string cell_level(Level level) {
  return std::string(level_label(level)) + " (" + std::to_string(ordinal(level)) + ")";
}

}  // namespace

std::string_view layer_name(Layer layer) {
  switch (layer) {
    case Layer::L1: return "Foundation Models";
    case Layer::L2: return "Data Operations";
    case Layer::L3: return "Agent Frameworks";
    case Layer::L4: return "Deployment & Infrastructure";
    case Layer::L5: return "Evaluation & Observability";
    case Layer::L6: return "Security & Compliance";
    case Layer::L7: return "Agent Ecosystem";
  }
  throw std::invalid_argument("invalid MAESTRO layer");
}

std::string layer_tag(Layer layer) { return "L" + std::to_string(static_cast<int>(layer)); }

Layer layer_from_tag(std::string_view tag) {
  if (tag.size() == 2 && (tag[0] == 'L' || tag[0] == 'l') && tag[1] >= '1' && tag[1] <= '7') {
    return static_cast<Layer>(tag[1] - '0');
  }
  throw std::invalid_argument("unknown MAESTRO layer tag: " + std::string(tag));
}

std::string_view level_label(Level level) {
  switch (level) {
    case Level::Low: return "Low";
    case Level::Medium: return "Medium";
    case Level::High: return "High";
  }
  throw std::invalid_argument("invalid ordinal level");
}

Level level_from_label(std::string_view label) {
  const auto l = lower(label);
  if (l == "low") return Level::Low;
  if (l == "medium") return Level::Medium;
  if (l == "high") return Level::High;
  throw std::invalid_argument("unknown ordinal level: " + std::string(label));
}

Level level_from_ordinal(int value) {
  if (value < 1 || value > 3) {
    throw std::invalid_argument("ordinal value out of range: " + std::to_string(value));
  }
  return static_cast<Level>(value);
}

const MatrixRow& RiskMatrix::row(int id) const {
  for (const auto& r : rows) {
    if (r.id == id) return r;
  }
  throw std::out_of_range("no threat with id " + std::to_string(id));
}

const std::vector<ThreatRecord>& builtin_registry() {
  static const std::vector<ThreatRecord> registry = make_registry();
  return registry;
}

const ThreatRecord* find_threat(int id) {
  for (const auto& t : builtin_registry()) {
    if (t.id == id) return &t;
  }
  return nullptr;
}

RiskMatrix build_risk_matrix(const std::vector<ThreatRecord>& registry) {
  if (registry.empty()) throw std::invalid_argument("risk matrix needs at least one threat");

  RiskMatrix matrix;
  std::unordered_set<int> seen;
  for (const auto& t : registry) {
    if (!seen.insert(t.id).second) {
      throw std::invalid_argument("duplicate threat id " + std::to_string(t.id));
    }
    matrix.rows.push_back(
        {t.id, t.name, t.primary_layer, t.cross_layers, t.assessment, t.assessment.score()});
  }
  std::sort(matrix.rows.begin(), matrix.rows.end(),
            [](const MatrixRow& a, const MatrixRow& b) { return a.id < b.id; });

  std::vector<const MatrixRow*> order;
  for (const auto& r : matrix.rows) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const MatrixRow* a, const MatrixRow* b) {
    if (a->score != b->score) return a->score > b->score;
    if (a->assessment.impact != b->assessment.impact) {
      return a->assessment.impact > b->assessment.impact;
    }
    if (a->assessment.likelihood != b->assessment.likelihood) {
      return a->assessment.likelihood > b->assessment.likelihood;
    }
    return a->id < b->id;
  });
  for (const auto* r : order) matrix.ranking.push_back(r->id);
  return matrix;
}

ReportFormat report_format_from_tag(std::string_view tag) {
  const auto t = lower(tag);
  if (t == "json") return ReportFormat::Json;
  if (t == "md" || t == "markdown") return ReportFormat::Markdown;
  throw std::invalid_argument("unsupported report format: " + std::string(tag));
}

nlohmann::ordered_json to_json(const RiskMatrix& matrix) {
  nlohmann::ordered_json threats = nlohmann::ordered_json::array();
  for (int id : matrix.ranking) {
    const auto& r = matrix.row(id);
    nlohmann::ordered_json cross = nlohmann::ordered_json::array();
    for (auto l : r.cross_layers) cross.push_back(layer_tag(l));
    threats.push_back({{"id", r.id},
                       {"name", r.name},
                       {"primary_layer", layer_tag(r.primary_layer)},
                       {"cross_layers", cross},
                       {"likelihood", level_label(r.assessment.likelihood)},
                       {"impact", level_label(r.assessment.impact)},
                       {"exploitability", level_label(r.assessment.exploitability)},
                       {"score", r.score}});
  }
  return {{"threats", threats}, {"ranking", matrix.ranking}};
}

RiskMatrix risk_matrix_from_json(const nlohmann::json& doc) {
  RiskMatrix m;
  for (const auto& t : doc.at("threats")) {
    MatrixRow r;
    r.id = t.at("id").get<int>();
    r.name = t.at("name").get<std::string>();
    r.primary_layer = layer_from_tag(t.at("primary_layer").get<std::string>());
    for (const auto& l : t.at("cross_layers")) r.cross_layers.insert(layer_from_tag(l.get<std::string>()));
    r.assessment = {level_from_label(t.at("likelihood").get<std::string>()),
                    level_from_label(t.at("impact").get<std::string>()),
                    level_from_label(t.at("exploitability").get<std::string>())};
    r.score = t.at("score").get<int>();
    m.rows.push_back(std::move(r));
  }
  std::sort(m.rows.begin(), m.rows.end(),
            [](const MatrixRow& a, const MatrixRow& b) { return a.id < b.id; });
  m.ranking = doc.at("ranking").get<std::vector<int>>();
  return m;
}

std::string emit_report(const RiskMatrix& matrix, ReportFormat format) {
  if (matrix.rows.empty() || matrix.ranking.size() != matrix.rows.size()) {
    throw std::invalid_argument("risk matrix has no rows to report");
  }
  if (format == ReportFormat::Json) return to_json(matrix).dump(2) + "\n";

  std::ostringstream out;
  out << "| Threat | Primary Layer (MAESTRO) | Cross-layer Impact | Likelihood (P) | Impact (I) "
         "| Exploitability (E) | Risk Score |\n";
  out << "|---|---|---|---|---|---|---|\n";
  for (int id : matrix.ranking) {
    const auto& r = matrix.row(id);
    std::string cross;
    for (auto l : r.cross_layers) {
      if (!cross.empty()) cross += ", ";
      cross += cell_layer(l);
    }
    out << "| " << r.id << ". " << r.name << " | " << cell_layer(r.primary_layer) << " | " << cross
        << " | " << cell_level(r.assessment.likelihood) << " | " << cell_level(r.assessment.impact)
        << " | " << cell_level(r.assessment.exploitability) << " | " << r.score << " |\n";
  }
  return out.str();
}

}  // namespace netagent::maestro
