#include "netagent/tuner.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>

#include "netagent/errors.hpp"

namespace netagent::tuner {

bool is_iso8601_utc(std::string_view t) {
  static const std::regex re(R"(^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})(\.\d{1,9})?(Z|[+-]00:00)$)");
  std::cmatch m;
  if (!std::regex_match(t.begin(), t.end(), m, re)) return false;
  const int month = std::stoi(m[2]);
  const int day = std::stoi(m[3]);
  const int hour = std::stoi(m[4]);
  const int minute = std::stoi(m[5]);
  const int second = std::stoi(m[6]);
  return month >= 1 && month <= 12 && day >= 1 && day <= 31 && hour <= 23 && minute <= 59 && second <= 60;
}

nlohmann::ordered_json to_json(const HistoryEntry& e) {
  nlohmann::ordered_json j;
  j["t"] = e.t;
  std::string sev(maestro::level_label(e.severity));
  std::transform(sev.begin(), sev.end(), sev.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  j["severity"] = sev;
  if (e.threat_id) j["threat_id"] = *e.threat_id;
  j["source"] = e.source;
  j["note"] = e.note;
  return j;
}

HistoryEntry entry_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("entry is not an object");
  HistoryEntry e;
  const auto t = j.find("t");
  if (t == j.end() || !t->is_string()) throw std::invalid_argument("missing timestamp 't'");
  e.t = t->get<std::string>();
  if (!is_iso8601_utc(e.t)) throw std::invalid_argument("unparseable timestamp '" + e.t + "'");
  const auto sev = j.find("severity");
  if (sev == j.end() || !sev->is_string()) throw std::invalid_argument("missing severity");
  const auto label = sev->get<std::string>();
  if (label != "low" && label != "medium" && label != "high") {
    throw std::invalid_argument("unknown severity '" + label + "'");
  }
  e.severity = maestro::level_from_label(label);
  if (const auto tid = j.find("threat_id"); tid != j.end() && !tid->is_null()) {
    if (!tid->is_number_integer()) throw std::invalid_argument("threat_id must be an integer");
    const int id = tid->get<int>();
    if (id < 1 || id > 10) throw std::invalid_argument("threat_id out of range");
    e.threat_id = id;
  }
  e.source = j.value("source", "");
  e.note = j.value("note", "");
  return e;
}

std::vector<HistoryEntry> parse_history(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw HistoryError(std::string("malformed history JSON: ") + e.what());
  }
  if (!doc.is_array()) throw HistoryError("history must be a JSON array");
  std::vector<HistoryEntry> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    try {
      out.push_back(entry_from_json(doc[i]));
    } catch (const std::exception& e) {
      throw HistoryError("history entry " + std::to_string(i) + ": " + e.what(), i);
    }
  }
  return out;
}

std::vector<HistoryEntry> load_history(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return {};
  return parse_history(read_file(path));
}

std::string serialize_history(std::span<const HistoryEntry> entries) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : entries) arr.push_back(to_json(e));
  return arr.dump(2) + "\n";
}

void save_history(const std::filesystem::path& path, std::span<const HistoryEntry> entries) {
  write_file_atomic(path, serialize_history(entries));
}

double severity_weight(Level severity) {
  switch (severity) {
    case Level::Low: return 0.0;
    case Level::Medium: return 0.5;
    case Level::High: return 1.0;
  }
  return 0.0;
}

double threat_index(std::span<const HistoryEntry> history, std::size_t recency_window) {
  if (recency_window == 0) throw std::invalid_argument("recency window must be at least 1");
  const auto n = std::min(recency_window, history.size());
  if (n == 0) return 0.0;
  double sum = 0;
  for (const auto& e : history.last(n)) sum += severity_weight(e.severity);
  return sum / static_cast<double>(n);
}

TuningDecision decide_capture_duration(std::span<const HistoryEntry> history, const TunerConfig& config) {
  TuningDecision d;
  d.threat_index = threat_index(history, config.recency_window);
  d.entries_considered = std::min(config.recency_window, history.size());
  d.capture_duration_s =
      std::min(config.max_duration_s, config.base_duration_s * (1.0 + config.gain * d.threat_index));
  std::ostringstream why;
  why << "threat index " << d.threat_index << " over " << d.entries_considered
      << " recent history entries; capture " << d.capture_duration_s << " s (base " << config.base_duration_s
      << " s, gain " << config.gain << ", cap " << config.max_duration_s << " s)";
  d.rationale = why.str();
  return d;
}

void append_entry(const std::filesystem::path& path, const HistoryEntry& entry, const std::optional<Sealer>& sealer) {
  entry_from_json(nlohmann::json::parse(to_json(entry).dump()));  // same checks as loading
  auto entries = load_history(path);
  entries.push_back(entry);
  save_history(path, entries);
  if (sealer) memory_guard::seal(path, sealer->key, sealer->store);
}

}  // namespace netagent::tuner
