#pragma once

// Capture-duration tuning from persisted severity history (history.json).

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "netagent/maestro.hpp"
#include "netagent/memory_guard.hpp"

namespace netagent::tuner {

using maestro::Level;

struct HistoryEntry {
  std::string t;  // ISO-8601 UTC, e.g. 2025-06-01T12:00:00Z
  Level severity = Level::Low;
  std::optional<int> threat_id;
  std::string source;
  std::string note;

  bool operator==(const HistoryEntry&) const = default;
};

bool is_iso8601_utc(std::string_view t);

nlohmann::ordered_json to_json(const HistoryEntry& e);
/// Throws std::invalid_argument describing the first bad field.
HistoryEntry entry_from_json(const nlohmann::json& j);

class HistoryError : public std::runtime_error {
 public:
  HistoryError(std::string what, std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(std::move(what)), index_(index) {}
  /// Offending entry, absent for whole-file problems such as bad JSON.
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  std::optional<std::size_t> index_;
};

std::vector<HistoryEntry> parse_history(std::string_view text);
/// A missing file is an empty history.
std::vector<HistoryEntry> load_history(const std::filesystem::path& path);
/// JSON array, two-space indent, trailing newline.
std::string serialize_history(std::span<const HistoryEntry> entries);
void save_history(const std::filesystem::path& path, std::span<const HistoryEntry> entries);

struct TunerConfig {
  double base_duration_s = 34.0;
  double gain = 4.0;
  double max_duration_s = 300.0;
  std::size_t recency_window = 50;
};

/// low 0, medium 0.5, high 1.
double severity_weight(Level severity);

/// Mean severity weight over the most recent min(N, size) entries; 0 when
/// the history is empty.
double threat_index(std::span<const HistoryEntry> history, std::size_t recency_window = 50);

struct TuningDecision {
  double capture_duration_s = 0;
  double threat_index = 0;
  std::size_t entries_considered = 0;
  std::string rationale;
};

/// min(max, base * (1 + gain * S)).
TuningDecision decide_capture_duration(std::span<const HistoryEntry> history, const TunerConfig& config = {});

/// Resealing hook used by append_entry when sealing is enabled.
struct Sealer {
  memory_guard::SealKey key;
  memory_guard::SnapshotStore* store = nullptr;
};

/// Appends through the parser and serializer, then reseals when a sealer is
/// given. Throws IoError (with path) or HistoryError.
void append_entry(const std::filesystem::path& path, const HistoryEntry& entry,
                  const std::optional<Sealer>& sealer = std::nullopt);

}  // namespace netagent::tuner
