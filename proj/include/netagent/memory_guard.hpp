#pragma once

// Integrity protection for the agent's persisted memory: HMAC seals kept in a
// sidecar file, sealed snapshots for rollback, and a hash-chained forensic
// log.

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "netagent/crypto.hpp"

namespace netagent::memory_guard {

namespace fs = std::filesystem;

inline constexpr std::string_view kSealAlgorithm = "HMAC-SHA-256";
inline constexpr const char* kSealKeyEnv = "AGENT_SEAL_KEY";

struct SealKey {
  std::string secret;

  /// Fingerprint of the secret, recorded in seals so a verifier holding a
  /// different key reports a key mismatch rather than tampering.
  std::string id() const;

  /// nullopt (sealing disabled) when the variable is unset or empty.
  static std::optional<SealKey> from_env(const char* var = kSealKeyEnv);
};

struct IntegritySeal {
  std::string algorithm{kSealAlgorithm};
  std::string key_id;
  std::string mac_hex;
  std::string sealed_at;

  bool operator==(const IntegritySeal&) const = default;
};

nlohmann::ordered_json to_json(const IntegritySeal& seal);
IntegritySeal seal_from_json(const nlohmann::json& j);

fs::path seal_path(const fs::path& file);
std::string utc_now_iso();

enum class VerifyStatus { Valid, Tampered, MissingSeal, KeyMismatch };
std::string_view status_tag(VerifyStatus status);

struct VerifyResult {
  VerifyStatus status = VerifyStatus::MissingSeal;
  std::string expected_mac_hex;  // from the seal
  std::string computed_mac_hex;  // over the current bytes

  bool valid() const { return status == VerifyStatus::Valid; }
};

IntegritySeal compute_seal(std::string_view bytes, const SealKey& key, std::string sealed_at);
VerifyResult verify_bytes(std::string_view bytes, const IntegritySeal& seal, const SealKey& key);

/// Sealed copies of a file, newest last, capped in count.
class SnapshotStore {
 public:
  explicit SnapshotStore(fs::path dir, std::size_t cap = 10);

  struct Entry {
    std::uint64_t seq = 0;
    fs::path data;
    fs::path seal;
  };

  void add(std::string_view bytes, const IntegritySeal& seal);
  std::vector<Entry> entries() const;  // oldest first
  const fs::path& dir() const { return dir_; }
  std::size_t cap() const { return cap_; }

 private:
  fs::path dir_;
  std::size_t cap_;
};

class ForensicLog;

/// Seals the file's current bytes into `<file>.seal` and, when a store is
/// given, keeps a snapshot. Throws IoError.
IntegritySeal seal(const fs::path& file, const SealKey& key, SnapshotStore* store = nullptr,
                   std::string sealed_at = utc_now_iso());

/// Never throws for integrity outcomes; a missing file is reported as
/// tampered against an existing seal.
VerifyResult verify(const fs::path& file, const SealKey& key);

class UnrecoverableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Restores the newest snapshot whose seal verifies and returns the number
/// of entries in the restored JSON array. A file that already verifies is
/// left untouched. Throws UnrecoverableError when no snapshot verifies.
std::size_t rollback(const fs::path& file, const SnapshotStore& store, const SealKey& key,
                     ForensicLog* log = nullptr);

/// Number of elements when `bytes` is a JSON array, else 0.
std::size_t json_array_size(std::string_view bytes);

struct ForensicRecord {
  std::uint64_t index = 0;
  crypto::Digest prev_hash{};
  nlohmann::json payload;
  crypto::Digest hash{};

  /// The exact line written to the log, without the newline.
  std::string canonical_line() const;
};

/// SHA-256(prev_hash || canonical payload bytes).
crypto::Digest chain_hash(const crypto::Digest& prev, const nlohmann::json& payload);

/// Append-only, newline-delimited, hash-chained log. Safe for concurrent
/// appenders within one process.
class ForensicLog {
 public:
  explicit ForensicLog(fs::path path);

  ForensicRecord append(const nlohmann::json& event);
  const fs::path& path() const { return path_; }
  std::uint64_t size() const;

 private:
  fs::path path_;
  mutable std::mutex mu_;
  std::uint64_t next_index_ = 0;
  crypto::Digest last_hash_{};
};

/// Position in a chain: the index and predecessor hash the next record must
/// carry. Lets a caller verify a log tail without rereading the prefix.
struct ChainCursor {
  std::uint64_t index = 0;
  crypto::Digest prev_hash{};
};

struct ChainVerifyResult {
  bool ok = true;
  std::uint64_t records = 0;  // index reached: records verified before the first failure
  std::optional<std::uint64_t> first_bad_index;
  std::string reason;
  ChainCursor end;  // cursor after the last verified record
};

/// `contents` holds whole records starting at `start`.
ChainVerifyResult chain_verify(std::string_view contents, ChainCursor start = {});
ChainVerifyResult chain_verify_file(const fs::path& path);

}  // namespace netagent::memory_guard
