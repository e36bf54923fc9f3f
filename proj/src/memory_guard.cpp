#include "netagent/memory_guard.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>

#include "netagent/errors.hpp"

namespace netagent::memory_guard {

namespace {

std::mutex& path_mutex(const fs::path& file) {
  static std::mutex registry_mu;
  static std::map<std::string, std::mutex> locks;
  std::lock_guard lock(registry_mu);
  return locks[fs::absolute(file).lexically_normal().string()];
}

std::optional<IntegritySeal> read_seal(const fs::path& file) {
  const auto sp = seal_path(file);
  if (!fs::exists(sp)) return std::nullopt;
  return seal_from_json(nlohmann::json::parse(read_file(sp)));
}

VerifyResult verify_unlocked(const fs::path& file, const SealKey& key) {
  VerifyResult result;
  std::optional<IntegritySeal> s;
  try {
    s = read_seal(file);
  } catch (const std::exception&) {
    result.status = VerifyStatus::Tampered;  // unreadable seal is not trusted
    return result;
  }
  if (!s) {
    result.status = VerifyStatus::MissingSeal;
    return result;
  }
  if (!fs::exists(file)) {
    result.status = VerifyStatus::Tampered;
    result.expected_mac_hex = s->mac_hex;
    return result;
  }
  return verify_bytes(read_file(file), *s, key);
}

constexpr const char* kSnapSuffix = ".snap";

}  // namespace

std::string SealKey::id() const {
  const auto d = crypto::sha256("netagent-seal-key:" + secret);
  return crypto::to_hex(std::span(d).first(8));
}

std::optional<SealKey> SealKey::from_env(const char* var) {
  const char* v = std::getenv(var);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return SealKey{v};
}

nlohmann::ordered_json to_json(const IntegritySeal& s) {
  return {{"algorithm", s.algorithm}, {"key_id", s.key_id}, {"mac_hex", s.mac_hex}, {"sealed_at", s.sealed_at}};
}

IntegritySeal seal_from_json(const nlohmann::json& j) {
  IntegritySeal s;
  s.algorithm = j.at("algorithm").get<std::string>();
  s.key_id = j.at("key_id").get<std::string>();
  s.mac_hex = j.at("mac_hex").get<std::string>();
  s.sealed_at = j.at("sealed_at").get<std::string>();
  return s;
}

fs::path seal_path(const fs::path& file) {
  auto p = file;
  p += ".seal";
  return p;
}

std::string utc_now_iso() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string_view status_tag(VerifyStatus status) {
  switch (status) {
    case VerifyStatus::Valid: return "valid";
    case VerifyStatus::Tampered: return "tampered";
    case VerifyStatus::MissingSeal: return "missing_seal";
    case VerifyStatus::KeyMismatch: return "key_mismatch";
  }
  return "tampered";
}

IntegritySeal compute_seal(std::string_view bytes, const SealKey& key, std::string sealed_at) {
  const auto mac = crypto::hmac_sha256(key.secret, bytes);
  return IntegritySeal{std::string(kSealAlgorithm), key.id(), crypto::to_hex(mac), std::move(sealed_at)};
}

VerifyResult verify_bytes(std::string_view bytes, const IntegritySeal& seal, const SealKey& key) {
  VerifyResult result;
  result.expected_mac_hex = seal.mac_hex;
  if (seal.algorithm != kSealAlgorithm) {
    result.status = VerifyStatus::Tampered;
    return result;
  }
  if (seal.key_id != key.id()) {
    result.status = VerifyStatus::KeyMismatch;
    return result;
  }
  const auto mac = crypto::hmac_sha256(key.secret, bytes);
  result.computed_mac_hex = crypto::to_hex(mac);
  const auto expected = crypto::digest_from_hex(seal.mac_hex);
  result.status = expected && crypto::equal(*expected, mac) ? VerifyStatus::Valid : VerifyStatus::Tampered;
  return result;
}

SnapshotStore::SnapshotStore(fs::path dir, std::size_t cap) : dir_(std::move(dir)), cap_(std::max<std::size_t>(cap, 1)) {}

std::vector<SnapshotStore::Entry> SnapshotStore::entries() const {
  std::vector<Entry> out;
  if (!fs::is_directory(dir_)) return out;
  for (const auto& de : fs::directory_iterator(dir_)) {
    const auto name = de.path().filename().string();
    if (de.path().extension() != kSnapSuffix) continue;
    const auto stem = de.path().stem().string();
    try {
      std::size_t used = 0;
      const auto seq = std::stoull(stem, &used);
      if (used != stem.size()) continue;
      out.push_back({seq, de.path(), seal_path(de.path())});
    } catch (const std::exception&) {
      continue;
    }
  }
  std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) { return a.seq < b.seq; });
  return out;
}

void SnapshotStore::add(std::string_view bytes, const IntegritySeal& seal) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw IoError(dir_, ec.message());
  auto existing = entries();
  const std::uint64_t seq = existing.empty() ? 1 : existing.back().seq + 1;
  char name[32];
  std::snprintf(name, sizeof name, "%08llu", static_cast<unsigned long long>(seq));
  const auto data = dir_ / (std::string(name) + kSnapSuffix);
  write_file_atomic(data, bytes);
  write_file_atomic(seal_path(data), to_json(seal).dump(2) + "\n");
  existing.push_back({seq, data, seal_path(data)});
  while (existing.size() > cap_) {
    fs::remove(existing.front().data, ec);
    fs::remove(existing.front().seal, ec);
    existing.erase(existing.begin());
  }
}

IntegritySeal seal(const fs::path& file, const SealKey& key, SnapshotStore* store, std::string sealed_at) {
  std::lock_guard lock(path_mutex(file));
  const auto bytes = read_file(file);
  auto s = compute_seal(bytes, key, std::move(sealed_at));
  write_file_atomic(seal_path(file), to_json(s).dump(2) + "\n");
  if (store != nullptr) store->add(bytes, s);
  return s;
}

VerifyResult verify(const fs::path& file, const SealKey& key) {
  std::lock_guard lock(path_mutex(file));
  return verify_unlocked(file, key);
}

std::size_t json_array_size(std::string_view bytes) {
  const auto doc = nlohmann::json::parse(bytes, nullptr, false);
  return doc.is_array() ? doc.size() : 0;
}

std::size_t rollback(const fs::path& file, const SnapshotStore& store, const SealKey& key, ForensicLog* log) {
  std::lock_guard lock(path_mutex(file));
  const auto current = verify_unlocked(file, key);
  if (current.valid()) {
    const auto n = json_array_size(read_file(file));
    if (log) {
      log->append({{"event", "rollback"}, {"file", file.string()}, {"outcome", "noop"}, {"entries", n}});
    }
    return n;
  }

  const auto snaps = store.entries();
  for (auto it = snaps.rbegin(); it != snaps.rend(); ++it) {
    try {
      const auto bytes = read_file(it->data);
      const auto s = seal_from_json(nlohmann::json::parse(read_file(it->seal)));
      if (!verify_bytes(bytes, s, key).valid()) continue;
      write_file_atomic(file, bytes);
      write_file_atomic(seal_path(file), to_json(s).dump(2) + "\n");
      const auto n = json_array_size(bytes);
      if (log) {
        log->append({{"event", "rollback"},
                     {"file", file.string()},
                     {"outcome", "restored"},
                     {"snapshot", it->data.filename().string()},
                     {"previous_status", status_tag(current.status)},
                     {"entries", n}});
      }
      return n;
    } catch (const IoError&) {
      continue;
    } catch (const nlohmann::json::exception&) {
      continue;
    }
  }
  if (log) {
    log->append({{"event", "rollback"}, {"file", file.string()}, {"outcome", "unrecoverable"},
                 {"snapshots_checked", snaps.size()}});
  }
  throw UnrecoverableError("no verifiable snapshot for " + file.string());
}

crypto::Digest chain_hash(const crypto::Digest& prev, const nlohmann::json& payload) {
  std::string buf(prev.begin(), prev.end());
  buf += payload.dump();
  return crypto::sha256(buf);
}

std::string ForensicRecord::canonical_line() const {
  nlohmann::ordered_json j;
  j["index"] = index;
  j["prev_hash_hex"] = crypto::to_hex(prev_hash);
  j["payload"] = payload;
  j["hash_hex"] = crypto::to_hex(hash);
  return j.dump();
}

ForensicLog::ForensicLog(fs::path path) : path_(std::move(path)) {
  if (!fs::exists(path_)) return;
  std::ifstream in(path_, std::ios::binary);
  std::string line;
  std::string last;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      last = line;
      ++next_index_;
    }
  }
  if (!last.empty()) {
    const auto j = nlohmann::json::parse(last, nullptr, false);
    if (j.is_object() && j.contains("hash_hex") && j["hash_hex"].is_string()) {
      if (auto d = crypto::digest_from_hex(j["hash_hex"].get<std::string>())) last_hash_ = *d;
    }
  }
}

ForensicRecord ForensicLog::append(const nlohmann::json& event) {
  std::lock_guard lock(mu_);
  ForensicRecord rec;
  rec.index = next_index_;
  rec.prev_hash = last_hash_;
  rec.payload = event;
  rec.hash = chain_hash(rec.prev_hash, rec.payload);
  if (path_.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path_.parent_path(), ec);
  }
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw IoError(path_, "cannot open forensic log");
  out << rec.canonical_line() << '\n';
  out.flush();
  if (!out) throw IoError(path_, "forensic append failed");
  ++next_index_;
  last_hash_ = rec.hash;
  return rec;
}

std::uint64_t ForensicLog::size() const {
  std::lock_guard lock(mu_);
  return next_index_;
}

ChainVerifyResult chain_verify(std::string_view contents, ChainCursor start) {
  ChainVerifyResult result;
  crypto::Digest prev = start.prev_hash;
  std::uint64_t index = start.index;
  result.records = index;
  result.end = start;
  std::size_t pos = 0;
  const auto fail = [&](std::string reason) {
    result.ok = false;
    result.first_bad_index = index;
    result.reason = std::move(reason);
    return result;
  };
  constexpr std::string_view kHashKey = ",\"hash_hex\":\"";
  constexpr std::size_t kHexLen = 64;

  // A record is valid only if it is byte-identical to canonical_line() for
  // the expected index and predecessor, so the fixed parts are matched
  // literally and only the payload is parsed.
  while (pos < contents.size()) {
    const auto nl = contents.find('\n', pos);
    if (nl == std::string_view::npos) return fail("record not newline-terminated");
    std::string_view line = contents.substr(pos, nl - pos);
    pos = nl + 1;

    const std::string head = "{\"index\":" + std::to_string(index) + ",\"prev_hash_hex\":\"";
    if (!line.starts_with(head)) {
      return fail(line.starts_with("{\"index\":") ? "index out of sequence" : "malformed record");
    }
    line.remove_prefix(head.size());
    if (line.size() < kHexLen || line.substr(0, kHexLen) != crypto::to_hex(prev)) {
      return fail("prev_hash does not match predecessor");
    }
    line.remove_prefix(kHexLen);
    constexpr std::string_view kPayloadKey = "\",\"payload\":";
    const std::size_t tail_len = kHashKey.size() + kHexLen + 2;
    if (!line.starts_with(kPayloadKey) || line.size() < kPayloadKey.size() + tail_len) {
      return fail("malformed record");
    }
    const auto tail = line.substr(line.size() - tail_len);
    if (!tail.starts_with(kHashKey) || !tail.ends_with("\"}")) return fail("malformed record");
    const auto hash = crypto::digest_from_hex(tail.substr(kHashKey.size(), kHexLen));
    if (!hash) return fail("malformed digest");
    const auto payload_text =
        line.substr(kPayloadKey.size(), line.size() - kPayloadKey.size() - tail_len);
    const auto payload = nlohmann::json::parse(payload_text, nullptr, false);
    if (payload.is_discarded()) return fail("malformed record");
    if (payload.dump() != payload_text) return fail("non-canonical encoding");

    std::string buf(prev.begin(), prev.end());
    buf += payload_text;
    if (!crypto::equal(crypto::sha256(buf), *hash)) return fail("hash mismatch");
    if (crypto::to_hex(*hash) != tail.substr(kHashKey.size(), kHexLen)) return fail("non-canonical encoding");

    prev = *hash;
    ++index;
    result.records = index;
    result.end = {index, prev};
  }
  return result;
}

ChainVerifyResult chain_verify_file(const fs::path& path) {
  if (!fs::exists(path)) return {};
  return chain_verify(read_file(path));
}

}  // namespace netagent::memory_guard
