#pragma once

// Thin wrappers over OpenSSL's SHA-256 and HMAC-SHA-256.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace netagent::crypto {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> data);
Digest sha256(std::string_view data);
Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> data);
Digest hmac_sha256(std::string_view key, std::string_view data);

/// Constant-time comparison.
bool equal(const Digest& a, const Digest& b);

std::string to_hex(std::span<const std::uint8_t> bytes);
/// Strict lowercase hex of exactly 32 bytes; anything else is nullopt.
std::optional<Digest> digest_from_hex(std::string_view hex);

inline std::span<const std::uint8_t> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace netagent::crypto
