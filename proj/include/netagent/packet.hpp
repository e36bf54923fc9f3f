#pragma once

// Classic capture-file (pcap) reading and writing, synthetic flood
// generation, and rate-controlled replay.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace netagent::packet {

using Micros = std::int64_t;

enum class Protocol : std::uint8_t { Tcp, Udp, Icmp, Other };
std::string_view protocol_name(Protocol p);

namespace tcp_flag {
inline constexpr std::uint8_t Fin = 0x01;
inline constexpr std::uint8_t Syn = 0x02;
inline constexpr std::uint8_t Rst = 0x04;
inline constexpr std::uint8_t Psh = 0x08;
inline constexpr std::uint8_t Ack = 0x10;
inline constexpr std::uint8_t Urg = 0x20;
inline constexpr std::uint8_t All = 0x3f;
}  // namespace tcp_flag

/// IPv4 address in host byte order.
struct Ipv4 {
  std::uint32_t value = 0;

  static Ipv4 parse(std::string_view dotted);
  std::string str() const;
  auto operator<=>(const Ipv4&) const = default;
};

struct PacketRecord {
  std::uint32_t ts_sec = 0;
  std::uint32_t ts_usec = 0;
  std::uint32_t captured_len = 0;
  std::uint32_t original_len = 0;
  Protocol protocol = Protocol::Other;
  Ipv4 src_addr;
  Ipv4 dst_addr;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t tcp_flags = 0;

  Micros micros() const { return Micros{ts_sec} * 1'000'000 + ts_usec; }
  void set_micros(Micros t);
  bool has(std::uint8_t flag) const { return (tcp_flags & flag) == flag; }
  bool operator==(const PacketRecord&) const = default;
};

/// Smallest frame that carries the headers the decoder needs for `p`.
std::uint32_t min_frame_len(Protocol p);

class ParseError : public std::runtime_error {
 public:
  ParseError(std::string what, std::size_t offset);
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

inline constexpr std::uint32_t kMagic = 0xa1b2c3d4;
inline constexpr std::uint32_t kSnapLen = 65535;
inline constexpr std::uint32_t kLinkEthernet = 1;
inline constexpr std::size_t kGlobalHeaderLen = 24;
inline constexpr std::size_t kRecordHeaderLen = 16;

enum class ByteOrder { Little, Big };

/// Accepts either byte order. Unknown payloads decode as Protocol::Other.
/// Throws ParseError (with byte offset) on bad magic, a short global header
/// or a record that overruns the input.
std::vector<PacketRecord> parse_capture(std::span<const std::uint8_t> bytes);
std::vector<PacketRecord> read_capture_file(const std::filesystem::path& path);

/// Throws std::invalid_argument for records the format cannot hold: captured
/// length above the snap length or original length, or a frame too short for
/// the declared protocol.
std::vector<std::uint8_t> write_capture(std::span<const PacketRecord> records,
                                        ByteOrder order = ByteOrder::Little);
void write_capture_file(const std::filesystem::path& path, std::span<const PacketRecord> records);

enum class FloodKind { Icmp, Syn, HttpLike };
FloodKind flood_kind_from_tag(std::string_view tag);

/// Hosts are drawn from base/prefix_len; prefix_len 32 pins a single host.
struct AddressSpec {
  Ipv4 base;
  int prefix_len = 32;
  std::uint16_t port = 0;  // 0 = random ephemeral (sources) / kind default (destinations)
};

struct FloodSpec {
  FloodKind kind = FloodKind::Icmp;
  std::size_t count = 1;
  AddressSpec src;
  AddressSpec dst;
  double rate_pps = 10'000.0;  // timestamp spacing
  Micros start_us = 0;
  std::uint64_t seed = 1;
};

std::vector<PacketRecord> synthesize_flood(const FloodSpec& spec);

enum class ClockMode { Simulated, Wall };

struct ReplayPlan {
  std::filesystem::path source;
  double rate_pps = 10'000.0;
  std::uint32_t iterations = 1;
  ClockMode clock = ClockMode::Simulated;
  Micros start_us = 0;  // simulated time of the first delivery

  void validate() const;
};

struct ReplayStats {
  std::uint64_t packets_sent = 0;
  double elapsed_s = 0.0;
  double achieved_pps = 0.0;
};

/// Receives each packet with its timestamp rewritten to the scheduled send
/// time. Returning false refuses the packet and aborts the replay.
using PacketSink = std::function<bool(const PacketRecord&)>;

class ReplayAborted : public std::runtime_error {
 public:
  ReplayAborted(std::string what, std::uint64_t packets_sent)
      : std::runtime_error(std::move(what)), packets_sent_(packets_sent) {}
  std::uint64_t packets_sent() const noexcept { return packets_sent_; }

 private:
  std::uint64_t packets_sent_;
};

/// Packet k (over all iterations) is scheduled at start + k / rate.
ReplayStats replay(const ReplayPlan& plan, std::span<const PacketRecord> records,
                   const PacketSink& sink);
ReplayStats replay(const ReplayPlan& plan, const PacketSink& sink);

}  // namespace netagent::packet
