#include "netagent/packet.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <random>
#include <thread>

#include "netagent/errors.hpp"

namespace netagent::packet {

namespace {

constexpr std::uint16_t kEtherIpv4 = 0x0800;
constexpr std::uint16_t kEtherVlan = 0x8100;
constexpr std::size_t kEthLen = 14;
constexpr std::size_t kIpLen = 20;
constexpr std::size_t kTcpLen = 20;
constexpr std::size_t kUdpLen = 8;
constexpr std::size_t kIcmpLen = 8;

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, bool big) : bytes_(bytes), big_(big) {}

  std::uint32_t u32(std::size_t at) const {
    const auto* p = bytes_.data() + at;
    if (big_) return std::uint32_t{p[0]} << 24 | std::uint32_t{p[1]} << 16 | std::uint32_t{p[2]} << 8 | p[3];
    return std::uint32_t{p[3]} << 24 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[1]} << 8 | p[0];
  }

 private:
  std::span<const std::uint8_t> bytes_;
  bool big_;
};

std::uint16_t be16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] << 8 | p[1]); }
std::uint32_t be32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} << 24 | std::uint32_t{p[1]} << 16 | std::uint32_t{p[2]} << 8 | p[3];
}

class Writer {
 public:
  explicit Writer(ByteOrder order) : big_(order == ByteOrder::Big) {}

  void u32(std::uint32_t v) {
    if (big_) {
      be32(v);
    } else {
      for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  void u16(std::uint16_t v) {
    if (big_) {
      be16(v);
    } else {
      out_.push_back(static_cast<std::uint8_t>(v));
      out_.push_back(static_cast<std::uint8_t>(v >> 8));
    }
  }
  void be16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v));
  }
  void be32(std::uint32_t v) {
    for (int i = 3; i >= 0; --i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void byte(std::uint8_t v) { out_.push_back(v); }
  void zeros(std::size_t n) { out_.insert(out_.end(), n, 0); }
  std::size_t size() const { return out_.size(); }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  bool big_;
  std::vector<std::uint8_t> out_;
};

std::uint16_t ones_complement(std::span<const std::uint8_t> data) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i + 1 < data.size(); i += 2) sum += be16(&data[i]);
  if (data.size() % 2) sum += std::uint32_t{data.back()} << 8;
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

std::uint8_t ip_proto(Protocol p) {
  switch (p) {
    case Protocol::Tcp: return 6;
    case Protocol::Udp: return 17;
    case Protocol::Icmp: return 1;
    case Protocol::Other: break;
  }
  return 0;
}

void write_frame(std::vector<std::uint8_t>& out, const PacketRecord& r) {
  const auto start = out.size();
  if (r.protocol == Protocol::Other) {
    out.insert(out.end(), r.captured_len, 0);
    return;
  }
  Writer w(ByteOrder::Big);
  // Ethernet: locally administered MACs, IPv4 ethertype.
  for (std::uint8_t b : {0x02, 0, 0, 0, 0, 0x02, 0x02, 0, 0, 0, 0, 0x01}) w.byte(b);
  w.be16(kEtherIpv4);

  const auto ip_total = static_cast<std::uint16_t>(
      std::min<std::uint32_t>(std::max<std::uint32_t>(r.original_len, kEthLen) - kEthLen, 0xffff));
  w.byte(0x45);
  w.byte(0);
  w.be16(ip_total);
  w.be16(0);       // identification
  w.be16(0x4000);  // DF
  w.byte(64);
  w.byte(ip_proto(r.protocol));
  w.be16(0);  // checksum, patched below
  w.be32(r.src_addr.value);
  w.be32(r.dst_addr.value);
  auto& frame = w.bytes();
  const auto csum = ones_complement(std::span(frame).subspan(kEthLen, kIpLen));
  frame[kEthLen + 10] = static_cast<std::uint8_t>(csum >> 8);
  frame[kEthLen + 11] = static_cast<std::uint8_t>(csum);

  switch (r.protocol) {
    case Protocol::Tcp:
      w.be16(r.src_port);
      w.be16(r.dst_port);
      w.be32(0);
      w.be32(0);
      w.byte(5 << 4);
      w.byte(r.tcp_flags & tcp_flag::All);
      w.be16(0xffff);
      w.be32(0);
      break;
    case Protocol::Udp: {
      w.be16(r.src_port);
      w.be16(r.dst_port);
      const auto udp_len = static_cast<std::uint16_t>(
          std::min<std::uint32_t>(ip_total >= kIpLen ? ip_total - kIpLen : 0, 0xffff));
      w.be16(udp_len);
      w.be16(0);
      break;
    }
    case Protocol::Icmp:
      w.byte(8);  // echo request
      w.byte(0);
      w.be16(0xf7ff);
      w.be32(0);
      break;
    case Protocol::Other: break;
  }
  out.insert(out.end(), frame.begin(), frame.end());
  out.resize(start + r.captured_len, 0);
}

PacketRecord decode_frame(std::span<const std::uint8_t> f, PacketRecord rec) {
  rec.protocol = Protocol::Other;
  std::size_t off = 12;
  if (f.size() < kEthLen) return rec;
  auto ether = be16(&f[off]);
  off += 2;
  if (ether == kEtherVlan) {
    if (f.size() < off + 4) return rec;
    ether = be16(&f[off + 2]);
    off += 4;
  }
  if (ether != kEtherIpv4 || f.size() < off + kIpLen) return rec;
  const auto* ip = &f[off];
  const std::size_t ihl = (ip[0] & 0x0f) * 4u;
  if ((ip[0] >> 4) != 4 || ihl < kIpLen || f.size() < off + ihl) return rec;
  if ((be16(ip + 6) & 0x1fff) != 0) return rec;  // non-first fragment carries no L4 header

  const auto* l4 = ip + ihl;
  const std::size_t l4_avail = f.size() - off - ihl;
  PacketRecord out = rec;
  out.src_addr = Ipv4{be32(ip + 12)};
  out.dst_addr = Ipv4{be32(ip + 16)};
  switch (ip[9]) {
    case 6:
      if (l4_avail < kTcpLen) return rec;
      out.protocol = Protocol::Tcp;
      out.src_port = be16(l4);
      out.dst_port = be16(l4 + 2);
      out.tcp_flags = l4[13] & tcp_flag::All;
      return out;
    case 17:
      if (l4_avail < kUdpLen) return rec;
      out.protocol = Protocol::Udp;
      out.src_port = be16(l4);
      out.dst_port = be16(l4 + 2);
      return out;
    case 1:
      if (l4_avail < kIcmpLen) return rec;
      out.protocol = Protocol::Icmp;
      return out;
    default:
      return rec;
  }
}

std::uint32_t host_in(const AddressSpec& spec, std::mt19937_64& rng) {
  const int prefix = std::clamp(spec.prefix_len, 0, 32);
  if (prefix == 32) return spec.base.value;
  const std::uint32_t host_bits = prefix == 0 ? 0xffffffffu : (0xffffffffu >> prefix);
  const std::uint32_t net = spec.base.value & ~host_bits;
  return net | (static_cast<std::uint32_t>(rng()) & host_bits);
}

}  // namespace

std::string_view protocol_name(Protocol p) {
  switch (p) {
    case Protocol::Tcp: return "tcp";
    case Protocol::Udp: return "udp";
    case Protocol::Icmp: return "icmp";
    case Protocol::Other: return "other";
  }
  return "other";
}

Ipv4 Ipv4::parse(std::string_view dotted) {
  std::uint32_t value = 0;
  const char* p = dotted.data();
  const char* end = dotted.data() + dotted.size();
  for (int i = 0; i < 4; ++i) {
    unsigned octet = 0;
    auto [next, ec] = std::from_chars(p, end, octet);
    if (ec != std::errc{} || octet > 255 || next == p) {
      throw std::invalid_argument("bad IPv4 address: " + std::string(dotted));
    }
    value = value << 8 | octet;
    p = next;
    if (i < 3) {
      if (p == end || *p != '.') throw std::invalid_argument("bad IPv4 address: " + std::string(dotted));
      ++p;
    }
  }
  if (p != end) throw std::invalid_argument("bad IPv4 address: " + std::string(dotted));
  return Ipv4{value};
}

std::string Ipv4::str() const {
  return std::to_string(value >> 24) + "." + std::to_string((value >> 16) & 0xff) + "." +
         std::to_string((value >> 8) & 0xff) + "." + std::to_string(value & 0xff);
}

void PacketRecord::set_micros(Micros t) {
  ts_sec = static_cast<std::uint32_t>(t / 1'000'000);
  ts_usec = static_cast<std::uint32_t>(t % 1'000'000);
}

std::uint32_t min_frame_len(Protocol p) {
  switch (p) {
    case Protocol::Tcp: return kEthLen + kIpLen + kTcpLen;
    case Protocol::Udp: return kEthLen + kIpLen + kUdpLen;
    case Protocol::Icmp: return kEthLen + kIpLen + kIcmpLen;
    case Protocol::Other: return 0;
  }
  return 0;
}

ParseError::ParseError(std::string what, std::size_t offset)
    : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

std::vector<PacketRecord> parse_capture(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kGlobalHeaderLen) throw ParseError("truncated global header", bytes.size());
  bool big = false;
  if (Reader(bytes, false).u32(0) == kMagic) {
    big = false;
  } else if (Reader(bytes, true).u32(0) == kMagic) {
    big = true;
  } else {
    throw ParseError("bad capture magic", 0);
  }
  const Reader rd(bytes, big);
  if (const auto link = rd.u32(20); link != kLinkEthernet) {
    throw ParseError("unsupported link type " + std::to_string(link), 20);
  }

  std::vector<PacketRecord> records;
  std::size_t off = kGlobalHeaderLen;
  while (off < bytes.size()) {
    if (bytes.size() - off < kRecordHeaderLen) throw ParseError("truncated record header", off);
    PacketRecord rec;
    rec.ts_sec = rd.u32(off);
    rec.ts_usec = rd.u32(off + 4);
    rec.captured_len = rd.u32(off + 8);
    rec.original_len = rd.u32(off + 12);
    if (rec.captured_len > rec.original_len) {
      throw ParseError("captured length exceeds original length", off);
    }
    if (rec.captured_len > bytes.size() - off - kRecordHeaderLen) {
      throw ParseError("record overruns capture", off);
    }
    const auto frame = bytes.subspan(off + kRecordHeaderLen, rec.captured_len);
    records.push_back(decode_frame(frame, rec));
    off += kRecordHeaderLen + rec.captured_len;
  }
  return records;
}

std::vector<PacketRecord> read_capture_file(const std::filesystem::path& path) {
  const auto data = read_file(path);
  return parse_capture(
      std::span(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

std::vector<std::uint8_t> write_capture(std::span<const PacketRecord> records, ByteOrder order) {
  Writer w(order);
  w.u32(kMagic);
  w.u16(2);
  w.u16(4);
  w.u32(0);  // thiszone
  w.u32(0);  // sigfigs
  w.u32(kSnapLen);
  w.u32(kLinkEthernet);

  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto where = " (record " + std::to_string(i) + ")";
    if (r.captured_len > kSnapLen) {
      throw std::invalid_argument("captured length exceeds snap length" + where);
    }
    if (r.captured_len > r.original_len) {
      throw std::invalid_argument("captured length exceeds original length" + where);
    }
    if (r.captured_len < min_frame_len(r.protocol)) {
      throw std::invalid_argument("frame too short for protocol" + where);
    }
    w.u32(r.ts_sec);
    w.u32(r.ts_usec);
    w.u32(r.captured_len);
    w.u32(r.original_len);
    write_frame(w.bytes(), r);
  }
  return std::move(w.bytes());
}

void write_capture_file(const std::filesystem::path& path, std::span<const PacketRecord> records) {
  const auto bytes = write_capture(records);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

FloodKind flood_kind_from_tag(std::string_view tag) {
  if (tag == "icmp") return FloodKind::Icmp;
  if (tag == "syn") return FloodKind::Syn;
  if (tag == "http_like" || tag == "http") return FloodKind::HttpLike;
  throw std::invalid_argument("unknown flood kind: " + std::string(tag));
}

std::vector<PacketRecord> synthesize_flood(const FloodSpec& spec) {
  if (spec.count == 0) throw std::invalid_argument("flood count must be at least 1");
  if (!(spec.rate_pps > 0)) throw std::invalid_argument("flood rate must be positive");
  std::mt19937_64 rng(spec.seed);
  std::vector<PacketRecord> out;
  out.reserve(spec.count);
  for (std::size_t k = 0; k < spec.count; ++k) {
    PacketRecord r;
    r.set_micros(spec.start_us + std::llround(static_cast<long double>(k) * 1e6L / spec.rate_pps));
    r.src_addr = Ipv4{host_in(spec.src, rng)};
    r.dst_addr = Ipv4{host_in(spec.dst, rng)};
    switch (spec.kind) {
      case FloodKind::Icmp:
        r.protocol = Protocol::Icmp;
        r.captured_len = r.original_len = 98;  // 56-byte echo payload
        break;
      case FloodKind::Syn:
        r.protocol = Protocol::Tcp;
        r.src_port = spec.src.port ? spec.src.port : static_cast<std::uint16_t>(1024 + rng() % 64512);
        r.dst_port = spec.dst.port ? spec.dst.port : 80;
        r.tcp_flags = tcp_flag::Syn;
        r.captured_len = r.original_len = 60;
        break;
      case FloodKind::HttpLike:
        // Keep-alive GET bursts in the style of HTTP DoS tools.
        r.protocol = Protocol::Tcp;
        r.src_port = spec.src.port ? spec.src.port : static_cast<std::uint16_t>(1024 + rng() % 64512);
        r.dst_port = spec.dst.port ? spec.dst.port : 80;
        r.tcp_flags = tcp_flag::Psh | tcp_flag::Ack;
        r.captured_len = r.original_len = static_cast<std::uint32_t>(200 + rng() % 400);
        break;
    }
    out.push_back(r);
  }
  return out;
}

void ReplayPlan::validate() const {
  if (!(rate_pps > 0) || !std::isfinite(rate_pps)) {
    throw std::invalid_argument("replay rate must be a positive number of packets per second");
  }
  if (iterations < 1) throw std::invalid_argument("replay iterations must be at least 1");
}

ReplayStats replay(const ReplayPlan& plan, std::span<const PacketRecord> records,
                   const PacketSink& sink) {
  plan.validate();
  ReplayStats stats;
  if (records.empty()) return stats;

  const auto wall_start = std::chrono::steady_clock::now();
  std::uint64_t k = 0;
  for (std::uint32_t it = 0; it < plan.iterations; ++it) {
    for (const auto& original : records) {
      const auto offset_us = std::llround(static_cast<long double>(k) * 1e6L / plan.rate_pps);
      if (plan.clock == ClockMode::Wall) {
        std::this_thread::sleep_until(wall_start + std::chrono::microseconds(offset_us));
      }
      PacketRecord pkt = original;
      pkt.set_micros(plan.start_us + offset_us);
      if (!sink(pkt)) throw ReplayAborted("packet sink refused delivery", stats.packets_sent);
      ++stats.packets_sent;
      ++k;
    }
  }

  if (plan.clock == ClockMode::Simulated) {
    stats.elapsed_s = static_cast<double>(stats.packets_sent) / plan.rate_pps;
  } else {
    const auto wall = std::chrono::steady_clock::now() - wall_start;
    stats.elapsed_s = std::max(std::chrono::duration<double>(wall).count(),
                               static_cast<double>(stats.packets_sent - 1) / plan.rate_pps);
  }
  stats.achieved_pps = stats.elapsed_s > 0 ? static_cast<double>(stats.packets_sent) / stats.elapsed_s : 0.0;
  return stats;
}

ReplayStats replay(const ReplayPlan& plan, const PacketSink& sink) {
  plan.validate();
  const auto records = read_capture_file(plan.source);
  return replay(plan, records, sink);
}

}  // namespace netagent::packet
