#ifndef AMISHIELD_PCAP_HPP
#define AMISHIELD_PCAP_HPP

// Classic libpcap capture files (microsecond resolution, Ethernet link type)
// and payload extraction down to the transport layer.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "amishield/error.hpp"

namespace amishield::pcap {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint32_t kMagic = 0xa1b2c3d4;
inline constexpr std::uint32_t kMagicSwapped = 0xd4c3b2a1;
inline constexpr std::uint32_t kLinkTypeEthernet = 1;
inline constexpr std::size_t kGlobalHeaderSize = 24;
inline constexpr std::size_t kRecordHeaderSize = 16;
inline constexpr std::uint32_t kDefaultSnapLen = 65535;

struct Timestamp {
  std::uint32_t seconds = 0;
  std::uint32_t microseconds = 0;

  friend bool operator==(const Timestamp&, const Timestamp&) = default;
  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

struct PacketRecord {
  Timestamp timestamp;
  std::uint32_t captured_length = 0;
  std::uint32_t original_length = 0;
  Bytes link_bytes;

  friend bool operator==(const PacketRecord&, const PacketRecord&) = default;

  static PacketRecord from_frame(Timestamp ts, Bytes frame) {
    PacketRecord rec;
    rec.timestamp = ts;
    rec.captured_length = static_cast<std::uint32_t>(frame.size());
    rec.original_length = rec.captured_length;
    rec.link_bytes = std::move(frame);
    return rec;
  }
};

enum class Label { normal, malware };
enum class Protocol { tcp, udp, other };
enum class ExtractPolicy { per_packet, per_flow };

inline const char* to_string(Label l) { return l == Label::normal ? "normal" : "malware"; }
inline const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::tcp: return "tcp";
    case Protocol::udp: return "udp";
    case Protocol::other: return "other";
  }
  return "other";
}

struct ByteSample {
  Bytes payload;
  std::string source_id;
  std::optional<Label> label;
  Protocol protocol = Protocol::other;

  friend bool operator==(const ByteSample&, const ByteSample&) = default;
};

namespace detail {

inline std::uint16_t load_be16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

inline std::uint32_t load_u32(const std::uint8_t* p, bool swapped) {
  std::uint32_t v = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                    (static_cast<std::uint32_t>(p[2]) << 16) |
                    (static_cast<std::uint32_t>(p[3]) << 24);
  if (swapped) v = __builtin_bswap32(v);
  return v;
}

inline void store_le32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void store_le16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void store_be16(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v >> 8);
  p[1] = static_cast<std::uint8_t>(v);
}

}  // namespace detail

/// Parses an in-memory capture. Both byte orders of the microsecond magic are
/// accepted; the nanosecond variant (0xa1b23c4d) is rejected as BadMagic.
inline std::vector<PacketRecord> parse_capture(std::span<const std::uint8_t> data) {
  if (data.size() < 4) throw Error(ErrorCode::BadMagic, "file shorter than the pcap magic");
  const std::uint32_t magic = detail::load_u32(data.data(), false);
  bool swapped = false;
  if (magic == kMagic) {
    swapped = false;
  } else if (magic == kMagicSwapped) {
    swapped = true;
  } else {
    char buf[32];
    std::snprintf(buf, sizeof buf, "0x%08x", magic);
    throw Error(ErrorCode::BadMagic, std::string("unrecognized magic ") + buf);
  }
  if (data.size() < kGlobalHeaderSize) throw Error(ErrorCode::Truncated, "incomplete global header");

  std::vector<PacketRecord> records;
  std::size_t pos = kGlobalHeaderSize;
  while (pos < data.size()) {
    if (data.size() - pos < kRecordHeaderSize) {
      throw Error(ErrorCode::Truncated, "incomplete record header at offset " + std::to_string(pos));
    }
    const std::uint8_t* h = data.data() + pos;
    PacketRecord rec;
    rec.timestamp.seconds = detail::load_u32(h, swapped);
    rec.timestamp.microseconds = detail::load_u32(h + 4, swapped);
    rec.captured_length = detail::load_u32(h + 8, swapped);
    rec.original_length = detail::load_u32(h + 12, swapped);
    pos += kRecordHeaderSize;
    if (rec.captured_length > data.size() - pos) {
      throw Error(ErrorCode::Truncated, "record at offset " + std::to_string(pos - kRecordHeaderSize) +
                                            " promises " + std::to_string(rec.captured_length) +
                                            " bytes, " + std::to_string(data.size() - pos) + " remain");
    }
    rec.link_bytes.assign(data.begin() + static_cast<std::ptrdiff_t>(pos),
                          data.begin() + static_cast<std::ptrdiff_t>(pos + rec.captured_length));
    pos += rec.captured_length;
    records.push_back(std::move(rec));
  }
  return records;
}

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::IoFailure, "read failed on " + path.string());
  return data;
}

inline std::vector<PacketRecord> read_capture(const std::filesystem::path& path) {
  const Bytes data = read_file(path);
  return parse_capture(data);
}

/// Serializes records in little-endian order with the microsecond magic.
inline Bytes serialize_capture(std::span<const PacketRecord> packets,
                               std::uint32_t snaplen = kDefaultSnapLen) {
  Bytes out;
  out.reserve(kGlobalHeaderSize);
  detail::store_le32(out, kMagic);
  detail::store_le16(out, 2);
  detail::store_le16(out, 4);
  detail::store_le32(out, 0);  // thiszone
  detail::store_le32(out, 0);  // sigfigs
  detail::store_le32(out, snaplen);
  detail::store_le32(out, kLinkTypeEthernet);
  for (const auto& rec : packets) {
    detail::store_le32(out, rec.timestamp.seconds);
    detail::store_le32(out, rec.timestamp.microseconds);
    detail::store_le32(out, static_cast<std::uint32_t>(rec.link_bytes.size()));
    detail::store_le32(out, rec.original_length);
    out.insert(out.end(), rec.link_bytes.begin(), rec.link_bytes.end());
  }
  return out;
}

inline void write_capture(std::span<const PacketRecord> packets, const std::filesystem::path& path) {
  const Bytes data = serialize_capture(packets);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed on " + path.string());
}

// ---------------------------------------------------------------------------
// Frame decoding

inline constexpr std::size_t kEthernetHeader = 14;
inline constexpr std::uint16_t kEtherTypeIPv4 = 0x0800;
inline constexpr std::uint8_t kIpProtoTcp = 6;
inline constexpr std::uint8_t kIpProtoUdp = 17;

struct FlowKey {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::uint16_t sport = 0;
  std::uint16_t dport = 0;
  std::uint8_t proto = 0;

  friend auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

inline std::string format_ipv4(std::uint32_t addr) {
  return std::to_string(addr >> 24) + "." + std::to_string((addr >> 16) & 0xff) + "." +
         std::to_string((addr >> 8) & 0xff) + "." + std::to_string(addr & 0xff);
}

inline std::string flow_id(const FlowKey& k) {
  return "flow:" + format_ipv4(k.src) + ":" + std::to_string(k.sport) + "-" + format_ipv4(k.dst) +
         ":" + std::to_string(k.dport) + "/" + std::to_string(k.proto);
}

struct DecodedFrame {
  Protocol protocol = Protocol::other;
  std::optional<FlowKey> flow;  // set for IPv4 frames
  Bytes payload;
};

inline DecodedFrame decode_frame(std::span<const std::uint8_t> frame) {
  DecodedFrame out;
  if (frame.size() < kEthernetHeader) {
    throw Error(ErrorCode::MalformedHeader, "frame shorter than an Ethernet header");
  }
  const std::uint16_t ethertype = detail::load_be16(frame.data() + 12);
  const auto l3 = frame.subspan(kEthernetHeader);
  if (ethertype != kEtherTypeIPv4) {
    out.payload.assign(l3.begin(), l3.end());
    return out;
  }
  if (l3.size() < 20) throw Error(ErrorCode::MalformedHeader, "IPv4 header truncated");
  const std::uint8_t version = l3[0] >> 4;
  const std::size_t ihl = static_cast<std::size_t>(l3[0] & 0x0f) * 4;
  const std::size_t total_length = detail::load_be16(l3.data() + 2);
  if (version != 4 || ihl < 20) throw Error(ErrorCode::MalformedHeader, "bad IPv4 version/IHL");
  if (total_length < ihl || total_length > l3.size()) {
    throw Error(ErrorCode::MalformedHeader,
                "IPv4 total length " + std::to_string(total_length) + " inconsistent with " +
                    std::to_string(l3.size()) + " captured bytes");
  }
  const std::uint8_t proto = l3[9];
  FlowKey key;
  key.proto = proto;
  key.src = (std::uint32_t{l3[12]} << 24) | (std::uint32_t{l3[13]} << 16) |
            (std::uint32_t{l3[14]} << 8) | l3[15];
  key.dst = (std::uint32_t{l3[16]} << 24) | (std::uint32_t{l3[17]} << 16) |
            (std::uint32_t{l3[18]} << 8) | l3[19];
  // Ethernet trailer padding past total_length is ignored.
  const auto l4 = l3.subspan(ihl, total_length - ihl);

  if (proto == kIpProtoUdp) {
    if (l4.size() < 8) throw Error(ErrorCode::MalformedHeader, "UDP header truncated");
    const std::size_t udp_len = detail::load_be16(l4.data() + 4);
    if (udp_len < 8 || udp_len > l4.size()) {
      throw Error(ErrorCode::MalformedHeader, "UDP length inconsistent with IP payload");
    }
    key.sport = detail::load_be16(l4.data());
    key.dport = detail::load_be16(l4.data() + 2);
    out.protocol = Protocol::udp;
    out.payload.assign(l4.begin() + 8, l4.begin() + static_cast<std::ptrdiff_t>(udp_len));
  } else if (proto == kIpProtoTcp) {
    if (l4.size() < 20) throw Error(ErrorCode::MalformedHeader, "TCP header truncated");
    const std::size_t data_offset = static_cast<std::size_t>(l4[12] >> 4) * 4;
    if (data_offset < 20 || data_offset > l4.size()) {
      throw Error(ErrorCode::MalformedHeader, "TCP data offset inconsistent with IP payload");
    }
    key.sport = detail::load_be16(l4.data());
    key.dport = detail::load_be16(l4.data() + 2);
    out.protocol = Protocol::tcp;
    out.payload.assign(l4.begin() + static_cast<std::ptrdiff_t>(data_offset), l4.end());
  } else {
    out.payload.assign(l4.begin(), l4.end());
  }
  out.flow = key;
  return out;
}

/// Per-packet: one sample per record. Per-flow: payloads sharing a 5-tuple are
/// concatenated in timestamp order (stable for equal timestamps); flows are
/// emitted in order of their first packet. Non-IPv4 frames stay per-packet.
inline std::vector<ByteSample> extract_payloads(std::span<const PacketRecord> packets,
                                                ExtractPolicy policy) {
  std::vector<ByteSample> samples;
  if (policy == ExtractPolicy::per_packet) {
    samples.reserve(packets.size());
    for (std::size_t i = 0; i < packets.size(); ++i) {
      DecodedFrame f = decode_frame(packets[i].link_bytes);
      samples.push_back({std::move(f.payload), "pkt:" + std::to_string(i), std::nullopt, f.protocol});
    }
    return samples;
  }

  std::vector<std::size_t> order(packets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return packets[a].timestamp < packets[b].timestamp;
  });
  std::map<FlowKey, std::size_t> flow_slot;
  for (std::size_t idx : order) {
    DecodedFrame f = decode_frame(packets[idx].link_bytes);
    if (!f.flow) {
      samples.push_back({std::move(f.payload), "pkt:" + std::to_string(idx), std::nullopt, f.protocol});
      continue;
    }
    auto [it, inserted] = flow_slot.try_emplace(*f.flow, samples.size());
    if (inserted) {
      samples.push_back({std::move(f.payload), flow_id(*f.flow), std::nullopt, f.protocol});
    } else {
      auto& dst = samples[it->second].payload;
      dst.insert(dst.end(), f.payload.begin(), f.payload.end());
    }
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Frame construction (simulator output and test fixtures)

struct Endpoint {
  std::uint32_t ip = 0;
  std::uint16_t port = 0;
};

inline constexpr std::uint32_t ipv4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
  return (std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d;
}

namespace detail {

inline std::uint16_t ip_checksum(const std::uint8_t* p, std::size_t n) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i + 1 < n; i += 2) sum += load_be16(p + i);
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

inline Bytes build_frame(Endpoint src, Endpoint dst, std::uint8_t proto,
                         std::span<const std::uint8_t> payload) {
  const std::size_t l4_header = proto == kIpProtoTcp ? 20 : 8;
  const std::size_t ip_total = 20 + l4_header + payload.size();
  Bytes frame(kEthernetHeader + ip_total, 0);
  // locally administered MACs derived from the IPs
  frame[0] = 0x02;
  detail::store_be16(frame.data() + 2, static_cast<std::uint16_t>(dst.ip >> 16));
  detail::store_be16(frame.data() + 4, static_cast<std::uint16_t>(dst.ip));
  frame[6] = 0x02;
  detail::store_be16(frame.data() + 8, static_cast<std::uint16_t>(src.ip >> 16));
  detail::store_be16(frame.data() + 10, static_cast<std::uint16_t>(src.ip));
  detail::store_be16(frame.data() + 12, kEtherTypeIPv4);

  std::uint8_t* ip = frame.data() + kEthernetHeader;
  ip[0] = 0x45;
  detail::store_be16(ip + 2, static_cast<std::uint16_t>(ip_total));
  ip[8] = 64;
  ip[9] = proto;
  for (int i = 0; i < 4; ++i) {
    ip[12 + i] = static_cast<std::uint8_t>(src.ip >> (24 - 8 * i));
    ip[16 + i] = static_cast<std::uint8_t>(dst.ip >> (24 - 8 * i));
  }
  detail::store_be16(ip + 10, ip_checksum(ip, 20));

  std::uint8_t* l4 = ip + 20;
  detail::store_be16(l4, src.port);
  detail::store_be16(l4 + 2, dst.port);
  if (proto == kIpProtoTcp) {
    l4[12] = 5 << 4;
    l4[13] = 0x18;  // PSH|ACK
    detail::store_be16(l4 + 14, 65535);
  } else {
    detail::store_be16(l4 + 4, static_cast<std::uint16_t>(8 + payload.size()));
  }
  std::copy(payload.begin(), payload.end(), l4 + l4_header);
  // Ethernet minimum frame (without FCS) is 60 bytes.
  if (frame.size() < 60) frame.resize(60, 0);
  return frame;
}

}  // namespace detail

inline Bytes make_udp_frame(Endpoint src, Endpoint dst, std::span<const std::uint8_t> payload) {
  return detail::build_frame(src, dst, kIpProtoUdp, payload);
}

inline Bytes make_tcp_frame(Endpoint src, Endpoint dst, std::span<const std::uint8_t> payload) {
  return detail::build_frame(src, dst, kIpProtoTcp, payload);
}

}  // namespace amishield::pcap

#endif  // AMISHIELD_PCAP_HPP
