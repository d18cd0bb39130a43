#ifndef AMISHIELD_PNG_HPP
#define AMISHIELD_PNG_HPP

// Minimal PNG codec for 8-bit RGB, non-interlaced images. Decoding accepts
// all five scanline filters so files touched by other tools still load.

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "amishield/bytevis.hpp"
#include "amishield/error.hpp"

namespace amishield::png {

namespace detail {

inline constexpr std::array<std::uint8_t, 8> kSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

inline void put_chunk(std::vector<std::uint8_t>& out, const char* type,
                      const std::vector<std::uint8_t>& body) {
  put_be32(out, static_cast<std::uint32_t>(body.size()));
  const std::size_t type_pos = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), body.begin(), body.end());
  const uLong crc = crc32(0L, out.data() + type_pos, static_cast<uInt>(body.size() + 4));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

inline std::uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
  if (pb <= pc) return static_cast<std::uint8_t>(b);
  return static_cast<std::uint8_t>(c);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode(const bytevis::VisImage& img) {
  const std::uint32_t w = img.side, h = img.side;
  std::vector<std::uint8_t> raw;
  raw.reserve(std::size_t{h} * (1 + 3 * std::size_t{w}));
  for (std::uint32_t y = 0; y < h; ++y) {
    raw.push_back(0);  // filter: none
    for (std::uint32_t x = 0; x < w; ++x) {
      const auto& c = img.at(x, y);
      raw.push_back(c.r);
      raw.push_back(c.g);
      raw.push_back(c.b);
    }
  }
  uLongf packed_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_len);
  if (compress2(packed.data(), &packed_len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw Error(ErrorCode::IoFailure, "zlib compression failed");
  }
  packed.resize(packed_len);

  std::vector<std::uint8_t> out(detail::kSignature.begin(), detail::kSignature.end());
  std::vector<std::uint8_t> ihdr;
  detail::put_be32(ihdr, w);
  detail::put_be32(ihdr, h);
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // depth 8, truecolor, deflate, filter 0, no interlace
  detail::put_chunk(out, "IHDR", ihdr);
  detail::put_chunk(out, "IDAT", packed);
  detail::put_chunk(out, "IEND", {});
  return out;
}

/// Decodes a square 8-bit RGB PNG. The curve is not stored in the file, so the
/// caller supplies it (only to_flat_binary depends on it).
inline bytevis::VisImage decode(const std::vector<std::uint8_t>& data,
                                bytevis::Curve curve = bytevis::Curve::hilbert) {
  auto bad = [](const std::string& why) { return Error(ErrorCode::SchemaViolation, "png: " + why); };
  if (data.size() < 8 || !std::equal(detail::kSignature.begin(), detail::kSignature.end(), data.begin())) {
    throw bad("missing signature");
  }
  std::uint32_t w = 0, h = 0;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  bool seen_end = false;
  while (pos + 12 <= data.size() && !seen_end) {
    const std::uint32_t len = detail::get_be32(&data[pos]);
    if (len > data.size() - pos - 12) throw bad("chunk overruns file");
    const std::string type(reinterpret_cast<const char*>(&data[pos + 4]), 4);
    const std::uint8_t* body = &data[pos + 8];
    if (type == "IHDR") {
      if (len != 13) throw bad("bad IHDR");
      w = detail::get_be32(body);
      h = detail::get_be32(body + 4);
      if (body[8] != 8 || body[9] != 2 || body[12] != 0) throw bad("only 8-bit RGB non-interlaced supported");
    } else if (type == "IDAT") {
      idat.insert(idat.end(), body, body + len);
    } else if (type == "IEND") {
      seen_end = true;
    }
    pos += 12 + len;
  }
  if (w == 0 || w != h) throw bad("image must be square and nonempty");
  const std::size_t stride = 3 * std::size_t{w};
  std::vector<std::uint8_t> raw(std::size_t{h} * (stride + 1));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size()) {
    throw bad("corrupt image data");
  }

  bytevis::VisImage img;
  img.side = w;
  img.curve = curve;
  img.pixels.resize(std::size_t{w} * h);
  std::vector<std::uint8_t> prev(stride, 0), cur(stride, 0);
  for (std::uint32_t y = 0; y < h; ++y) {
    const std::uint8_t filter = raw[y * (stride + 1)];
    const std::uint8_t* line = &raw[y * (stride + 1) + 1];
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= 3 ? cur[i - 3] : 0;
      const int b = prev[i];
      const int c = i >= 3 ? prev[i - 3] : 0;
      int pred = 0;
      switch (filter) {
        case 0: pred = 0; break;
        case 1: pred = a; break;
        case 2: pred = b; break;
        case 3: pred = (a + b) / 2; break;
        case 4: pred = detail::paeth(a, b, c); break;
        default: throw bad("unknown scanline filter");
      }
      cur[i] = static_cast<std::uint8_t>(line[i] + pred);
    }
    for (std::uint32_t x = 0; x < w; ++x) img.at(x, y) = {cur[3 * x], cur[3 * x + 1], cur[3 * x + 2]};
    std::swap(prev, cur);
  }
  img.source_length = img.pixels.size();
  return img;
}

inline void write_png(const bytevis::VisImage& img, const std::filesystem::path& path) {
  const auto bytes = encode(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed on " + path.string());
}

inline bytevis::VisImage read_png(const std::filesystem::path& path,
                                  bytevis::Curve curve = bytevis::Curve::hilbert) {
  return decode(pcap::read_file(path), curve);
}

}  // namespace amishield::png

#endif  // AMISHIELD_PNG_HPP
