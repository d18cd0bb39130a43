#ifndef AMISHIELD_BYTEVIS_HPP
#define AMISHIELD_BYTEVIS_HPP

// Binary visualization: each byte gets one of five color classes and is
// placed on a square grid by a space-filling curve.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "amishield/error.hpp"
#include "amishield/pcap.hpp"

namespace amishield::bytevis {

enum class ColorTag : std::uint8_t { black = 0, white = 1, blue = 2, green = 3, red = 4 };
inline constexpr std::size_t kColorClassCount = 5;

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct ColorClass {
  ColorTag tag;
  Rgb rgb;

  friend bool operator==(const ColorClass&, const ColorClass&) = default;
};

inline constexpr std::array<Rgb, kColorClassCount> kPalette{{
    {0, 0, 0},        // black: 0x00
    {255, 255, 255},  // white: 0xff
    {0, 0, 255},      // blue: printable ASCII
    {0, 255, 0},      // green: control
    {255, 0, 0},      // red: extended
}};

inline constexpr std::string_view to_string(ColorTag t) {
  constexpr std::array<std::string_view, kColorClassCount> names{"black", "white", "blue", "green",
                                                                 "red"};
  return names[static_cast<std::size_t>(t)];
}

inline constexpr ColorTag tag_of(std::uint8_t b) {
  if (b == 0x00) return ColorTag::black;
  if (b == 0xff) return ColorTag::white;
  if (b < 0x20 || b == 0x7f) return ColorTag::green;
  if (b < 0x7f) return ColorTag::blue;
  return ColorTag::red;
}

inline constexpr ColorClass classify_byte(std::uint8_t b) {
  const ColorTag t = tag_of(b);
  return {t, kPalette[static_cast<std::size_t>(t)]};
}

/// Inverse of the palette; pixels outside it have no class.
inline std::optional<ColorTag> tag_of_rgb(Rgb c) {
  for (std::size_t i = 0; i < kColorClassCount; ++i) {
    if (kPalette[i] == c) return static_cast<ColorTag>(i);
  }
  return std::nullopt;
}

enum class Curve { hilbert, zigzag };

inline std::string_view to_string(Curve c) { return c == Curve::hilbert ? "hilbert" : "zigzag"; }

inline Curve parse_curve(std::string_view s) {
  if (s == "hilbert") return Curve::hilbert;
  if (s == "zigzag") return Curve::zigzag;
  throw Error(ErrorCode::SchemaViolation, "unknown curve '" + std::string(s) + "'");
}

struct Point {
  std::uint32_t x = 0;  // column
  std::uint32_t y = 0;  // row

  friend bool operator==(const Point&, const Point&) = default;
};

inline constexpr unsigned kMaxOrder = 15;

/// Maps a cell index to grid coordinates. Hilbert order 1 visits
/// (0,0),(0,1),(1,1),(1,0); zigzag walks rows, reversing odd ones.
inline Point curve_point(std::uint64_t index, unsigned order, Curve curve) {
  if (order > kMaxOrder) throw Error(ErrorCode::IndexOutOfRange, "curve order too large");
  const std::uint64_t side = std::uint64_t{1} << order;
  if (index >= side * side) {
    throw Error(ErrorCode::IndexOutOfRange,
                "index " + std::to_string(index) + " outside a " + std::to_string(side) + "x" +
                    std::to_string(side) + " grid");
  }
  if (curve == Curve::zigzag) {
    const std::uint64_t row = index / side;
    std::uint64_t col = index % side;
    if (row % 2 == 1) col = side - 1 - col;
    return {static_cast<std::uint32_t>(col), static_cast<std::uint32_t>(row)};
  }
  std::uint64_t x = 0, y = 0, t = index;
  for (std::uint64_t s = 1; s < side; s *= 2) {
    const std::uint64_t rx = 1 & (t / 2);
    const std::uint64_t ry = 1 & (t ^ rx);
    if (ry == 0) {
      if (rx == 1) {
        x = s - 1 - x;
        y = s - 1 - y;
      }
      std::swap(x, y);
    }
    x += s * rx;
    y += s * ry;
    t /= 4;
  }
  return {static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y)};
}

struct VisImage {
  std::uint32_t side = 0;
  std::vector<Rgb> pixels;  // row-major, side*side
  Curve curve = Curve::hilbert;
  std::size_t source_length = 0;  // real bytes in the chunk, before padding

  const Rgb& at(std::uint32_t x, std::uint32_t y) const { return pixels[std::size_t{y} * side + x]; }
  Rgb& at(std::uint32_t x, std::uint32_t y) { return pixels[std::size_t{y} * side + x]; }

  unsigned order() const {
    unsigned o = 0;
    while ((1u << o) < side) ++o;
    return o;
  }

  friend bool operator==(const VisImage&, const VisImage&) = default;
};

using ClassHistogram = std::array<std::size_t, kColorClassCount>;

inline ClassHistogram histogram(std::span<const std::uint8_t> bytes) {
  ClassHistogram h{};
  for (auto b : bytes) ++h[static_cast<std::size_t>(tag_of(b))];
  return h;
}

inline ClassHistogram histogram(const VisImage& img) {
  ClassHistogram h{};
  for (const auto& px : img.pixels) {
    if (auto t = tag_of_rgb(px)) ++h[static_cast<std::size_t>(*t)];
  }
  return h;
}

/// Splits the payload into chunks of 4^order bytes (last one zero-padded) and
/// renders each. An empty payload still yields one all-padding image.
inline std::vector<VisImage> render(std::span<const std::uint8_t> payload, unsigned order,
                                    Curve curve) {
  if (order < 1 || order > kMaxOrder) {
    throw Error(ErrorCode::IndexOutOfRange, "curve order must be in 1.." + std::to_string(kMaxOrder));
  }
  const std::uint32_t side = 1u << order;
  const std::size_t cells = std::size_t{side} * side;

  // The curve layout is the same for every chunk.
  std::vector<std::size_t> pixel_of(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    const Point p = curve_point(i, order, curve);
    pixel_of[i] = std::size_t{p.y} * side + p.x;
  }

  std::vector<VisImage> images;
  std::size_t offset = 0;
  do {
    VisImage img;
    img.side = side;
    img.curve = curve;
    img.pixels.assign(cells, kPalette[static_cast<std::size_t>(ColorTag::black)]);
    const std::size_t n = std::min(cells, payload.size() - offset);
    img.source_length = n;
    for (std::size_t i = 0; i < n; ++i) {
      img.pixels[pixel_of[i]] = classify_byte(payload[offset + i]).rgb;
    }
    images.push_back(std::move(img));
    offset += n;
  } while (offset < payload.size());
  return images;
}

inline std::vector<VisImage> render(const pcap::ByteSample& sample, unsigned order, Curve curve) {
  return render(std::span<const std::uint8_t>(sample.payload), order, curve);
}

/// side*side*3 bytes, pixels in curve-index order.
inline std::vector<std::uint8_t> to_flat_binary(const VisImage& img) {
  const unsigned order = img.order();
  std::vector<std::uint8_t> out;
  out.reserve(img.pixels.size() * 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const Point p = curve_point(i, order, img.curve);
    const Rgb& c = img.at(p.x, p.y);
    out.push_back(c.r);
    out.push_back(c.g);
    out.push_back(c.b);
  }
  return out;
}

}  // namespace amishield::bytevis

#endif  // AMISHIELD_BYTEVIS_HPP
