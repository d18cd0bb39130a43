#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <utility>

#include "amishield/bytevis.hpp"
#include "amishield/png.hpp"
#include "amishield/random.hpp"
#include "oracles.hpp"

using namespace amishield;
using namespace amishield::bytevis;

namespace {

Rgb rgb_of(ColorTag t) { return kPalette[static_cast<std::size_t>(t)]; }

std::size_t count(const VisImage& img, ColorTag t) {
  return histogram(img)[static_cast<std::size_t>(t)];
}

}  // namespace

TEST(ClassifyByte, NamedExamples) {
  EXPECT_EQ(classify_byte(0x00).tag, ColorTag::black);
  EXPECT_EQ(classify_byte(0xff).tag, ColorTag::white);
  EXPECT_EQ(classify_byte(0x41).tag, ColorTag::blue);
  EXPECT_EQ(classify_byte(0x07).tag, ColorTag::green);
  EXPECT_EQ(classify_byte(0x90).tag, ColorTag::red);
}

TEST(ClassifyByte, Boundaries) {
  EXPECT_EQ(tag_of(0x01), ColorTag::green);
  EXPECT_EQ(tag_of(0x1f), ColorTag::green);
  EXPECT_EQ(tag_of(0x20), ColorTag::blue);
  EXPECT_EQ(tag_of(0x7e), ColorTag::blue);
  EXPECT_EQ(tag_of(0x7f), ColorTag::green);
  EXPECT_EQ(tag_of(0x80), ColorTag::red);
  EXPECT_EQ(tag_of(0xfe), ColorTag::red);
}

TEST(ClassifyByte, PaletteIsDistinctAndInvertible) {
  std::set<std::tuple<int, int, int>> seen;
  for (std::size_t i = 0; i < kColorClassCount; ++i) {
    seen.insert({kPalette[i].r, kPalette[i].g, kPalette[i].b});
    EXPECT_EQ(tag_of_rgb(kPalette[i]), static_cast<ColorTag>(i));
  }
  EXPECT_EQ(seen.size(), kColorClassCount);
  EXPECT_EQ(rgb_of(ColorTag::blue), (Rgb{0, 0, 255}));
  EXPECT_EQ(rgb_of(ColorTag::green), (Rgb{0, 255, 0}));
  EXPECT_FALSE(tag_of_rgb(Rgb{1, 2, 3}).has_value());
}

TEST(CurvePoint, HilbertOrderOne) {
  const std::vector<Point> expect{{0, 0}, {0, 1}, {1, 1}, {1, 0}};
  for (std::uint64_t i = 0; i < 4; ++i) EXPECT_EQ(curve_point(i, 1, Curve::hilbert), expect[i]);
}

TEST(CurvePoint, HilbertMatchesRecursiveConstruction) {
  for (unsigned order = 1; order <= 6; ++order) {
    const auto ref = oracle::hilbert(order);
    for (std::uint64_t i = 0; i < ref.size(); ++i) {
      ASSERT_EQ(curve_point(i, order, Curve::hilbert), ref[i]) << "order " << order << " index " << i;
    }
  }
}

TEST(CurvePoint, ZigzagReversesOddRows) {
  EXPECT_EQ(curve_point(5, 2, Curve::zigzag), (Point{2, 1}));
  EXPECT_EQ(curve_point(3, 2, Curve::zigzag), (Point{3, 0}));
  EXPECT_EQ(curve_point(4, 2, Curve::zigzag), (Point{3, 1}));
  EXPECT_EQ(curve_point(8, 2, Curve::zigzag), (Point{0, 2}));
}

TEST(CurvePoint, BijectiveAndAdjacent) {
  for (Curve c : {Curve::hilbert, Curve::zigzag}) {
    for (unsigned order = 1; order <= 6; ++order) {
      const std::uint64_t side = 1u << order;
      std::vector<char> hit(side * side, 0);
      Point prev{};
      for (std::uint64_t i = 0; i < side * side; ++i) {
        const Point p = curve_point(i, order, c);
        ASSERT_LT(p.x, side);
        ASSERT_LT(p.y, side);
        ASSERT_FALSE(hit[p.y * side + p.x]);
        hit[p.y * side + p.x] = 1;
        if (i > 0) {
          const auto d = std::abs(static_cast<long>(p.x) - static_cast<long>(prev.x)) +
                         std::abs(static_cast<long>(p.y) - static_cast<long>(prev.y));
          ASSERT_EQ(d, 1) << to_string(c) << " order " << order << " index " << i;
        }
        prev = p;
      }
    }
  }
}

TEST(CurvePoint, OutOfRange) {
  EXPECT_THROW(curve_point(4, 1, Curve::hilbert), Error);
  EXPECT_THROW(curve_point(1, 0, Curve::hilbert), Error);
  EXPECT_THROW(curve_point(0, kMaxOrder + 1, Curve::hilbert), Error);
  try {
    curve_point(16, 2, Curve::zigzag);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IndexOutOfRange);
  }
}

TEST(Render, UniformPrintablePayload) {
  const std::vector<std::uint8_t> payload(1024, 0x41);
  const auto imgs = render(payload, 5, Curve::hilbert);
  ASSERT_EQ(imgs.size(), 1u);
  EXPECT_EQ(imgs[0].side, 32u);
  EXPECT_EQ(imgs[0].source_length, 1024u);
  for (const auto& px : imgs[0].pixels) EXPECT_EQ(px, rgb_of(ColorTag::blue));
}

TEST(Render, EmptyPayloadIsOneBlackImage) {
  const auto imgs = render(std::vector<std::uint8_t>{}, 1, Curve::hilbert);
  ASSERT_EQ(imgs.size(), 1u);
  EXPECT_EQ(imgs[0].side, 2u);
  EXPECT_EQ(imgs[0].source_length, 0u);
  EXPECT_EQ(count(imgs[0], ColorTag::black), 4u);
}

TEST(Render, HalfBlueHalfRedIsContiguousAlongTheCurve) {
  std::vector<std::uint8_t> payload(512, 0x41);
  payload.resize(1024, 0x90);
  const auto img = render(payload, 5, Curve::hilbert).front();
  EXPECT_EQ(count(img, ColorTag::blue), 512u);
  EXPECT_EQ(count(img, ColorTag::red), 512u);
  // one class change along the curve, and each class forms a 4-connected region
  int changes = 0;
  for (std::uint64_t i = 1; i < 1024; ++i) {
    const Point a = curve_point(i - 1, 5, Curve::hilbert), b = curve_point(i, 5, Curve::hilbert);
    changes += img.at(a.x, a.y) != img.at(b.x, b.y);
  }
  EXPECT_EQ(changes, 1);
  for (ColorTag t : {ColorTag::blue, ColorTag::red}) {
    std::vector<char> seen(1024, 0);
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < 32 && stack.empty(); ++y) {
      for (int x = 0; x < 32 && stack.empty(); ++x) {
        if (img.at(x, y) == rgb_of(t)) stack.push_back({x, y});
      }
    }
    std::size_t reached = 0;
    while (!stack.empty()) {
      auto [x, y] = stack.back();
      stack.pop_back();
      if (x < 0 || y < 0 || x >= 32 || y >= 32 || seen[y * 32 + x] || img.at(x, y) != rgb_of(t)) continue;
      seen[y * 32 + x] = 1;
      ++reached;
      stack.push_back({x + 1, y});
      stack.push_back({x - 1, y});
      stack.push_back({x, y + 1});
      stack.push_back({x, y - 1});
    }
    EXPECT_EQ(reached, 512u) << to_string(t);
  }
}

TEST(Render, ChunksAndPadding) {
  std::vector<std::uint8_t> payload(40, 0xff);
  const auto imgs = render(payload, 2, Curve::zigzag);
  ASSERT_EQ(imgs.size(), 3u);
  EXPECT_EQ(imgs[2].source_length, 8u);
  EXPECT_EQ(count(imgs[2], ColorTag::white), 8u);
  EXPECT_EQ(count(imgs[2], ColorTag::black), 8u);
  // the padded chunk places byte i at curve_point(i)
  for (std::uint64_t i = 0; i < 16; ++i) {
    const Point p = curve_point(i, 2, Curve::zigzag);
    EXPECT_EQ(imgs[2].at(p.x, p.y), rgb_of(i < 8 ? ColorTag::white : ColorTag::black));
  }
  EXPECT_THROW(render(payload, 0, Curve::hilbert), Error);
}

TEST(Render, ConservationOnRandomPayloads) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint8_t> payload(rng.below(3000));
    for (auto& b : payload) b = static_cast<std::uint8_t>(rng.below(256));
    const unsigned order = 1 + static_cast<unsigned>(rng.below(5));
    const auto imgs = render(payload, order, rng.bernoulli(0.5) ? Curve::hilbert : Curve::zigzag);
    const std::size_t cells = std::size_t{1} << (2 * order);
    for (std::size_t k = 0; k < imgs.size(); ++k) {
      std::vector<std::uint8_t> chunk(cells, 0);
      for (std::size_t i = 0; i < cells && k * cells + i < payload.size(); ++i) chunk[i] = payload[k * cells + i];
      ASSERT_EQ(histogram(imgs[k]), histogram(chunk));
    }
  }
}

TEST(Render, FlatBinaryFollowsCurveOrder) {
  std::vector<std::uint8_t> payload{0x00, 0x41, 0x07, 0x90};
  const auto img = render(payload, 1, Curve::hilbert).front();
  const auto flat = to_flat_binary(img);
  ASSERT_EQ(flat.size(), 12u);
  const std::vector<std::uint8_t> expect{0, 0, 0, 0, 0, 255, 0, 255, 0, 255, 0, 0};
  EXPECT_EQ(flat, expect);
}

TEST(Png, EncodeDecodeRoundTrip) {
  Rng rng(9);
  std::vector<std::uint8_t> payload(700);
  for (auto& b : payload) b = static_cast<std::uint8_t>(rng.below(256));
  const auto img = render(payload, 5, Curve::hilbert).front();
  const auto bytes = png::encode(img);
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(bytes[1], 'P');
  auto back = png::decode(bytes, Curve::hilbert);
  back.source_length = img.source_length;
  EXPECT_EQ(back, img);

  const auto path = std::filesystem::temp_directory_path() / "amishield_test.png";
  png::write_png(img, path);
  auto from_file = png::read_png(path, Curve::hilbert);
  from_file.source_length = img.source_length;
  EXPECT_EQ(from_file, img);
  std::filesystem::remove(path);
}

TEST(Png, RejectsGarbage) {
  try {
    png::decode(std::vector<std::uint8_t>{1, 2, 3, 4, 5, 6, 7, 8, 9}, Curve::hilbert);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaViolation);
  }
}
