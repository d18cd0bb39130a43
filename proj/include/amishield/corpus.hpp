#ifndef AMISHIELD_CORPUS_HPP
#define AMISHIELD_CORPUS_HPP

// Synthetic payload corpus. Normal payloads are dominated (>= 60%) by
// printable ASCII, malware payloads by extended bytes. Bytes are laid down in
// runs so the rendered images have spatial structure along the curve.

#include <array>
#include <cstdint>
#include <vector>

#include "amishield/bytevis.hpp"
#include "amishield/detector.hpp"
#include "amishield/pcap.hpp"
#include "amishield/random.hpp"

namespace amishield::corpus {

using pcap::Bytes;
using pcap::Label;

enum class Variant {
  standard,
  // malware whose minority bytes are control characters instead of text;
  // absent from the standard mix
  red_control,
};

struct PayloadPool {
  std::vector<Bytes> normal;
  std::vector<Bytes> malware;
};

namespace detail {

inline std::uint8_t byte_of(bytevis::ColorTag tag, Rng& rng) {
  using bytevis::ColorTag;
  switch (tag) {
    case ColorTag::black: return 0x00;
    case ColorTag::white: return 0xff;
    case ColorTag::blue: return static_cast<std::uint8_t>(0x20 + rng.below(0x5f));
    case ColorTag::green: {
      const auto v = rng.below(0x20);
      return v == 0 ? 0x7f : static_cast<std::uint8_t>(v);
    }
    case ColorTag::red: return static_cast<std::uint8_t>(0x80 + rng.below(0x7f));
  }
  return 0;
}

inline bytevis::ColorTag pick(const std::array<double, bytevis::kColorClassCount>& weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return static_cast<bytevis::ColorTag>(i);
    u -= weights[i];
  }
  return static_cast<bytevis::ColorTag>(weights.size() - 1);
}

}  // namespace detail

/// One payload of `length` bytes. The dominant class covers a fraction drawn
/// from [0.6, 0.9]; the remainder follows a class-specific minority mix.
inline Bytes make_payload(Label label, std::size_t length, Rng& rng, Variant variant = Variant::standard) {
  using bytevis::ColorTag;
  const ColorTag dominant = label == Label::malware ? ColorTag::red : ColorTag::blue;
  // weights over (black, white, blue, green, red) for the minority share
  std::array<double, bytevis::kColorClassCount> minority{};
  if (label == Label::normal) {
    minority = {0.2, 0.05, 0.0, 0.45, 0.3};
  } else if (variant == Variant::red_control) {
    minority = {0.05, 0.05, 0.0, 0.9, 0.0};
  } else {
    minority = {0.2, 0.1, 0.5, 0.2, 0.0};
  }
  const double dominant_share = variant == Variant::red_control ? rng.uniform(0.6, 0.7) : rng.uniform(0.6, 0.9);
  const auto dominant_bytes = static_cast<std::size_t>(dominant_share * static_cast<double>(length) + 0.5);

  // Build runs of class tags, then fill them with concrete byte values.
  std::vector<ColorTag> tags;
  tags.reserve(length);
  std::size_t placed_dominant = 0;
  while (tags.size() < length) {
    const std::size_t remaining = length - tags.size();
    const std::size_t need_dominant = dominant_bytes - placed_dominant;
    const bool take_dominant =
        need_dominant > 0 && (need_dominant == remaining || rng.uniform() < dominant_share);
    const std::size_t run = std::min<std::size_t>(8 + rng.below(57), remaining);
    if (take_dominant) {
      const std::size_t n = std::min(run, need_dominant);
      tags.insert(tags.end(), n, dominant);
      placed_dominant += n;
    } else {
      const std::size_t n = std::min(run, remaining - need_dominant);
      if (n == 0) continue;
      const ColorTag t = detail::pick(minority, rng);
      tags.insert(tags.end(), n, t);
    }
  }
  Bytes out(length);
  for (std::size_t i = 0; i < length; ++i) out[i] = detail::byte_of(tags[i], rng);
  return out;
}

/// Payload sizes are drawn below 1024 bytes, matching metering duty-cycle traffic.
inline std::size_t draw_length(Rng& rng) { return 256 + static_cast<std::size_t>(rng.below(768)); }

inline PayloadPool make_pool(std::size_t n_normal, std::size_t n_malware, std::uint64_t seed,
                             Variant variant = Variant::standard) {
  Rng rng(seed);
  PayloadPool pool;
  for (std::size_t i = 0; i < n_normal; ++i) pool.normal.push_back(make_payload(Label::normal, draw_length(rng), rng));
  for (std::size_t i = 0; i < n_malware; ++i) {
    pool.malware.push_back(make_payload(Label::malware, draw_length(rng), rng, variant));
  }
  return pool;
}

inline detector::LabeledFeatures to_features(const Bytes& payload, Label label, unsigned order = 5,
                                             unsigned quadrants = detector::kDefaultQuadrants) {
  const auto images = bytevis::render(payload, order, bytevis::Curve::hilbert);
  return {detector::featurize(images.front(), quadrants), label};
}

/// Interleaved labeled feature set: normals and malware in a seeded shuffle.
inline std::vector<detector::LabeledFeatures> make_features(std::size_t n_normal, std::size_t n_malware,
                                                            std::uint64_t seed,
                                                            Variant variant = Variant::standard) {
  const PayloadPool pool = make_pool(n_normal, n_malware, seed, variant);
  std::vector<detector::LabeledFeatures> out;
  out.reserve(n_normal + n_malware);
  for (const auto& p : pool.normal) out.push_back(to_features(p, Label::normal));
  for (const auto& p : pool.malware) out.push_back(to_features(p, Label::malware));
  Rng rng(seed ^ 0x5bd1e995ULL);
  rng.shuffle(out);
  return out;
}

}  // namespace amishield::corpus

#endif  // AMISHIELD_CORPUS_HPP
