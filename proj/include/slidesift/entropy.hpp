#pragma once

#include <array>
#include <cstdint>

#include "slidesift/raster.hpp"

namespace slidesift {

struct Histogram256 {
  std::array<std::uint64_t, 256> counts{};
  std::uint64_t total = 0;

  void add(std::uint8_t v) {
    ++counts[v];
    ++total;
  }
  void merge(const Histogram256& other);
  int occupied_bins() const;

  friend bool operator==(const Histogram256&, const Histogram256&) = default;
};

// Shannon entropy in bits; 0 <= value <= 8 for 8-bit data.
struct EntropyBits {
  double value = 0.0;
  auto operator<=>(const EntropyBits&) const = default;
};

// Counts of a 1-channel image. Throws EmptyImage / ChannelMismatch.
Histogram256 histogram(const RasterImage& img);

// H = -sum_k p_k log2 p_k over occupied bins. Throws EmptyHistogram.
EntropyBits shannon_entropy(const Histogram256& h);

// Entropy of the BT.601 gray conversion (or of the single channel).
EntropyBits image_entropy(const RasterImage& img);

}  // namespace slidesift
