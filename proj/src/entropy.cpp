#include "slidesift/entropy.hpp"

#include <cmath>

#include "slidesift/error.hpp"

namespace slidesift {

void Histogram256::merge(const Histogram256& other) {
  for (std::size_t k = 0; k < counts.size(); ++k) counts[k] += other.counts[k];
  total += other.total;
}

int Histogram256::occupied_bins() const {
  int n = 0;
  for (auto c : counts) n += c > 0;
  return n;
}

Histogram256 histogram(const RasterImage& img) {
  if (img.channels() != 1)
    throw Error(Errc::ChannelMismatch,
                "histogram needs 1 channel, got " + std::to_string(img.channels()));
  if (img.pixel_count() == 0) throw Error(Errc::EmptyImage, "histogram of empty image");
  Histogram256 h;
  for (auto v : img.pixels()) ++h.counts[v];
  h.total = img.pixel_count();
  return h;
}

EntropyBits shannon_entropy(const Histogram256& h) {
  if (h.total == 0) throw Error(Errc::EmptyHistogram, "entropy of empty histogram");
  const double total = static_cast<double>(h.total);
  const double log_total = std::log2(total);
  double acc = 0.0;
  for (auto c : h.counts) {
    if (c == 0) continue;
    const double n = static_cast<double>(c);
    acc -= (n / total) * (std::log2(n) - log_total);
  }
  // Single-bin histograms evaluate to -0.0.
  return {acc <= 0.0 ? 0.0 : acc};
}

EntropyBits image_entropy(const RasterImage& img) {
  if (img.pixel_count() == 0) throw Error(Errc::EmptyImage, "entropy of empty image");
  if (img.channels() == 1) return shannon_entropy(histogram(img));
  Histogram256 h;
  const auto px = img.pixels();
  for (std::size_t i = 0; i < img.pixel_count(); ++i)
    ++h.counts[luma(px[3 * i], px[3 * i + 1], px[3 * i + 2])];
  h.total = img.pixel_count();
  return shannon_entropy(h);
}

}  // namespace slidesift
