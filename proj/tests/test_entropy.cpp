#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "slidesift/entropy.hpp"
#include "slidesift/error.hpp"
#include "support.hpp"

using namespace slidesift;

namespace {

// Independent reference: map-based counts, natural log converted to bits.
double oracle_entropy(std::span<const std::uint8_t> samples) {
  std::map<int, double> counts;
  for (auto v : samples) counts[v] += 1;
  double h = 0;
  for (const auto& [_, c] : counts) {
    const double p = c / samples.size();
    h -= p * std::log(p) / std::log(2.0);
  }
  return h;
}

}  // namespace

TEST(Histogram, CountsExamples) {
  auto h = histogram(RasterImage(2, 2, 1, std::vector<std::uint8_t>{0, 0, 255, 255}));
  EXPECT_EQ(h.counts[0], 2u);
  EXPECT_EQ(h.counts[255], 2u);
  EXPECT_EQ(h.total, 4u);
  EXPECT_EQ(h.occupied_bins(), 2);

  h = histogram(RasterImage(1, 1, 1, 128));
  EXPECT_EQ(h.counts[128], 1u);
  EXPECT_EQ(h.total, 1u);

  RasterImage cyc(16, 16, 1);
  for (std::size_t i = 0; i < 256; ++i) cyc.pixels()[i] = static_cast<std::uint8_t>(i);
  h = histogram(cyc);
  for (int k = 0; k < 256; ++k) EXPECT_EQ(h.counts[k], 1u);
}

TEST(Histogram, Errors) {
  try {
    histogram(RasterImage(2, 2, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ChannelMismatch);
  }
  try {
    histogram(RasterImage(0, 0, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyImage);
  }
  try {
    shannon_entropy(Histogram256{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyHistogram);
  }
}

TEST(Entropy, ClosedForms) {
  Histogram256 h;
  for (int i = 0; i < 50; ++i) h.add(9);
  EXPECT_EQ(shannon_entropy(h).value, 0.0);
  h.counts.fill(0);
  h.total = 0;
  for (int i = 0; i < 7; ++i) {
    h.add(1);
    h.add(200);
  }
  EXPECT_NEAR(shannon_entropy(h).value, 1.0, 1e-12);
  h.counts.fill(3);
  h.total = 768;
  EXPECT_NEAR(shannon_entropy(h).value, 8.0, 1e-12);
}

TEST(Entropy, ImageExamples) {
  EXPECT_EQ(image_entropy(RasterImage(20, 10, 3, 77)).value, 0.0);
  RasterImage checker(10, 10, 1);
  for (std::uint32_t y = 0; y < 10; ++y)
    for (std::uint32_t x = 0; x < 10; ++x) checker.at(x, y) = (x + y) % 2 ? 255 : 0;
  EXPECT_NEAR(image_entropy(checker).value, 1.0, 1e-12);

  const auto noise = testsupport::noise_image(100, 100, 1, 11);
  const double h = image_entropy(noise).value;
  EXPECT_GE(h, 7.9);
  EXPECT_LE(h, 8.0);
  EXPECT_NEAR(h, oracle_entropy(noise.pixels()), 1e-12);
}

TEST(Entropy, RgbUsesGrayConversion) {
  const auto rgb = testsupport::noise_image(40, 30, 3, 12);
  EXPECT_EQ(image_entropy(rgb).value, image_entropy(to_grayscale(rgb)).value);
  EXPECT_NEAR(image_entropy(rgb).value, oracle_entropy(to_grayscale(rgb).pixels()), 1e-12);
}

TEST(Entropy, PermutationInvariant) {
  auto img = testsupport::noise_image(32, 32, 1, 13);
  for (auto& v : img.pixels()) v /= 8;  // 32 symbols, uneven counts
  const double h0 = image_entropy(img).value;
  std::mt19937 rng(14);
  for (int i = 0; i < 100; ++i) {
    std::shuffle(img.pixels().begin(), img.pixels().end(), rng);
    ASSERT_EQ(image_entropy(img).value, h0);
  }
}

TEST(Entropy, ReplicationDoesNotChangeEntropy) {
  const auto img = testsupport::noise_image(23, 17, 1, 15);
  RasterImage big(46, 34, 1);
  for (std::uint32_t y = 0; y < 34; ++y)
    for (std::uint32_t x = 0; x < 46; ++x) big.at(x, y) = img.at(x % 23, y % 17);
  EXPECT_NEAR(image_entropy(big).value, image_entropy(img).value, 1e-12);
}

TEST(Entropy, BoundsAndMergeProperty) {
  std::mt19937 rng(16);
  std::uniform_int_distribution<int> sym(1, 256), len(1, 500);
  for (int i = 0; i < 300; ++i) {
    const int k = sym(rng);
    std::uniform_int_distribution<int> val(0, k - 1);
    Histogram256 a, b;
    for (int j = len(rng); j > 0; --j) a.add(static_cast<std::uint8_t>(val(rng)));
    for (int j = len(rng); j > 0; --j) b.add(static_cast<std::uint8_t>(255 - val(rng)));
    const double ha = shannon_entropy(a).value;
    ASSERT_GE(ha, 0.0);
    ASSERT_LE(ha, 8.0);
    ASSERT_EQ(ha == 0.0, a.occupied_bins() == 1);
    Histogram256 m = a;
    m.merge(b);
    ASSERT_EQ(m.total, a.total + b.total);
    ASSERT_LE(shannon_entropy(m).value, std::log2(m.occupied_bins()) + 1e-12);
  }
}
