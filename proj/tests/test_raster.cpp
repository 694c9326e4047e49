#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "slidesift/error.hpp"
#include "slidesift/raster.hpp"
#include "support.hpp"

using namespace slidesift;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no slidesift::Error thrown";
  return Errc::Io;
}

}  // namespace

TEST(Raster, PngRoundTripKeepsSamples) {
  const auto dir = testsupport::scratch_dir("raster_rt");
  RasterImage img(2, 2, 3, std::vector<std::uint8_t>{1, 2, 3, 40, 50, 60, 200, 100, 0, 255, 254, 253});
  save_png(img, dir / "a.png");
  EXPECT_EQ(load_image(dir / "a.png"), img);
}

TEST(Raster, GraySourceReplicatedToThreeChannels) {
  const auto dir = testsupport::scratch_dir("raster_gray");
  save_png(RasterImage(5, 3, 1, 7), dir / "g.png");
  const auto img = load_image(dir / "g.png");
  EXPECT_EQ(img.channels(), 3u);
  EXPECT_EQ(img.width(), 5u);
  EXPECT_EQ(img.height(), 3u);
  for (auto v : img.pixels()) EXPECT_EQ(v, 7);
}

TEST(Raster, TruncatedFileIsDecodeError) {
  const auto dir = testsupport::scratch_dir("raster_trunc");
  save_png(testsupport::noise_image(64, 64, 3, 1), dir / "full.png");
  const auto bytes = testsupport::slurp(dir / "full.png");
  std::ofstream(dir / "cut.png", std::ios::binary).write(bytes.data(), 40);
  EXPECT_EQ(code_of([&] { load_image(dir / "cut.png"); }), Errc::Decode);
  std::ofstream(dir / "junk.png", std::ios::binary) << "not an image at all";
  EXPECT_EQ(code_of([&] { load_image(dir / "junk.png"); }), Errc::Decode);
}

TEST(Raster, MissingFileIsIoError) {
  EXPECT_EQ(code_of([] { load_image("/nonexistent/slide.png"); }), Errc::Io);
}

TEST(Raster, RescaleDimsFollowFloorRule) {
  EXPECT_EQ(rescaled_dims(12000, 8000, 6000), std::make_pair(6000u, 4000u));
  EXPECT_EQ(rescaled_dims(5000, 3000, 6000), std::make_pair(5000u, 3000u));
  EXPECT_EQ(rescaled_dims(9000, 9000, 6000), std::make_pair(6000u, 6000u));
  EXPECT_EQ(rescaled_dims(10000, 10, 100), std::make_pair(100u, 1u));
  EXPECT_EQ(rescaled_dims(12000, 8000, 4500), std::make_pair(4500u, 3000u));
}

TEST(Raster, RescaleDownscalesToLimit) {
  const auto out = rescale(RasterImage(1200, 800, 3, 90), {600});
  EXPECT_EQ(out.width(), 600u);
  EXPECT_EQ(out.height(), 400u);
}

TEST(Raster, RescaleNeverEnlarges) {
  const auto img = testsupport::noise_image(5000, 3000, 3, 2);
  EXPECT_EQ(rescale(img), img);
}

TEST(Raster, RescaleConstantLargeImage) {
  RasterImage img(9000, 9000, 3, 131);
  const auto out = rescale(img);
  EXPECT_EQ(out.width(), 6000u);
  EXPECT_EQ(out.height(), 6000u);
  for (auto v : out.pixels()) ASSERT_EQ(v, 131);
}

TEST(Raster, RescaleProperties) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<std::uint32_t> dim(1, 400), lim(1, 300);
  for (int i = 0; i < 200; ++i) {
    const auto w = dim(rng), h = dim(rng);
    const RescalePolicy p{lim(rng)};
    const auto img = testsupport::noise_image(w, h, 3, i);
    const auto once = rescale(img, p);
    ASSERT_LE(std::max(once.width(), once.height()), p.max_longer_dim);
    ASSERT_GE(once.width(), 1u);
    ASSERT_GE(once.height(), 1u);
    ASSERT_LE(once.width(), w);
    ASSERT_LE(once.height(), h);
    ASSERT_EQ(rescale(once, p), once);
    // Aspect ratio within one pixel.
    if (std::max(w, h) > p.max_longer_dim) {
      const double s = static_cast<double>(p.max_longer_dim) / std::max(w, h);
      ASSERT_LE(std::abs(once.width() - w * s), 1.0);
      ASSERT_LE(std::abs(once.height() - h * s), 1.0);
    }
    const auto flat = rescale(RasterImage(w, h, 3, static_cast<std::uint8_t>(i)), p);
    for (auto v : flat.pixels()) ASSERT_EQ(v, static_cast<std::uint8_t>(i));
  }
}

TEST(Raster, GrayscaleExamples) {
  EXPECT_EQ(luma(255, 255, 255), 255);
  EXPECT_EQ(luma(255, 0, 0), 76);
  EXPECT_EQ(luma(0, 0, 0), 0);
  EXPECT_EQ(luma(0, 255, 0), 150);  // 149.685
  EXPECT_EQ(luma(0, 0, 255), 29);   // 29.07
}

TEST(Raster, GrayscaleMatchesScalarOracleExhaustively) {
  for (int r = 0; r < 256; ++r)
    for (int g = 0; g < 256; ++g)
      for (int b = 0; b < 256; ++b) {
        // Exact value k + 0.5 is representable, so lround sees true ties.
        const long oracle = std::lround((299.0 * r + 587.0 * g + 114.0 * b) / 1000.0);
        ASSERT_EQ(luma(r, g, b), oracle) << r << "," << g << "," << b;
      }
}

TEST(Raster, GrayscaleOfEqualChannelsIsIdentity) {
  RasterImage img(16, 16, 3);
  for (std::uint32_t y = 0; y < 16; ++y)
    for (std::uint32_t x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>(y * 16 + x);
  const auto gray = to_grayscale(img);
  ASSERT_EQ(gray.channels(), 1u);
  for (std::uint32_t y = 0; y < 16; ++y)
    for (std::uint32_t x = 0; x < 16; ++x) EXPECT_EQ(gray.at(x, y), y * 16 + x);
}

TEST(Raster, ConstructorAndCropChecks) {
  EXPECT_THROW(RasterImage(2, 2, 2), Error);
  EXPECT_THROW(RasterImage(2, 2, 3, std::vector<std::uint8_t>(5)), Error);
  const auto img = testsupport::noise_image(10, 8, 3, 4);
  const auto c = img.crop(2, 3, 4, 5);
  EXPECT_EQ(c.width(), 4u);
  EXPECT_EQ(c.at(0, 0, 1), img.at(2, 3, 1));
  EXPECT_EQ(c.at(3, 4, 2), img.at(5, 7, 2));
  EXPECT_EQ(code_of([&] { img.crop(7, 0, 4, 4); }), Errc::OutOfBounds);
}
