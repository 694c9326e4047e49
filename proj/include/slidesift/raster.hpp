#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace slidesift {

// Row-major, channel-interleaved 8-bit image. 3 channels (RGB) or 1 (gray).
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(std::uint32_t width, std::uint32_t height, std::uint32_t channels,
              std::uint8_t fill = 0);
  RasterImage(std::uint32_t width, std::uint32_t height, std::uint32_t channels,
              std::vector<std::uint8_t> pixels);

  std::uint32_t width() const { return width_; }
  std::uint32_t height() const { return height_; }
  std::uint32_t channels() const { return channels_; }
  bool empty() const { return pixels_.empty(); }
  std::size_t pixel_count() const { return std::size_t{width_} * height_; }

  std::span<const std::uint8_t> pixels() const { return pixels_; }
  std::span<std::uint8_t> pixels() { return pixels_; }

  std::uint8_t at(std::uint32_t x, std::uint32_t y, std::uint32_t c = 0) const {
    return pixels_[(std::size_t{y} * width_ + x) * channels_ + c];
  }
  std::uint8_t& at(std::uint32_t x, std::uint32_t y, std::uint32_t c = 0) {
    return pixels_[(std::size_t{y} * width_ + x) * channels_ + c];
  }

  // Copy of the square/rectangular window with origin (x, y). Throws OutOfBounds.
  RasterImage crop(std::uint32_t x, std::uint32_t y, std::uint32_t w, std::uint32_t h) const;

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  std::uint32_t width_ = 0;
  std::uint32_t height_ = 0;
  std::uint32_t channels_ = 0;
  std::vector<std::uint8_t> pixels_;
};

struct RescalePolicy {
  std::uint32_t max_longer_dim = 6000;
};

// Decodes PNG, JPEG or TIFF into a 3-channel image. Gray sources are
// replicated into R, G and B; alpha is dropped; 16-bit samples are scaled to 8.
RasterImage load_image(const std::filesystem::path& path);

// Writes an 8-bit, non-interlaced PNG (1 or 3 channels).
void save_png(const RasterImage& img, const std::filesystem::path& path);

// Bilinear downscale so that max(w, h) <= policy.max_longer_dim. Images already
// within the limit are returned unchanged; images are never enlarged.
RasterImage rescale(const RasterImage& img, const RescalePolicy& policy = {});

// Target dimensions used by rescale(): floor(dim * s), each at least 1.
std::pair<std::uint32_t, std::uint32_t> rescaled_dims(std::uint32_t width, std::uint32_t height,
                                                      std::uint32_t max_longer_dim);

// BT.601 luma, round-half-away-from-zero: round(0.299 R + 0.587 G + 0.114 B).
std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b);

// 1-channel luma image. 1-channel input is returned as is.
RasterImage to_grayscale(const RasterImage& img);

}  // namespace slidesift
