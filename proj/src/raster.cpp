#include "slidesift/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "slidesift/error.hpp"

namespace slidesift {

RasterImage::RasterImage(std::uint32_t width, std::uint32_t height, std::uint32_t channels,
                         std::uint8_t fill)
    : width_(width), height_(height), channels_(channels),
      pixels_(std::size_t{width} * height * channels, fill) {
  if (channels != 1 && channels != 3)
    throw Error(Errc::InvalidArgument, "channels must be 1 or 3, got " + std::to_string(channels));
}

RasterImage::RasterImage(std::uint32_t width, std::uint32_t height, std::uint32_t channels,
                         std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), channels_(channels), pixels_(std::move(pixels)) {
  if (channels != 1 && channels != 3)
    throw Error(Errc::InvalidArgument, "channels must be 1 or 3, got " + std::to_string(channels));
  if (pixels_.size() != std::size_t{width} * height * channels)
    throw Error(Errc::InvalidArgument, "pixel buffer size does not match dimensions");
}

RasterImage RasterImage::crop(std::uint32_t x, std::uint32_t y, std::uint32_t w,
                              std::uint32_t h) const {
  if (std::uint64_t{x} + w > width_ || std::uint64_t{y} + h > height_)
    throw Error(Errc::OutOfBounds, "crop (" + std::to_string(x) + "," + std::to_string(y) + ") " +
                                       std::to_string(w) + "x" + std::to_string(h) +
                                       " exceeds " + std::to_string(width_) + "x" +
                                       std::to_string(height_));
  RasterImage out(w, h, channels_);
  const std::size_t row_bytes = std::size_t{w} * channels_;
  for (std::uint32_t r = 0; r < h; ++r) {
    const auto* src = pixels_.data() + ((std::size_t{y} + r) * width_ + x) * channels_;
    std::copy_n(src, row_bytes, out.pixels_.data() + r * row_bytes);
  }
  return out;
}

RasterImage load_image(const std::filesystem::path& path) {
  {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw Error(Errc::Io, "cannot read " + path.string());
  }
  cv::Mat mat;
  try {
    mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw Error(Errc::Decode, path.string() + ": " + e.what());
  }
  if (mat.empty()) throw Error(Errc::Decode, "unsupported or corrupt image: " + path.string());

  if (mat.depth() == CV_16U) {
    cv::Mat narrow;
    mat.convertTo(narrow, CV_8U, 1.0 / 257.0);
    mat = narrow;
  } else if (mat.depth() != CV_8U) {
    throw Error(Errc::Decode, "unsupported sample depth in " + path.string());
  }

  const auto w = static_cast<std::uint32_t>(mat.cols);
  const auto h = static_cast<std::uint32_t>(mat.rows);
  const int src_channels = mat.channels();
  if (src_channels != 1 && src_channels != 3 && src_channels != 4)
    throw Error(Errc::Decode, "unsupported channel count in " + path.string());

  RasterImage out(w, h, 3);
  for (std::uint32_t y = 0; y < h; ++y) {
    const std::uint8_t* row = mat.ptr<std::uint8_t>(static_cast<int>(y));
    for (std::uint32_t x = 0; x < w; ++x) {
      if (src_channels == 1) {
        out.at(x, y, 0) = out.at(x, y, 1) = out.at(x, y, 2) = row[x];
      } else {
        // OpenCV stores BGR(A).
        const std::uint8_t* px = row + std::size_t{x} * src_channels;
        out.at(x, y, 0) = px[2];
        out.at(x, y, 1) = px[1];
        out.at(x, y, 2) = px[0];
      }
    }
  }
  return out;
}

void save_png(const RasterImage& img, const std::filesystem::path& path) {
  if (img.empty()) throw Error(Errc::EmptyImage, "refusing to write empty image " + path.string());
  const int type = img.channels() == 1 ? CV_8UC1 : CV_8UC3;
  cv::Mat mat(static_cast<int>(img.height()), static_cast<int>(img.width()), type);
  for (std::uint32_t y = 0; y < img.height(); ++y) {
    std::uint8_t* row = mat.ptr<std::uint8_t>(static_cast<int>(y));
    for (std::uint32_t x = 0; x < img.width(); ++x) {
      if (img.channels() == 1) {
        row[x] = img.at(x, y);
      } else {
        row[3 * x + 0] = img.at(x, y, 2);
        row[3 * x + 1] = img.at(x, y, 1);
        row[3 * x + 2] = img.at(x, y, 0);
      }
    }
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat, {cv::IMWRITE_PNG_COMPRESSION, 6});
  } catch (const cv::Exception& e) {
    throw Error(Errc::Io, path.string() + ": " + e.what());
  }
  if (!ok) throw Error(Errc::Io, "cannot write " + path.string());
}

std::pair<std::uint32_t, std::uint32_t> rescaled_dims(std::uint32_t width, std::uint32_t height,
                                                      std::uint32_t max_longer_dim) {
  if (max_longer_dim < 1) throw Error(Errc::InvalidArgument, "max_longer_dim must be >= 1");
  const std::uint32_t longer = std::max(width, height);
  if (longer <= max_longer_dim) return {width, height};
  // floor(dim * max / longer) in exact integer arithmetic.
  auto scaled = [&](std::uint32_t dim) {
    const auto v = static_cast<std::uint32_t>(std::uint64_t{dim} * max_longer_dim / longer);
    return std::max<std::uint32_t>(1, v);
  };
  return {scaled(width), scaled(height)};
}

RasterImage rescale(const RasterImage& img, const RescalePolicy& policy) {
  const auto [new_w, new_h] = rescaled_dims(img.width(), img.height(), policy.max_longer_dim);
  if (new_w == img.width() && new_h == img.height()) return img;

  const std::uint32_t channels = img.channels();
  const double sx = static_cast<double>(img.width()) / new_w;
  const double sy = static_cast<double>(img.height()) / new_h;

  struct Tap {
    std::uint32_t i0, i1;
    double w1;
  };
  // Pixel-center aligned sample positions, clamped to the source grid.
  auto taps = [](std::uint32_t n_out, std::uint32_t n_in, double scale) {
    std::vector<Tap> t(n_out);
    for (std::uint32_t o = 0; o < n_out; ++o) {
      double src = (o + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(n_in - 1));
      const auto i0 = static_cast<std::uint32_t>(std::floor(src));
      const std::uint32_t i1 = std::min(i0 + 1, n_in - 1);
      t[o] = {i0, i1, src - i0};
    }
    return t;
  };
  const auto xt = taps(new_w, img.width(), sx);
  const auto yt = taps(new_h, img.height(), sy);

  RasterImage out(new_w, new_h, channels);
  for (std::uint32_t y = 0; y < new_h; ++y) {
    const Tap& ty = yt[y];
    for (std::uint32_t x = 0; x < new_w; ++x) {
      const Tap& tx = xt[x];
      for (std::uint32_t c = 0; c < channels; ++c) {
        const double top = img.at(tx.i0, ty.i0, c) * (1.0 - tx.w1) + img.at(tx.i1, ty.i0, c) * tx.w1;
        const double bot = img.at(tx.i0, ty.i1, c) * (1.0 - tx.w1) + img.at(tx.i1, ty.i1, c) * tx.w1;
        const double v = top * (1.0 - ty.w1) + bot * ty.w1;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
      }
    }
  }
  return out;
}

std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  // Exact: (299 R + 587 G + 114 B) / 1000, ties rounded up (all terms are >= 0).
  const unsigned sum = 299u * r + 587u * g + 114u * b;
  return static_cast<std::uint8_t>(std::min(255u, (sum + 500u) / 1000u));
}

RasterImage to_grayscale(const RasterImage& img) {
  if (img.channels() == 1) return img;
  RasterImage out(img.width(), img.height(), 1);
  const auto src = img.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst[i] = luma(src[3 * i], src[3 * i + 1], src[3 * i + 2]);
  return out;
}

}  // namespace slidesift
