#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "slidesift/eval.hpp"
#include "slidesift/nn.hpp"
#include "slidesift/raster.hpp"
#include "slidesift/tiler.hpp"

namespace slidesift {

// Per-pixel running sums of tile probabilities and coverage counts.
class ProbAccumulator {
 public:
  ProbAccumulator(std::uint32_t width, std::uint32_t height);

  std::uint32_t width() const { return width_; }
  std::uint32_t height() const { return height_; }

  // Adds probability to every pixel of the size x size square at (x, y).
  void accumulate(std::uint32_t x, std::uint32_t y, std::uint32_t size, double probability);
  void accumulate(const TileRecord& tile, double probability) {
    accumulate(tile.x, tile.y, tile.size, probability);
  }

  double sum(std::uint32_t x, std::uint32_t y) const { return sum_[index(x, y)]; }
  std::uint32_t count(std::uint32_t x, std::uint32_t y) const { return count_[index(x, y)]; }
  // sum / count, or NaN where no tile covers the pixel.
  double mean(std::uint32_t x, std::uint32_t y) const;

  const std::vector<double>& sums() const { return sum_; }
  const std::vector<std::uint32_t>& counts() const { return count_; }

 private:
  std::size_t index(std::uint32_t x, std::uint32_t y) const { return std::size_t{y} * width_ + x; }

  std::uint32_t width_;
  std::uint32_t height_;
  std::vector<double> sum_;
  std::vector<std::uint32_t> count_;
};

using Rgb = std::array<std::uint8_t, 3>;

struct ColorRule {
  int class_of_interest = 1;
  double high_cut = 0.65;
  double boundary = 0.5;
  Rgb high_color{255, 0, 0};
  Rgb moderate_color{255, 200, 0};
  double alpha = 0.45;

  void validate() const;
};

// q = mean (class 1) or 1 - mean (class 0); q >= high_cut blends high_color,
// boundary <= q < high_cut blends moderate_color, anything else keeps base.
RasterImage render(const ProbAccumulator& acc, const RasterImage& base, const ColorRule& rule);

// Little-endian u32 width, u32 height, then row-major float64 means (NaN where uncovered).
void write_raw_means(const ProbAccumulator& acc, const std::filesystem::path& path);

struct SlideMap {
  SlideResult result;
  RasterImage overlay;
  ProbAccumulator accumulator{0, 0};
  std::vector<TileRecord> records;
  std::vector<TilePrediction> predictions;
};

// Tiles and sifts img, classifies every retained tile once, accumulates the
// probabilities per pixel, aggregates the slide, and renders the overlay.
// The color rule's class of interest is the predicted slide class unless
// truth_label is given. Throws NoRetainedTiles, ShapeMismatch.
SlideMap map_slide(const RasterImage& img, const nn::CnnModel& model, const TileGridSpec& spec,
                   const SiftCriterion& criterion, const std::string& slide_id,
                   ColorRule rule = {}, std::optional<int> truth_label = std::nullopt);

}  // namespace slidesift
