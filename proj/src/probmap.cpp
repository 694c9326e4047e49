#include "slidesift/probmap.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

#include "slidesift/error.hpp"
#include "slidesift/pipeline.hpp"

namespace slidesift {

ProbAccumulator::ProbAccumulator(std::uint32_t width, std::uint32_t height)
    : width_(width), height_(height), sum_(std::size_t{width} * height, 0.0),
      count_(std::size_t{width} * height, 0) {}

void ProbAccumulator::accumulate(std::uint32_t x, std::uint32_t y, std::uint32_t size,
                                 double probability) {
  if (std::uint64_t{x} + size > width_ || std::uint64_t{y} + size > height_)
    throw Error(Errc::OutOfBounds, "tile at (" + std::to_string(x) + "," + std::to_string(y) +
                                       ") size " + std::to_string(size) + " outside " +
                                       std::to_string(width_) + "x" + std::to_string(height_));
  if (!(probability >= 0.0 && probability <= 1.0))
    throw Error(Errc::InvalidArgument, "probability outside [0, 1]");
  for (std::uint32_t r = y; r < y + size; ++r) {
    double* s = sum_.data() + index(x, r);
    std::uint32_t* c = count_.data() + index(x, r);
    for (std::uint32_t k = 0; k < size; ++k) {
      s[k] += probability;
      ++c[k];
    }
  }
}

double ProbAccumulator::mean(std::uint32_t x, std::uint32_t y) const {
  const auto i = index(x, y);
  return count_[i] ? sum_[i] / count_[i] : std::numeric_limits<double>::quiet_NaN();
}

void ColorRule::validate() const {
  if (class_of_interest != 0 && class_of_interest != 1)
    throw Error(Errc::InvalidArgument, "class of interest must be 0 or 1");
  if (!(boundary < high_cut && high_cut <= 1.0))
    throw Error(Errc::InvalidArgument, "color rule needs boundary < high_cut <= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(Errc::InvalidArgument, "alpha must lie in (0, 1]");
}

RasterImage render(const ProbAccumulator& acc, const RasterImage& base, const ColorRule& rule) {
  rule.validate();
  if (acc.width() != base.width() || acc.height() != base.height())
    throw Error(Errc::DimensionMismatch,
                "accumulator " + std::to_string(acc.width()) + "x" + std::to_string(acc.height()) +
                    " vs base " + std::to_string(base.width()) + "x" + std::to_string(base.height()));
  if (base.channels() != 3) throw Error(Errc::ChannelMismatch, "overlay base must be RGB");

  RasterImage out = base;
  for (std::uint32_t y = 0; y < base.height(); ++y) {
    for (std::uint32_t x = 0; x < base.width(); ++x) {
      if (acc.count(x, y) == 0) continue;
      const double m = acc.sum(x, y) / acc.count(x, y);
      const double q = rule.class_of_interest == 1 ? m : 1.0 - m;
      const Rgb* overlay = nullptr;
      if (q >= rule.high_cut) {
        overlay = &rule.high_color;
      } else if (q >= rule.boundary) {
        overlay = &rule.moderate_color;
      } else {
        continue;
      }
      for (std::uint32_t c = 0; c < 3; ++c) {
        const double v = rule.alpha * (*overlay)[c] + (1.0 - rule.alpha) * base.at(x, y, c);
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(v));
      }
    }
  }
  return out;
}

void write_raw_means(const ProbAccumulator& acc, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(8 + acc.sums().size() * 8);
  auto put = [&](std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put(acc.width(), 4);
  put(acc.height(), 4);
  for (std::uint32_t y = 0; y < acc.height(); ++y)
    for (std::uint32_t x = 0; x < acc.width(); ++x) put(std::bit_cast<std::uint64_t>(acc.mean(x, y)), 8);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::Io, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(Errc::Io, "write failed for " + path.string());
}

SlideMap map_slide(const RasterImage& img, const nn::CnnModel& model, const TileGridSpec& spec,
                   const SiftCriterion& criterion, const std::string& slide_id, ColorRule rule,
                   std::optional<int> truth_label) {
  if (model.input_size != spec.tile_size)
    throw Error(Errc::ShapeMismatch, "model input " + std::to_string(model.input_size) +
                                         " != tile size " + std::to_string(spec.tile_size));
  SlideMap out;
  out.records = tile_slide(img, spec, criterion, slide_id).records;
  out.predictions = classify_tiles(model, img, out.records);
  if (out.predictions.empty())
    throw Error(Errc::NoRetainedTiles, "every tile of '" + slide_id + "' was sifted away");

  out.accumulator = ProbAccumulator(img.width(), img.height());
  for (const auto& p : out.predictions) out.accumulator.accumulate(p.x, p.y, p.size, p.probability);
  out.result = aggregate_slide(out.predictions);
  rule.class_of_interest = truth_label.value_or(out.result.label_by_mean);
  out.overlay = render(out.accumulator, img, rule);
  return out;
}

}  // namespace slidesift
