#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "slidesift/eval.hpp"
#include "slidesift/raster.hpp"

namespace slidesift {

struct SynthSpec {
  std::uint32_t width = 512;
  std::uint32_t height = 512;
  int class_label = 0;  // 0: blob texture, 1: stripe texture
  double tissue_fraction = 0.7;
  std::uint64_t seed = 0;
};

// Stain-like pink/purple tissue over a near-white (gray > 240) background.
// Deterministic in the spec; throws InvalidArgument for dims < 128.
RasterImage generate_slide(const SynthSpec& spec);

struct SynthSlide {
  std::string slide_id;  // synA-### (class 0) or synB-### (class 1)
  int label = 0;
  SynthSpec spec;
};

// Specs for 2n slides, interleaved by index, with tissue fractions in [0.5, 0.9].
std::vector<SynthSlide> plan_corpus(std::uint32_t n_per_class, std::uint32_t width,
                                    std::uint32_t height, std::uint64_t seed);

// Writes every slide as {slide_id}.png plus labels.csv into dir.
LabelMap generate_corpus(std::uint32_t n_per_class, std::uint32_t width, std::uint32_t height,
                         std::uint64_t seed, const std::filesystem::path& dir);

}  // namespace slidesift
