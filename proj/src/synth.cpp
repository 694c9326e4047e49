#include "slidesift/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "slidesift/error.hpp"
#include "slidesift/parallel.hpp"

namespace slidesift {

namespace {

struct Color {
  double r, g, b;
};

constexpr Color kEosin{226.0, 152.0, 192.0};
constexpr Color kHematoxylin{112.0, 58.0, 150.0};
constexpr Color kBackground{248.0, 246.0, 247.0};

std::uint8_t clamp8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// Stain density in [0, 1] from overlapping Gaussian nuclei.
std::vector<float> blob_field(std::uint32_t w, std::uint32_t h, std::mt19937_64& rng) {
  std::vector<float> field(std::size_t{w} * h, 0.0f);
  std::uniform_real_distribution<double> ux(0.0, w), uy(0.0, h), usigma(3.5, 9.0);
  const std::size_t n_blobs = std::size_t{w} * h / 260;
  for (std::size_t b = 0; b < n_blobs; ++b) {
    const double cx = ux(rng), cy = uy(rng), sigma = usigma(rng);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    const int x0 = std::max(0, static_cast<int>(cx) - r), x1 = std::min<int>(w - 1, static_cast<int>(cx) + r);
    const int y0 = std::max(0, static_cast<int>(cy) - r), y1 = std::min<int>(h - 1, static_cast<int>(cy) + r);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        field[std::size_t(y) * w + x] += static_cast<float>(std::exp(-d2 * inv));
      }
  }
  for (auto& v : field) v = std::min(1.0f, v);
  return field;
}

std::vector<float> stripe_field(std::uint32_t w, std::uint32_t h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi), period(4.5, 7.5),
      phase(0.0, 2.0 * std::numbers::pi), wobble(0.0, 2.0 * std::numbers::pi);
  const double theta = angle(rng), lambda = period(rng), phi = phase(rng), psi = wobble(rng);
  const double c = std::cos(theta), s = std::sin(theta);
  std::vector<float> field(std::size_t{w} * h);
  for (std::uint32_t y = 0; y < h; ++y)
    for (std::uint32_t x = 0; x < w; ++x) {
      // slow bending keeps stripes from being perfectly straight
      const double bend = 2.0 * std::sin((x * s - y * c) / 40.0 + psi);
      const double t = (x * c + y * s + bend) / lambda;
      field[std::size_t{y} * w + x] = static_cast<float>(0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * t + phi));
    }
  return field;
}

}  // namespace

RasterImage generate_slide(const SynthSpec& spec) {
  if (spec.width < 128 || spec.height < 128)
    throw Error(Errc::InvalidArgument, "synthetic slides need dims >= 128");
  if (spec.class_label != 0 && spec.class_label != 1)
    throw Error(Errc::InvalidArgument, "class label must be 0 or 1");
  if (!(spec.tissue_fraction > 0.0 && spec.tissue_fraction <= 1.0))
    throw Error(Errc::InvalidArgument, "tissue_fraction must lie in (0, 1]");

  const std::uint32_t w = spec.width, h = spec.height;
  std::mt19937_64 rng(spec.seed * 2 + static_cast<std::uint64_t>(spec.class_label));
  const auto field = spec.class_label == 0 ? blob_field(w, h, rng) : stripe_field(w, h, rng);

  // Tissue occupies the columns left (or right) of a wavy boundary whose mean
  // position gives the requested area fraction.
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const bool mirror = u01(rng) < 0.5;
  const double f = spec.tissue_fraction;
  const double amplitude = 0.08 * w * std::min(f, 1.0 - f);
  const double wave_period = h / (1.0 + std::floor(u01(rng) * 3.0));
  const double wave_phase = u01(rng) * 2.0 * std::numbers::pi;

  std::normal_distribution<double> tissue_noise(0.0, 7.0);
  std::uniform_int_distribution<int> bg_noise(-3, 3);

  RasterImage img(w, h, 3);
  for (std::uint32_t y = 0; y < h; ++y) {
    const double edge = f * w + amplitude * std::sin(2.0 * std::numbers::pi * y / wave_period + wave_phase);
    for (std::uint32_t x = 0; x < w; ++x) {
      const double col = mirror ? static_cast<double>(w - 1 - x) : static_cast<double>(x);
      if (col + 0.5 <= edge) {
        const double d = field[std::size_t{y} * w + x];
        img.at(x, y, 0) = clamp8(kEosin.r + (kHematoxylin.r - kEosin.r) * d + tissue_noise(rng));
        img.at(x, y, 1) = clamp8(kEosin.g + (kHematoxylin.g - kEosin.g) * d + tissue_noise(rng));
        img.at(x, y, 2) = clamp8(kEosin.b + (kHematoxylin.b - kEosin.b) * d + tissue_noise(rng));
      } else {
        img.at(x, y, 0) = clamp8(kBackground.r + bg_noise(rng));
        img.at(x, y, 1) = clamp8(kBackground.g + bg_noise(rng));
        img.at(x, y, 2) = clamp8(kBackground.b + bg_noise(rng));
      }
    }
  }
  return img;
}

std::vector<SynthSlide> plan_corpus(std::uint32_t n_per_class, std::uint32_t width,
                                    std::uint32_t height, std::uint64_t seed) {
  if (n_per_class < 1) throw Error(Errc::InvalidArgument, "n_per_class must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> fraction(0.5, 0.9);
  std::vector<SynthSlide> out;
  out.reserve(2 * std::size_t{n_per_class});
  char id[32];
  for (std::uint32_t i = 1; i <= n_per_class; ++i) {
    for (int label = 0; label < 2; ++label) {
      std::snprintf(id, sizeof id, "syn%c-%03u", label == 0 ? 'A' : 'B', i);
      SynthSpec spec{width, height, label, fraction(rng), rng()};
      out.push_back({id, label, spec});
    }
  }
  return out;
}

LabelMap generate_corpus(std::uint32_t n_per_class, std::uint32_t width, std::uint32_t height,
                         std::uint64_t seed, const std::filesystem::path& dir) {
  const auto plan = plan_corpus(n_per_class, width, height, seed);
  std::filesystem::create_directories(dir);
  parallel_for(plan.size(), [&](std::size_t i) {
    save_png(generate_slide(plan[i].spec), dir / (plan[i].slide_id + ".png"));
  });
  LabelMap labels;
  for (const auto& s : plan) labels[s.slide_id] = s.label;
  write_labels(labels, dir / "labels.csv");
  return labels;
}

}  // namespace slidesift
