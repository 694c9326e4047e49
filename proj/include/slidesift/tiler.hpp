#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "slidesift/entropy.hpp"
#include "slidesift/raster.hpp"

namespace slidesift {

struct TileGridSpec {
  std::uint32_t tile_size = 100;
  double overlap_fraction = 0.5;  // [0, 1)

  // max(1, round_half_up(t * (1 - overlap))).
  std::uint32_t stride() const;
  void validate() const;
};

struct TileOrigin {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  friend bool operator==(const TileOrigin&, const TileOrigin&) = default;
};

// Sifting criteria. ThresholdGray excludes tiles where a strict majority of
// gray samples are > white_cut or a strict majority are < black_cut.
struct EntropySift {
  friend bool operator==(const EntropySift&, const EntropySift&) = default;
};
struct ThresholdGraySift {
  std::uint8_t white_cut = 240;
  std::uint8_t black_cut = 15;
  friend bool operator==(const ThresholdGraySift&, const ThresholdGraySift&) = default;
};
struct UnsiftedSift {
  friend bool operator==(const UnsiftedSift&, const UnsiftedSift&) = default;
};
using SiftCriterion = std::variant<EntropySift, ThresholdGraySift, UnsiftedSift>;

std::string criterion_name(const SiftCriterion& c);
// Accepts "entropy", "unsifted", "threshold_gray" and "threshold_gray:<white>:<black>".
SiftCriterion parse_criterion(const std::string& text);

struct TileMeasurements {
  double entropy_bits = 0.0;
  double frac_white = 0.0;
  double frac_black = 0.0;
};

struct TileRecord {
  std::string slide_id;
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint32_t size = 0;
  double entropy_bits = 0.0;
  double frac_white = 0.0;
  double frac_black = 0.0;
  bool retained = false;
  SiftCriterion criterion = EntropySift{};

  friend bool operator==(const TileRecord&, const TileRecord&) = default;
};

struct TileSetSummary {
  std::size_t generated = 0;
  std::size_t retained = 0;
  double retention_ratio = 0.0;
};

// Origins on a regular stride grid, plus a final row/column anchored at the
// far edge when the regular grid stops short of it. Row-major, unique.
std::vector<TileOrigin> grid_origins(std::uint32_t image_w, std::uint32_t image_h,
                                     const TileGridSpec& spec);

// Entropy of the tile crop plus fractions of gray samples > white_cut / < black_cut.
TileMeasurements measure_tile(const RasterImage& img, std::uint32_t x, std::uint32_t y,
                              std::uint32_t size, const ThresholdGraySift& cuts = {});

bool sift(const TileMeasurements& m, const SiftCriterion& criterion, EntropyBits whole_image);

struct TiledSlide {
  std::vector<TileRecord> records;
  TileSetSummary summary;
  EntropyBits whole_image_entropy;
};

TiledSlide tile_slide(const RasterImage& img, const TileGridSpec& spec,
                      const SiftCriterion& criterion, const std::string& slide_id);

TileSetSummary summarize(const std::vector<TileRecord>& records);

// CSV manifest. Rows are written sorted by (slide_id, y, x).
void export_manifest(const std::vector<TileRecord>& records, const std::filesystem::path& path);
std::string manifest_text(const std::vector<TileRecord>& records);
std::vector<TileRecord> import_manifest(const std::filesystem::path& path);
std::vector<TileRecord> parse_manifest(const std::string& text);

// Writes one PNG per record named {slide_id}_{x}_{y}_{size}.png.
void export_tile_pngs(const RasterImage& img, const std::vector<TileRecord>& records,
                      const std::filesystem::path& dir, bool retained_only = true);

}  // namespace slidesift
