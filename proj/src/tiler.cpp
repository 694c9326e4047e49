#include "slidesift/tiler.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>

#include "slidesift/error.hpp"
#include "slidesift/parallel.hpp"

namespace slidesift {

std::uint32_t TileGridSpec::stride() const {
  const double raw = tile_size * (1.0 - overlap_fraction);
  const auto s = static_cast<std::int64_t>(std::floor(raw + 0.5));
  return static_cast<std::uint32_t>(std::max<std::int64_t>(1, s));
}

void TileGridSpec::validate() const {
  if (tile_size < 8)
    throw Error(Errc::InvalidArgument, "tile_size must be >= 8, got " + std::to_string(tile_size));
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0))
    throw Error(Errc::InvalidArgument,
                "overlap_fraction must lie in [0, 1), got " + std::to_string(overlap_fraction));
}

std::string criterion_name(const SiftCriterion& c) {
  if (std::holds_alternative<EntropySift>(c)) return "entropy";
  if (std::holds_alternative<UnsiftedSift>(c)) return "unsifted";
  const auto& g = std::get<ThresholdGraySift>(c);
  return "threshold_gray:" + std::to_string(g.white_cut) + ":" + std::to_string(g.black_cut);
}

SiftCriterion parse_criterion(const std::string& text) {
  if (text == "entropy") return EntropySift{};
  if (text == "unsifted") return UnsiftedSift{};
  if (text == "threshold_gray") return ThresholdGraySift{};
  int white = 0, black = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "threshold_gray:%d:%d%c", &white, &black, &tail) == 2) {
    if (black < 0 || white > 255 || black >= white)
      throw Error(Errc::InvalidArgument, "threshold cuts need 0 <= black < white <= 255: " + text);
    return ThresholdGraySift{static_cast<std::uint8_t>(white), static_cast<std::uint8_t>(black)};
  }
  throw Error(Errc::InvalidArgument, "unknown sift criterion '" + text + "'");
}

namespace {

std::vector<std::uint32_t> axis_origins(std::uint32_t extent, std::uint32_t tile,
                                        std::uint32_t stride) {
  std::vector<std::uint32_t> out;
  const std::uint32_t last = extent - tile;
  for (std::uint32_t p = 0; p <= last; p += stride) {
    out.push_back(p);
    if (last - p < stride) break;
  }
  if (out.back() != last) out.push_back(last);
  return out;
}

TileMeasurements measure_gray(const RasterImage& gray, std::uint32_t x, std::uint32_t y,
                              std::uint32_t size, const ThresholdGraySift& cuts) {
  Histogram256 h;
  for (std::uint32_t r = 0; r < size; ++r) {
    const std::uint8_t* row = gray.pixels().data() + std::size_t{y + r} * gray.width() + x;
    for (std::uint32_t c = 0; c < size; ++c) ++h.counts[row[c]];
  }
  h.total = std::uint64_t{size} * size;
  std::uint64_t white = 0, black = 0;
  for (int k = cuts.white_cut + 1; k < 256; ++k) white += h.counts[k];
  for (int k = 0; k < cuts.black_cut; ++k) black += h.counts[k];
  const double n = static_cast<double>(h.total);
  return {shannon_entropy(h).value, white / n, black / n};
}

}  // namespace

std::vector<TileOrigin> grid_origins(std::uint32_t image_w, std::uint32_t image_h,
                                     const TileGridSpec& spec) {
  spec.validate();
  if (image_w < spec.tile_size || image_h < spec.tile_size)
    throw Error(Errc::TileLargerThanImage,
                "tile " + std::to_string(spec.tile_size) + " does not fit image " +
                    std::to_string(image_w) + "x" + std::to_string(image_h));
  const auto s = spec.stride();
  const auto xs = axis_origins(image_w, spec.tile_size, s);
  const auto ys = axis_origins(image_h, spec.tile_size, s);
  std::vector<TileOrigin> out;
  out.reserve(xs.size() * ys.size());
  for (auto y : ys)
    for (auto x : xs) out.push_back({x, y});
  return out;
}

TileMeasurements measure_tile(const RasterImage& img, std::uint32_t x, std::uint32_t y,
                              std::uint32_t size, const ThresholdGraySift& cuts) {
  if (size == 0 || std::uint64_t{x} + size > img.width() || std::uint64_t{y} + size > img.height())
    throw Error(Errc::OutOfBounds, "tile at (" + std::to_string(x) + "," + std::to_string(y) +
                                       ") size " + std::to_string(size) + " outside image");
  if (img.channels() == 1) return measure_gray(img, x, y, size, cuts);
  return measure_gray(to_grayscale(img.crop(x, y, size, size)), 0, 0, size, cuts);
}

bool sift(const TileMeasurements& m, const SiftCriterion& criterion, EntropyBits whole_image) {
  return std::visit(
      [&](const auto& c) {
        using C = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<C, EntropySift>) {
          return m.entropy_bits >= whole_image.value;
        } else if constexpr (std::is_same_v<C, ThresholdGraySift>) {
          return m.frac_white <= 0.5 && m.frac_black <= 0.5;
        } else {
          return true;
        }
      },
      criterion);
}

TileSetSummary summarize(const std::vector<TileRecord>& records) {
  TileSetSummary s;
  s.generated = records.size();
  s.retained = static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const auto& r) { return r.retained; }));
  s.retention_ratio = s.generated ? static_cast<double>(s.retained) / s.generated : 0.0;
  return s;
}

TiledSlide tile_slide(const RasterImage& img, const TileGridSpec& spec,
                      const SiftCriterion& criterion, const std::string& slide_id) {
  const auto origins = grid_origins(img.width(), img.height(), spec);
  const RasterImage gray = to_grayscale(img);
  const EntropyBits whole = shannon_entropy(histogram(gray));
  const ThresholdGraySift cuts = std::holds_alternative<ThresholdGraySift>(criterion)
                                     ? std::get<ThresholdGraySift>(criterion)
                                     : ThresholdGraySift{};

  TiledSlide out;
  out.whole_image_entropy = whole;
  out.records.resize(origins.size());
  parallel_for(origins.size(), [&](std::size_t i) {
    const auto [x, y] = origins[i];
    const auto m = measure_gray(gray, x, y, spec.tile_size, cuts);
    out.records[i] = TileRecord{slide_id,          x,
                                y,                 spec.tile_size,
                                m.entropy_bits,    m.frac_white,
                                m.frac_black,      sift(m, criterion, whole),
                                criterion};
  });
  out.summary = summarize(out.records);
  return out;
}

namespace {

constexpr const char* kManifestHeader =
    "slide_id,x,y,size,entropy_bits,frac_white,frac_black,retained,criterion";

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw Error(Errc::Format, "manifest line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

std::uint32_t parse_u32(const std::string& s, std::size_t line) {
  std::uint32_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw Error(Errc::Format, "manifest line " + std::to_string(line) + ": bad integer '" + s + "'");
  return v;
}

}  // namespace

std::string manifest_text(const std::vector<TileRecord>& records) {
  std::vector<const TileRecord*> order;
  order.reserve(records.size());
  for (const auto& r : records) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(), [](const TileRecord* a, const TileRecord* b) {
    return std::tie(a->slide_id, a->y, a->x) < std::tie(b->slide_id, b->y, b->x);
  });

  std::string out = kManifestHeader;
  out += '\n';
  char entropy[32];
  for (const auto* r : order) {
    std::snprintf(entropy, sizeof entropy, "%.6f", r->entropy_bits);
    out += r->slide_id;
    out += ',' + std::to_string(r->x) + ',' + std::to_string(r->y) + ',' + std::to_string(r->size);
    out += ',';
    out += entropy;
    out += ',' + shortest(r->frac_white) + ',' + shortest(r->frac_black);
    out += r->retained ? ",1," : ",0,";
    out += criterion_name(r->criterion);
    out += '\n';
  }
  return out;
}

void export_manifest(const std::vector<TileRecord>& records, const std::filesystem::path& path) {
  if (records.empty()) throw Error(Errc::InvalidArgument, "manifest needs at least one record");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::Io, "cannot open " + path.string() + " for writing");
  const auto text = manifest_text(records);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw Error(Errc::Io, "write failed for " + path.string());
}

std::vector<TileRecord> parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader)
    throw Error(Errc::Format, "manifest header mismatch");
  std::vector<TileRecord> records;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9)
      throw Error(Errc::Format, "manifest line " + std::to_string(lineno) + ": expected 9 fields");
    if (f[7] != "0" && f[7] != "1")
      throw Error(Errc::Format, "manifest line " + std::to_string(lineno) + ": bad retained flag");
    TileRecord r;
    r.slide_id = f[0];
    r.x = parse_u32(f[1], lineno);
    r.y = parse_u32(f[2], lineno);
    r.size = parse_u32(f[3], lineno);
    r.entropy_bits = parse_double(f[4], lineno);
    r.frac_white = parse_double(f[5], lineno);
    r.frac_black = parse_double(f[6], lineno);
    r.retained = f[7] == "1";
    try {
      r.criterion = parse_criterion(f[8]);
    } catch (const Error& e) {
      throw Error(Errc::Format, "manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<TileRecord> import_manifest(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::Io, "cannot read " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_manifest(buf.str());
}

void export_tile_pngs(const RasterImage& img, const std::vector<TileRecord>& records,
                      const std::filesystem::path& dir, bool retained_only) {
  std::filesystem::create_directories(dir);
  for (const auto& r : records) {
    if (retained_only && !r.retained) continue;
    const auto name = r.slide_id + "_" + std::to_string(r.x) + "_" + std::to_string(r.y) + "_" +
                      std::to_string(r.size) + ".png";
    save_png(img.crop(r.x, r.y, r.size, r.size), dir / name);
  }
}

}  // namespace slidesift
