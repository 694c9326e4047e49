#include "slidesift/pipeline.hpp"

#include <algorithm>
#include <set>

#include "slidesift/error.hpp"

namespace slidesift {

std::vector<RasterImage> crop_tiles(const RasterImage& img, const std::vector<TileRecord>& records,
                                    bool retained_only) {
  std::vector<RasterImage> tiles;
  for (const auto& r : records)
    if (!retained_only || r.retained) tiles.push_back(img.crop(r.x, r.y, r.size, r.size));
  return tiles;
}

std::vector<TilePrediction> classify_tiles(const nn::CnnModel& model, const RasterImage& img,
                                           const std::vector<TileRecord>& records) {
  std::vector<const TileRecord*> kept;
  for (const auto& r : records)
    if (r.retained) kept.push_back(&r);
  std::vector<TilePrediction> out;
  out.reserve(kept.size());
  // Bounded batches keep crop memory flat on large slides.
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < kept.size(); start += kChunk) {
    std::vector<RasterImage> tiles;
    const std::size_t end = std::min(kept.size(), start + kChunk);
    for (std::size_t i = start; i < end; ++i)
      tiles.push_back(img.crop(kept[i]->x, kept[i]->y, kept[i]->size, kept[i]->size));
    const auto probs = nn::predict(model, tiles);
    for (std::size_t i = start; i < end; ++i)
      out.push_back({kept[i]->slide_id, kept[i]->x, kept[i]->y, kept[i]->size, probs[i - start]});
  }
  return out;
}

std::map<std::string, std::vector<TileRecord>> group_by_slide(const std::vector<TileRecord>& records,
                                                              const std::vector<std::string>& only) {
  const std::set<std::string> keep(only.begin(), only.end());
  std::map<std::string, std::vector<TileRecord>> out;
  for (const auto& r : records)
    if (keep.empty() || keep.contains(r.slide_id)) out[r.slide_id].push_back(r);
  return out;
}

std::filesystem::path find_slide_image(const std::filesystem::path& dir, const std::string& slide_id) {
  for (const char* ext : {".png", ".jpg", ".jpeg", ".tif", ".tiff"}) {
    auto p = dir / (slide_id + ext);
    if (std::filesystem::exists(p)) return p;
  }
  throw Error(Errc::Io, "no image for slide '" + slide_id + "' in " + dir.string());
}

const RasterImage& SlideStore::get(const std::string& slide_id) {
  auto it = cache_.find(slide_id);
  if (it != cache_.end()) return it->second;
  return cache_.emplace(slide_id, load_image(find_slide_image(dir_, slide_id))).first->second;
}

nn::TileDataset build_dataset(SlideStore& slides,
                              const std::map<std::string, std::vector<TileRecord>>& records,
                              const LabelMap& labels, std::uint32_t tile_size) {
  nn::TileDataset data;
  data.tile_size = tile_size;
  for (const auto& [id, recs] : records) {
    auto label = labels.find(id);
    if (label == labels.end())
      throw Error(Errc::MissingGroundTruth, "no label for training slide '" + id + "'");
    const RasterImage& img = slides.get(id);
    for (const auto& r : recs) {
      if (!r.retained) continue;
      if (r.size != tile_size)
        throw Error(Errc::ShapeMismatch, "manifest tile size " + std::to_string(r.size) +
                                             " != " + std::to_string(tile_size));
      auto crop = img.crop(r.x, r.y, r.size, r.size);
      data.tiles.push_back({std::vector<std::uint8_t>(crop.pixels().begin(), crop.pixels().end()),
                            label->second});
    }
  }
  return data;
}

EvalReport evaluate_model(const nn::CnnModel& model, SlideStore& slides,
                          const std::map<std::string, std::vector<TileRecord>>& records,
                          const LabelMap& truth) {
  std::vector<TilePrediction> preds;
  LabelMap scored;
  for (const auto& [id, recs] : records) {
    auto label = truth.find(id);
    if (label == truth.end())
      throw Error(Errc::MissingGroundTruth, "no ground truth for slide '" + id + "'");
    scored.insert(*label);
    auto p = classify_tiles(model, slides.get(id), recs);
    preds.insert(preds.end(), p.begin(), p.end());
  }
  return evaluate(preds, scored);
}

}  // namespace slidesift
