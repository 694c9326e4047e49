#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "slidesift/eval.hpp"
#include "slidesift/nn.hpp"
#include "slidesift/raster.hpp"
#include "slidesift/tiler.hpp"

namespace slidesift {

// Crops of the retained records (all records if retained_only is false).
std::vector<RasterImage> crop_tiles(const RasterImage& img, const std::vector<TileRecord>& records,
                                    bool retained_only = true);

// One prediction per retained record, in record order.
std::vector<TilePrediction> classify_tiles(const nn::CnnModel& model, const RasterImage& img,
                                           const std::vector<TileRecord>& records);

// Groups records by slide id, keeping only the listed slides (all if empty).
std::map<std::string, std::vector<TileRecord>> group_by_slide(
    const std::vector<TileRecord>& records, const std::vector<std::string>& only = {});

// Finds {dir}/{slide_id}.{png,jpg,jpeg,tif,tiff}.
std::filesystem::path find_slide_image(const std::filesystem::path& dir, const std::string& slide_id);

// Loads slide images on demand from a directory and keeps them in memory.
class SlideStore {
 public:
  explicit SlideStore(std::filesystem::path dir) : dir_(std::move(dir)) {}
  void insert(const std::string& slide_id, RasterImage img) { cache_[slide_id] = std::move(img); }
  const RasterImage& get(const std::string& slide_id);

 private:
  std::filesystem::path dir_;
  std::map<std::string, RasterImage> cache_;
};

// Retained tiles of the given slides, labelled from the label map.
nn::TileDataset build_dataset(SlideStore& slides,
                              const std::map<std::string, std::vector<TileRecord>>& records,
                              const LabelMap& labels, std::uint32_t tile_size);

// Classifies every retained tile and scores the slides against truth.
EvalReport evaluate_model(const nn::CnnModel& model, SlideStore& slides,
                          const std::map<std::string, std::vector<TileRecord>>& records,
                          const LabelMap& truth);

}  // namespace slidesift
