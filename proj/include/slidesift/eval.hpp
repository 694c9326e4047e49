#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace slidesift {

struct TilePrediction {
  std::string slide_id;
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint32_t size = 0;
  double probability = 0.5;
};

// Decision boundary is closed on the class-1 side: p >= 0.5 is class 1, and a
// vote tie (exactly half the tiles) is class 1 as well.
struct SlideResult {
  std::string slide_id;
  double mean_probability = 0.0;
  double vote_fraction_class1 = 0.0;
  int label_by_mean = 0;
  int label_by_vote = 0;
  std::size_t tile_count = 0;
  double tile_prob_variance = 0.0;  // population variance
};

SlideResult aggregate_slide(const std::vector<TilePrediction>& preds);

struct EvalReport {
  double accuracy = 0.0;
  double margin = 0.0;              // mean |mean_probability - 0.5|
  double mean_tile_variance = 0.0;  // mean of per-slide tile variances
  std::vector<SlideResult> slides;
  std::vector<std::string> excluded;  // ground-truth slides without any tiles
  std::size_t correct = 0;
};

using LabelMap = std::map<std::string, int>;

// Aggregates predictions per slide and scores label_by_mean against truth.
// Throws MissingGroundTruth for predicted slides absent from truth; truth
// slides without predictions are excluded with a warning.
EvalReport evaluate(const std::vector<TilePrediction>& preds, const LabelMap& truth);

std::string report_json(const EvalReport& report);

struct Partition {
  std::string name;
  std::vector<std::string> train_slides;
  std::vector<std::string> test_slides;
};

// Stratified partitions with pairwise-disjoint test sets. Each class
// contributes round(test_fraction * class_count) slides to every test set.
std::vector<Partition> make_partitions(const LabelMap& labels, std::size_t n_partitions = 3,
                                       double test_fraction = 0.30, std::uint64_t seed = 0);

std::string partitions_json(const std::vector<Partition>& partitions);
std::vector<Partition> parse_partitions_json(const std::string& text);

// Two-column CSV `slide_id,label`, optional header row.
LabelMap read_labels(const std::filesystem::path& path);
LabelMap parse_labels(const std::string& text);
void write_labels(const LabelMap& labels, const std::filesystem::path& path);

}  // namespace slidesift
