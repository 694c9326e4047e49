#include "slidesift/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "json.hpp"
#include "slidesift/error.hpp"

namespace slidesift {

SlideResult aggregate_slide(const std::vector<TilePrediction>& preds) {
  if (preds.empty()) throw Error(Errc::EmptyPredictionSet, "no tile predictions to aggregate");
  SlideResult r;
  r.slide_id = preds.front().slide_id;
  r.tile_count = preds.size();
  double sum = 0.0;
  std::size_t votes = 0;
  for (const auto& p : preds) {
    if (p.slide_id != r.slide_id)
      throw Error(Errc::InvalidArgument, "mixed slide ids '" + r.slide_id + "' and '" + p.slide_id + "'");
    if (!std::isfinite(p.probability) || p.probability < 0.0 || p.probability > 1.0)
      throw Error(Errc::InvalidArgument, "tile probability outside [0, 1] on " + p.slide_id);
    sum += p.probability;
    votes += p.probability >= 0.5;
  }
  const double n = static_cast<double>(preds.size());
  r.mean_probability = sum / n;
  double ss = 0.0;
  for (const auto& p : preds) ss += (p.probability - r.mean_probability) * (p.probability - r.mean_probability);
  r.tile_prob_variance = ss / n;
  r.vote_fraction_class1 = static_cast<double>(votes) / n;
  r.label_by_mean = r.mean_probability >= 0.5 ? 1 : 0;
  r.label_by_vote = 2 * votes >= preds.size() ? 1 : 0;
  return r;
}

EvalReport evaluate(const std::vector<TilePrediction>& preds, const LabelMap& truth) {
  std::map<std::string, std::vector<TilePrediction>> by_slide;
  for (const auto& p : preds) {
    if (!truth.contains(p.slide_id))
      throw Error(Errc::MissingGroundTruth, "no ground truth for slide '" + p.slide_id + "'");
    by_slide[p.slide_id].push_back(p);
  }
  for (const auto& [id, label] : truth)
    if (label != 0 && label != 1)
      throw Error(Errc::InvalidArgument, "label for '" + id + "' must be 0 or 1");

  EvalReport report;
  for (const auto& [id, label] : truth) {
    auto it = by_slide.find(id);
    if (it == by_slide.end()) {
      spdlog::warn("slide {} has no retained tiles; excluded from accuracy", id);
      report.excluded.push_back(id);
      continue;
    }
    report.slides.push_back(aggregate_slide(it->second));
    const auto& s = report.slides.back();
    report.correct += s.label_by_mean == label;
    report.margin += std::abs(s.mean_probability - 0.5);
    report.mean_tile_variance += s.tile_prob_variance;
  }
  if (!report.slides.empty()) {
    const double n = static_cast<double>(report.slides.size());
    report.accuracy = static_cast<double>(report.correct) / n;
    report.margin /= n;
    report.mean_tile_variance /= n;
  }
  return report;
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json slides = nlohmann::ordered_json::array();
  for (const auto& s : report.slides)
    slides.push_back({{"slide_id", s.slide_id},
                      {"mean_probability", s.mean_probability},
                      {"vote_fraction_class1", s.vote_fraction_class1},
                      {"label_by_mean", s.label_by_mean},
                      {"label_by_vote", s.label_by_vote},
                      {"tile_count", s.tile_count},
                      {"tile_prob_variance", s.tile_prob_variance}});
  nlohmann::ordered_json j{{"accuracy", report.accuracy},
                           {"margin", report.margin},
                           {"mean_tile_variance", report.mean_tile_variance},
                           {"correct", report.correct},
                           {"slides", std::move(slides)},
                           {"excluded", report.excluded}};
  return j.dump(2);
}

std::vector<Partition> make_partitions(const LabelMap& labels, std::size_t n_partitions,
                                       double test_fraction, std::uint64_t seed) {
  if (n_partitions < 1) throw Error(Errc::InvalidArgument, "need at least one partition");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw Error(Errc::InvalidArgument, "test_fraction must lie in (0, 1)");

  std::vector<std::string> by_class[2];
  for (const auto& [id, label] : labels) {
    if (label != 0 && label != 1)
      throw Error(Errc::InvalidArgument, "label for '" + id + "' must be 0 or 1");
    by_class[label].push_back(id);
  }

  std::mt19937_64 rng(seed);
  std::size_t per_test[2];
  for (int c = 0; c < 2; ++c) {
    const std::size_t n = by_class[c].size();
    per_test[c] = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(n) + 0.5));
    if (per_test[c] == 0 || n_partitions * per_test[c] > n)
      throw Error(Errc::InsufficientSlides,
                  "class " + std::to_string(c) + " has " + std::to_string(n) + " slides; " +
                      std::to_string(n_partitions) + " disjoint test sets of " +
                      std::to_string(std::max<std::size_t>(per_test[c], 1)) + " need more");
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
  }

  std::vector<Partition> out;
  for (std::size_t p = 0; p < n_partitions; ++p) {
    Partition part;
    part.name = "XValSet" + std::to_string(p + 1);
    std::set<std::string> test;
    for (int c = 0; c < 2; ++c)
      for (std::size_t k = p * per_test[c]; k < (p + 1) * per_test[c]; ++k) test.insert(by_class[c][k]);
    part.test_slides.assign(test.begin(), test.end());
    for (const auto& [id, label] : labels)
      if (!test.contains(id)) part.train_slides.push_back(id);
    out.push_back(std::move(part));
  }
  return out;
}

std::string partitions_json(const std::vector<Partition>& partitions) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& p : partitions)
    j.push_back({{"name", p.name}, {"train", p.train_slides}, {"test", p.test_slides}});
  return j.dump(2);
}

std::vector<Partition> parse_partitions_json(const std::string& text) {
  std::vector<Partition> out;
  try {
    for (const auto& j : nlohmann::json::parse(text)) {
      out.push_back({j.at("name").get<std::string>(), j.at("train").get<std::vector<std::string>>(),
                     j.at("test").get<std::vector<std::string>>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, std::string("bad partitions file: ") + e.what());
  }
  return out;
}

LabelMap parse_labels(const std::string& text) {
  LabelMap labels;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw Error(Errc::Format, "labels line " + std::to_string(lineno) + ": expected slide_id,label");
    const std::string id = line.substr(0, comma);
    const std::string value = line.substr(comma + 1);
    if (lineno == 1 && id == "slide_id") continue;
    if (value != "0" && value != "1")
      throw Error(Errc::Format, "labels line " + std::to_string(lineno) + ": label must be 0 or 1");
    if (!labels.emplace(id, value == "1" ? 1 : 0).second)
      throw Error(Errc::Format, "duplicate slide id '" + id + "' in labels");
  }
  return labels;
}

LabelMap read_labels(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::Io, "cannot read labels " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_labels(buf.str());
}

void write_labels(const LabelMap& labels, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::Io, "cannot open " + path.string() + " for writing");
  f << "slide_id,label\n";
  for (const auto& [id, label] : labels) f << id << ',' << label << '\n';
  if (!f) throw Error(Errc::Io, "write failed for " + path.string());
}

}  // namespace slidesift
