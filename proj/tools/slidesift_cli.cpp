// slidesift command-line front end: rescale, tile, train, eval, classify, map,
// synth, partition. Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "slidesift/entropy.hpp"
#include "slidesift/error.hpp"
#include "slidesift/eval.hpp"
#include "slidesift/nn.hpp"
#include "slidesift/parallel.hpp"
#include "slidesift/pipeline.hpp"
#include "slidesift/probmap.hpp"
#include "slidesift/raster.hpp"
#include "slidesift/synth.hpp"
#include "slidesift/tiler.hpp"

namespace fs = std::filesystem;
using namespace slidesift;
using json = nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool is_image_path(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".tif" || ext == ".tiff";
}

// A single image file, or every image in a directory (sorted). Non-images are
// skipped with a warning.
std::vector<fs::path> list_images(const fs::path& in) {
  if (fs::is_regular_file(in)) return {in};
  if (!fs::is_directory(in)) throw UsageError("input not found: " + in.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(in)) {
    if (!e.is_regular_file()) continue;
    if (is_image_path(e.path())) {
      out.push_back(e.path());
    } else {
      spdlog::warn("skipping non-image {}", e.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw UsageError("no inputs in " + in.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::Io, "cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw Error(Errc::Io, "write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::Io, "cannot read " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// key = value lines; '#' starts a comment; [section] headers are ignored.
// Values fill options that were not given on the command line.
void apply_config_file(CLI::App* sub, const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot read config file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front())
      value = value.substr(1, value.size() - 2);
    CLI::Option* opt = key == "config" ? nullptr : sub->get_option_no_throw("--" + key);
    if (!opt) throw UsageError(path.string() + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

// Resolved options of the subcommand; no timestamps so reruns are byte-identical.
void write_run_json(CLI::App* sub, const fs::path& out_dir) {
  json config = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt == sub->get_help_ptr()) continue;
    std::string name = opt->get_name();
    if (name.rfind("--", 0) == 0) name = name.substr(2);
    if (name == "config") continue;
    if (opt->get_expected_min() == 0) {
      config[name] = opt->as<bool>();
    } else if (opt->count() > 0) {
      const auto& r = opt->results();
      config[name] = r.size() == 1 ? json(r.front()) : json(r);
    } else {
      config[name] = opt->get_default_str();
    }
  }
  json run{{"subcommand", sub->get_name()}, {"config", config}};
  write_text(out_dir / "run.json", run.dump(2) + "\n");
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::vector<TileRecord> load_manifests(const std::vector<fs::path>& paths) {
  std::vector<TileRecord> all;
  for (const auto& p : paths) {
    auto r = import_manifest(p);
    all.insert(all.end(), r.begin(), r.end());
  }
  if (all.empty()) throw RuntimeFailure("manifests contain no tiles");
  return all;
}

std::uint32_t common_tile_size(const std::vector<TileRecord>& records) {
  const std::uint32_t size = records.front().size;
  for (const auto& r : records)
    if (r.size != size) throw RuntimeFailure("manifests mix tile sizes " + std::to_string(size) +
                                             " and " + std::to_string(r.size));
  return size;
}

// Slides selected by --partitions/--partition, or every labelled slide.
std::vector<std::string> select_slides(const std::string& partitions_file, const std::string& partition,
                                       bool test_side, const LabelMap& labels) {
  if (partitions_file.empty()) {
    if (!partition.empty()) throw UsageError("--partition needs --partitions");
    std::vector<std::string> ids;
    for (const auto& [id, _] : labels) ids.push_back(id);
    return ids;
  }
  if (partition.empty()) throw UsageError("--partitions needs --partition NAME");
  for (const auto& p : parse_partitions_json(read_text(partitions_file)))
    if (p.name == partition) return test_side ? p.test_slides : p.train_slides;
  throw UsageError("partition '" + partition + "' not found in " + partitions_file);
}

json slide_json(const SlideResult& s) {
  return json{{"slide_id", s.slide_id},
              {"mean_probability", s.mean_probability},
              {"vote_fraction_class1", s.vote_fraction_class1},
              {"label_by_mean", s.label_by_mean},
              {"label_by_vote", s.label_by_vote},
              {"tile_count", s.tile_count},
              {"tile_prob_variance", s.tile_prob_variance}};
}

// ---------------------------------------------------------------------------

struct RescaleArgs {
  fs::path in, out;
  std::uint32_t max_dim = 6000;
};

int run_rescale(const RescaleArgs& a) {
  const auto inputs = list_images(a.in);
  fs::create_directories(a.out);
  int failures = 0;
  for (const auto& p : inputs) {
    try {
      const auto img = load_image(p);
      const auto out = rescale(img, {a.max_dim});
      save_png(out, a.out / (p.stem().string() + ".png"));
      spdlog::info("rescaled {} {}x{} -> {}x{}", p.filename().string(), img.width(), img.height(),
                   out.width(), out.height());
    } catch (const Error& e) {
      spdlog::error("{}: {}", p.filename().string(), e.what());
      ++failures;
    }
  }
  return failures ? 1 : 0;
}

struct TileArgs {
  fs::path in, out;
  std::uint32_t size = 100;
  double overlap = 0.5;
  std::string criterion = "entropy";
  bool export_tiles = false;
};

int run_tile(const TileArgs& a) {
  const auto criterion = parse_criterion(a.criterion);
  const TileGridSpec spec{a.size, a.overlap};
  spec.validate();
  const auto inputs = list_images(a.in);
  fs::create_directories(a.out);

  std::vector<TileRecord> all;
  json slides = json::array();
  std::size_t generated = 0, retained = 0;
  for (const auto& p : inputs) {
    const std::string id = p.stem().string();
    const auto img = load_image(p);
    const auto tiled = tile_slide(img, spec, criterion, id);
    spdlog::info("{}: {} tiles, {} retained (retention {})", id, tiled.summary.generated,
                 tiled.summary.retained, fmt4(tiled.summary.retention_ratio));
    if (a.export_tiles) export_tile_pngs(img, tiled.records, a.out / "tiles");
    generated += tiled.summary.generated;
    retained += tiled.summary.retained;
    slides.push_back({{"slide_id", id},
                      {"width", img.width()},
                      {"height", img.height()},
                      {"whole_image_entropy", tiled.whole_image_entropy.value},
                      {"generated", tiled.summary.generated},
                      {"retained", tiled.summary.retained},
                      {"retention_ratio", tiled.summary.retention_ratio}});
    all.insert(all.end(), tiled.records.begin(), tiled.records.end());
  }
  export_manifest(all, a.out / "manifest.csv");
  const double ratio = generated ? static_cast<double>(retained) / generated : 0.0;
  json summary{{"criterion", criterion_name(criterion)},
               {"tile_size", a.size},
               {"overlap", a.overlap},
               {"stride", spec.stride()},
               {"generated", generated},
               {"retained", retained},
               {"retention_ratio", ratio},
               {"slides", slides}};
  write_text(a.out / "summary.json", summary.dump(2) + "\n");
  std::printf("retention %s (%zu of %zu tiles, criterion %s)\n", fmt4(ratio).c_str(), retained,
              generated, criterion_name(criterion).c_str());
  return 0;
}

struct TrainArgs {
  std::vector<fs::path> manifests;
  fs::path labels, images, out;
  std::string partitions, partition;
  std::uint32_t epochs = 35, batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  bool no_flip = false;
};

int run_train(const TrainArgs& a) {
  const auto labels = read_labels(a.labels);
  const auto records = load_manifests(a.manifests);
  const auto tile_size = common_tile_size(records);
  const auto slides = select_slides(a.partitions, a.partition, false, labels);
  const auto grouped = group_by_slide(records, slides);
  if (grouped.empty()) throw RuntimeFailure("no manifest tiles belong to the training slides");

  SlideStore store(a.images);
  const auto data = build_dataset(store, grouped, labels, tile_size);
  spdlog::info("training on {} tiles from {} slides, tile size {}", data.tiles.size(), grouped.size(),
               tile_size);

  nn::TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.learning_rate = a.lr;
  cfg.seed = a.seed;
  cfg.flip_augmentation = !a.no_flip;
  cfg.checkpoint_dir = a.out / "checkpoints";
  cfg.validate();

  auto model = nn::build_reference_model(tile_size, a.seed);
  const auto cost = nn::count_params_flops(model);
  spdlog::info("reference model: {} parameters, {} FLOPs per tile", cost.params, cost.flops);

  std::string log = "epoch,mean_loss,train_accuracy,checkpoint\n";
  const auto checkpoints = nn::train(model, data, cfg, [](const nn::CheckpointInfo& c) {
    spdlog::info("epoch {}: loss {} train accuracy {}", c.epoch, fmt4(c.mean_loss), fmt4(c.train_accuracy));
  });
  std::string listing;
  for (const auto& c : checkpoints) {
    char row[256];
    std::snprintf(row, sizeof row, "%u,%.6f,%.6f,%s\n", c.epoch, c.mean_loss, c.train_accuracy,
                  c.path.filename().string().c_str());
    log += row;
    listing += c.path.filename().string() + "\n";
  }
  write_text(a.out / "training_log.csv", log);
  write_text(a.out / "checkpoints.txt", listing);
  std::printf("wrote %zu checkpoints to %s\n", checkpoints.size(), cfg.checkpoint_dir.string().c_str());
  return 0;
}

struct EvalArgs {
  std::vector<fs::path> checkpoints, manifests;
  fs::path labels, images, out;
  std::string partitions, partition;
};

std::vector<fs::path> expand_checkpoints(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> out;
  for (const auto& p : inputs) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".aeye") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  if (out.empty()) throw UsageError("no checkpoints given");
  return out;
}

int run_eval(const EvalArgs& a) {
  const auto checkpoints = expand_checkpoints(a.checkpoints);
  const auto labels = read_labels(a.labels);
  const auto records = load_manifests(a.manifests);
  const auto slides = select_slides(a.partitions, a.partition, true, labels);
  const auto grouped = group_by_slide(records, slides);
  LabelMap truth;
  for (const auto& id : slides) {
    auto it = labels.find(id);
    if (it == labels.end()) throw Error(Errc::MissingGroundTruth, "no ground truth for slide '" + id + "'");
    truth.insert(*it);
  }
  fs::create_directories(a.out);
  SlideStore store(a.images);

  json summary = json::array();
  std::optional<std::size_t> best;
  std::vector<EvalReport> reports;
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    const auto model = nn::load_model(checkpoints[i]);
    std::vector<TilePrediction> preds;
    for (const auto& [id, recs] : grouped) {
      auto p = classify_tiles(model, store.get(id), recs);
      preds.insert(preds.end(), p.begin(), p.end());
    }
    auto report = evaluate(preds, truth);
    const std::string stem = checkpoints[i].stem().string();
    write_text(a.out / ("eval_" + stem + ".json"), report_json(report) + "\n");
    spdlog::info("{}: accuracy {} margin {} variance {}", stem, fmt4(report.accuracy), fmt4(report.margin),
                 fmt4(report.mean_tile_variance));
    summary.push_back({{"checkpoint", checkpoints[i].filename().string()},
                       {"accuracy", report.accuracy},
                       {"margin", report.margin},
                       {"mean_tile_variance", report.mean_tile_variance}});
    if (!best || report.accuracy > reports[*best].accuracy) best = i;
    reports.push_back(std::move(report));
  }
  write_text(a.out / "summary.json", summary.dump(2) + "\n");
  const auto& b = reports[*best];
  std::printf("best %s: accuracy %s (%zu/%zu) margin %s variance %s\n",
              checkpoints[*best].filename().string().c_str(), fmt4(b.accuracy).c_str(), b.correct,
              b.slides.size(), fmt4(b.margin).c_str(), fmt4(b.mean_tile_variance).c_str());
  return 0;
}

struct ClassifyArgs {
  fs::path model, in, out;
  double overlap = 0.5;
  std::string criterion = "entropy";
};

int run_classify(const ClassifyArgs& a) {
  const auto model = nn::load_model(a.model);
  const auto criterion = parse_criterion(a.criterion);
  const TileGridSpec spec{model.input_size, a.overlap};
  spec.validate();
  const auto inputs = list_images(a.in);
  fs::create_directories(a.out);
  json results = json::array();
  for (const auto& p : inputs) {
    const std::string id = p.stem().string();
    const auto img = load_image(p);
    const auto tiled = tile_slide(img, spec, criterion, id);
    const auto preds = classify_tiles(model, img, tiled.records);
    if (preds.empty()) {
      spdlog::warn("{}: every tile was sifted away; not classified", id);
      results.push_back({{"slide_id", id}, {"error", "NoRetainedTiles"}});
      continue;
    }
    const auto s = aggregate_slide(preds);
    std::printf("%s: p=%s label %d (%zu tiles)\n", id.c_str(), fmt4(s.mean_probability).c_str(),
                s.label_by_mean, s.tile_count);
    results.push_back(slide_json(s));
  }
  write_text(a.out / "classification.json", results.dump(2) + "\n");
  return 0;
}

struct MapArgs {
  fs::path slide, model, out;
  std::string slide_id;
  double overlap = 0.92;
  double alpha = 0.45;
  std::string criterion = "entropy";
  int truth_label = -1;
  bool raw = false;
};

int run_map(const MapArgs& a) {
  if (!fs::exists(a.model)) throw RuntimeFailure("model file not found: " + a.model.string());
  const auto model = nn::load_model(a.model);
  const auto criterion = parse_criterion(a.criterion);
  const TileGridSpec spec{model.input_size, a.overlap};
  spec.validate();
  const std::string id = a.slide_id.empty() ? a.slide.stem().string() : a.slide_id;
  const auto img = load_image(a.slide);

  ColorRule rule;
  rule.alpha = a.alpha;
  std::optional<int> truth;
  if (a.truth_label >= 0) truth = a.truth_label;
  const auto map = map_slide(img, model, spec, criterion, id, rule, truth);

  fs::create_directories(a.out);
  save_png(map.overlay, a.out / (id + "_map.png"));
  if (a.raw) write_raw_means(map.accumulator, a.out / (id + "_means.f64"));
  const auto summary = summarize(map.records);
  json sidecar = slide_json(map.result);
  sidecar["class_of_interest"] = truth.value_or(map.result.label_by_mean);
  sidecar["tile_size"] = spec.tile_size;
  sidecar["overlap"] = spec.overlap_fraction;
  sidecar["stride"] = spec.stride();
  sidecar["criterion"] = criterion_name(criterion);
  sidecar["tiles_generated"] = summary.generated;
  sidecar["tiles_retained"] = summary.retained;
  sidecar["width"] = img.width();
  sidecar["height"] = img.height();
  write_text(a.out / (id + "_map.json"), sidecar.dump(2) + "\n");
  std::printf("%s: p=%s label %d, %zu of %zu tiles mapped\n", id.c_str(),
              fmt4(map.result.mean_probability).c_str(), map.result.label_by_mean, summary.retained,
              summary.generated);
  return 0;
}

struct SynthArgs {
  fs::path out;
  std::uint32_t n_per_class = 21, width = 512, height = 512;
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
  const auto labels = generate_corpus(a.n_per_class, a.width, a.height, a.seed, a.out);
  std::printf("wrote %zu slides and labels.csv to %s\n", labels.size(), a.out.string().c_str());
  return 0;
}

struct PartitionArgs {
  fs::path labels, out;
  std::size_t n = 3;
  double test_fraction = 0.30;
  std::uint64_t seed = 0;
};

int run_partition(const PartitionArgs& a) {
  const auto parts = make_partitions(read_labels(a.labels), a.n, a.test_fraction, a.seed);
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  write_text(a.out, partitions_json(parts) + "\n");
  for (const auto& p : parts)
    std::printf("%s: %zu train, %zu test\n", p.name.c_str(), p.train_slides.size(), p.test_slides.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slidesift: entropy-sifted tile classification of large pathology images"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  unsigned threads = 0;
  bool verbose = false;
  app.add_option("--threads", threads, "Worker thread ceiling (0 = available parallelism)");
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  const auto unit = CLI::Range(0.0, std::nextafter(1.0, 0.0));
  fs::path config_path;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value file; command-line flags take precedence");
  };

  RescaleArgs rescale_args;
  auto* rescale_cmd = app.add_subcommand("rescale", "Downscale images so the longer side <= --max-dim");
  rescale_cmd->add_option("in", rescale_args.in, "Input directory")->required();
  rescale_cmd->add_option("out", rescale_args.out, "Output directory")->required();
  rescale_cmd->add_option("--max-dim", rescale_args.max_dim, "Longest side after rescaling")
      ->check(CLI::Range(1u, std::numeric_limits<std::uint32_t>::max()));
  add_config(rescale_cmd);

  TileArgs tile_args;
  auto* tile_cmd = app.add_subcommand("tile", "Tile and sift images into a manifest");
  tile_cmd->add_option("--in", tile_args.in, "Image file or directory")->required();
  tile_cmd->add_option("--out", tile_args.out, "Output directory")->required();
  tile_cmd->add_option("--size", tile_args.size, "Tile side in pixels")->check(CLI::Range(8u, 1u << 20));
  tile_cmd->add_option("--overlap", tile_args.overlap, "Overlap fraction in [0, 1)")->check(unit);
  tile_cmd->add_option("--criterion", tile_args.criterion, "entropy | threshold_gray | unsifted");
  tile_cmd->add_flag("--export-tiles", tile_args.export_tiles, "Also write retained tiles as PNGs");
  add_config(tile_cmd);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the reference CNN, one checkpoint per epoch");
  train_cmd->add_option("--manifest", train_args.manifests, "Tile manifest(s)")->required();
  train_cmd->add_option("--labels", train_args.labels, "slide_id,label file")->required();
  train_cmd->add_option("--images", train_args.images, "Directory of (rescaled) slide images")->required();
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();
  train_cmd->add_option("--epochs", train_args.epochs, "Training epochs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch-size", train_args.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", train_args.lr, "Adam learning rate")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--seed", train_args.seed, "Initialization/shuffle seed");
  train_cmd->add_flag("--no-flip", train_args.no_flip, "Disable flip augmentation");
  train_cmd->add_option("--partitions", train_args.partitions, "partitions.json from `partition`");
  train_cmd->add_option("--partition", train_args.partition, "Partition name (trains on its train slides)");
  add_config(train_cmd);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Score every checkpoint on test slides");
  eval_cmd->add_option("--checkpoints", eval_args.checkpoints, "Checkpoint files or directories")->required();
  eval_cmd->add_option("--manifest", eval_args.manifests, "Tile manifest(s)")->required();
  eval_cmd->add_option("--labels", eval_args.labels, "slide_id,label file")->required();
  eval_cmd->add_option("--images", eval_args.images, "Directory of slide images")->required();
  eval_cmd->add_option("--out", eval_args.out, "Output directory")->required();
  eval_cmd->add_option("--partitions", eval_args.partitions, "partitions.json from `partition`");
  eval_cmd->add_option("--partition", eval_args.partition, "Partition name (scores its test slides)");
  add_config(eval_cmd);

  ClassifyArgs classify_args;
  auto* classify_cmd = app.add_subcommand("classify", "Classify slides with a trained model");
  classify_cmd->add_option("--model", classify_args.model, "Model file")->required();
  classify_cmd->add_option("--in", classify_args.in, "Image file or directory")->required();
  classify_cmd->add_option("--out", classify_args.out, "Output directory")->required();
  classify_cmd->add_option("--overlap", classify_args.overlap, "Overlap fraction in [0, 1)")->check(unit);
  classify_cmd->add_option("--criterion", classify_args.criterion, "entropy | threshold_gray | unsifted");
  add_config(classify_cmd);

  MapArgs map_args;
  auto* map_cmd = app.add_subcommand("map", "Render a per-pixel probability map");
  map_cmd->add_option("--slide", map_args.slide, "Slide image")->required()->check(CLI::ExistingFile);
  map_cmd->add_option("--model", map_args.model, "Model file")->required();
  map_cmd->add_option("--out", map_args.out, "Output directory")->required();
  map_cmd->add_option("--slide-id", map_args.slide_id, "Slide id (default: file stem)");
  map_cmd->add_option("--overlap", map_args.overlap, "Overlap fraction in [0, 1)")->check(unit);
  map_cmd->add_option("--criterion", map_args.criterion, "entropy | threshold_gray | unsifted");
  map_cmd->add_option("--alpha", map_args.alpha, "Overlay opacity in (0, 1]")->check(CLI::Range(1e-9, 1.0));
  map_cmd->add_option("--truth-label", map_args.truth_label,
                      "Color against this class instead of the predicted one (-1: predicted)")
      ->check(CLI::Range(-1, 1));
  map_cmd->add_flag("--raw", map_args.raw, "Also dump per-pixel float64 means");
  add_config(map_cmd);

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a labelled synthetic slide corpus");
  synth_cmd->add_option("--out", synth_args.out, "Output directory")->required();
  synth_cmd->add_option("--n-per-class", synth_args.n_per_class, "Slides per class")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--width", synth_args.width, "Slide width")->check(CLI::Range(128u, 1u << 16));
  synth_cmd->add_option("--height", synth_args.height, "Slide height")->check(CLI::Range(128u, 1u << 16));
  synth_cmd->add_option("--seed", synth_args.seed, "Corpus seed");
  add_config(synth_cmd);

  PartitionArgs partition_args;
  auto* partition_cmd = app.add_subcommand("partition", "Stratified train/test partitions with disjoint test sets");
  partition_cmd->add_option("--labels", partition_args.labels, "slide_id,label file")->required();
  partition_cmd->add_option("--out", partition_args.out, "partitions.json to write")->required();
  partition_cmd->add_option("--n", partition_args.n, "Number of partitions")->check(CLI::PositiveNumber);
  partition_cmd->add_option("--test-fraction", partition_args.test_fraction, "Test share per class")
      ->check(CLI::Range(1e-9, std::nextafter(1.0, 0.0)));
  partition_cmd->add_option("--seed", partition_args.seed, "Shuffle seed");
  add_config(partition_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  spdlog::set_default_logger(spdlog::stderr_color_mt("slidesift"));
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  set_thread_limit(threads);

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!config_path.empty()) apply_config_file(sub, config_path);
    int rc = 0;
    fs::path out_dir;
    if (sub == rescale_cmd) {
      rc = run_rescale(rescale_args);
      out_dir = rescale_args.out;
    } else if (sub == tile_cmd) {
      rc = run_tile(tile_args);
      out_dir = tile_args.out;
    } else if (sub == train_cmd) {
      rc = run_train(train_args);
      out_dir = train_args.out;
    } else if (sub == eval_cmd) {
      rc = run_eval(eval_args);
      out_dir = eval_args.out;
    } else if (sub == classify_cmd) {
      rc = run_classify(classify_args);
      out_dir = classify_args.out;
    } else if (sub == map_cmd) {
      rc = run_map(map_args);
      out_dir = map_args.out;
    } else if (sub == synth_cmd) {
      rc = run_synth(synth_args);
      out_dir = synth_args.out;
    } else if (sub == partition_cmd) {
      rc = run_partition(partition_args);
    }
    if (!out_dir.empty()) write_run_json(sub, out_dir);
    return rc;
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return e.code() == Errc::Config ? 2 : 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
