#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "slidesift/raster.hpp"

namespace slidesift::nn {

enum class LayerKind { Conv, ReLU, MaxPool, Dropout, Flatten, Dense, Sigmoid };

std::string to_string(LayerKind kind);

// Conv is always 3x3, stride 1, zero "same" padding. MaxPool is 2x2 stride 2
// with floor semantics on odd extents.
struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::uint32_t in = 0;   // Conv: input channels, Dense: input features
  std::uint32_t out = 0;  // Conv: output channels, Dense: output features
  double rate = 0.0;      // Dropout only

  static LayerSpec conv(std::uint32_t in_ch, std::uint32_t out_ch) { return {LayerKind::Conv, in_ch, out_ch, 0.0}; }
  static LayerSpec relu() { return {LayerKind::ReLU}; }
  static LayerSpec maxpool() { return {LayerKind::MaxPool}; }
  static LayerSpec dropout(double r) { return {LayerKind::Dropout, 0, 0, r}; }
  static LayerSpec flatten() { return {LayerKind::Flatten}; }
  static LayerSpec dense(std::uint32_t in_f, std::uint32_t out_f) { return {LayerKind::Dense, in_f, out_f, 0.0}; }
  static LayerSpec sigmoid() { return {LayerKind::Sigmoid}; }

  // Conv: out*in*9 weights then out biases. Dense: out*in weights then out biases.
  std::size_t param_count() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Shape {
  std::uint32_t c = 0, h = 0, w = 0;
  std::size_t size() const { return std::size_t{c} * h * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

// Output shape of every layer for a square input. Throws ShapeMismatch if the
// stack does not chain.
std::vector<Shape> layer_shapes(const std::vector<LayerSpec>& layers, std::uint32_t input_channels,
                                std::uint32_t input_size);

template <typename T>
struct Model {
  std::uint32_t input_size = 0;
  std::uint32_t input_channels = 3;
  std::vector<LayerSpec> layers;
  std::vector<std::vector<T>> weights;  // one flat array per layer (empty for parameterless layers)
  std::uint64_t seed = 0;

  template <typename U>
  Model<U> cast() const {
    Model<U> m{input_size, input_channels, layers, {}, seed};
    m.weights.reserve(weights.size());
    for (const auto& w : weights) m.weights.emplace_back(w.begin(), w.end());
    return m;
  }

  friend bool operator==(const Model&, const Model&) = default;
};

using CnnModel = Model<float>;

// Checks chain compatibility, weight sizes, and that the stack ends in a
// single sigmoid output.
template <typename T>
void validate(const Model<T>& model);

// He-uniform weights (limit sqrt(6 / fan_in)), zero biases, drawn in layer order.
CnnModel build_model(std::vector<LayerSpec> layers, std::uint32_t input_size, std::uint64_t seed,
                     std::uint32_t input_channels = 3);

// Conv(3,16) ReLU Pool | Conv(16,32) ReLU Pool Drop.25 | Conv(32,48) ReLU Pool Drop.25 |
// Conv(48,64) ReLU Pool Drop.25 | Flatten Dense(48) ReLU Dense(1) Sigmoid.
// tile_size must be in {100, 150, ..., 650} or a multiple of 16 >= 32.
CnnModel build_reference_model(std::uint32_t tile_size, std::uint64_t seed);
bool is_supported_tile_size(std::uint32_t tile_size);

// FLOP convention (batch 1, forward):
//   Conv    2 * (in*9) * out * H * W   (one MAC = 2 FLOPs) + out*H*W bias adds
//   Dense   2 * in * out + out
//   ReLU    1 per element; MaxPool 3 per output; Sigmoid 4 per element
//   Dropout, Flatten 0 (identity at inference)
struct Cost {
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};
Cost count_params_flops(const std::vector<LayerSpec>& layers, std::uint32_t input_channels,
                        std::uint32_t input_size);
template <typename T>
Cost count_params_flops(const Model<T>& model) {
  return count_params_flops(model.layers, model.input_channels, model.input_size);
}

template <typename T>
struct Tensor4 {
  std::uint32_t n = 0, c = 0, h = 0, w = 0;
  std::vector<T> values;

  Tensor4() = default;
  Tensor4(std::uint32_t n_, std::uint32_t c_, std::uint32_t h_, std::uint32_t w_, T fill = T{0})
      : n(n_), c(c_), h(h_), w(w_), values(std::size_t{n_} * c_ * h_ * w_, fill) {}

  std::size_t sample_size() const { return std::size_t{c} * h * w; }
  std::span<const T> sample(std::size_t i) const { return {values.data() + i * sample_size(), sample_size()}; }
  std::span<T> sample(std::size_t i) { return {values.data() + i * sample_size(), sample_size()}; }
};

// Per-sample probabilities, clamped into the open interval (0, 1). Dropout is
// applied only when training is true; its masks derive from dropout_seed.
template <typename T>
std::vector<T> forward(const Model<T>& model, const Tensor4<T>& batch, bool training,
                       std::uint64_t dropout_seed = 0);

// Binary cross-entropy of a probability against label 0/1.
double bce(double probability, int label);

struct LossGrad {
  double loss = 0.0;                      // mean BCE over the batch
  std::vector<std::vector<double>> grads;  // same layout as Model::weights
  std::vector<double> probabilities;
};

// Mean BCE and its gradient w.r.t. every parameter. Used by training and by
// gradient checks; accumulation is per sample, reduced in sample order.
template <typename T>
LossGrad loss_and_gradient(const Model<T>& model, const Tensor4<T>& batch,
                           std::span<const int> labels, bool training,
                           std::uint64_t dropout_seed = 0);

// RGB interleaved 8-bit tile -> CHW floats in [0, 1], optionally flipped.
void tile_to_chw(std::span<const std::uint8_t> rgb, std::uint32_t size, std::span<float> out,
                 bool flip_horizontal = false, bool flip_vertical = false);

// Inference over 3-channel tiles of model.input_size; parallel over tiles.
std::vector<float> predict(const CnnModel& model, const std::vector<RasterImage>& tiles);

struct TrainConfig {
  std::uint32_t epochs = 35;
  std::uint32_t batch_size = 16;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool flip_augmentation = true;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_dir;  // empty: keep checkpoints in memory only

  void validate() const;
};

struct LabeledTile {
  std::vector<std::uint8_t> rgb;  // size*size*3, interleaved
  int label = 0;                  // 0 or 1
};

struct TileDataset {
  std::uint32_t tile_size = 0;
  std::vector<LabeledTile> tiles;
};

struct CheckpointInfo {
  std::uint32_t epoch = 0;  // 1-based
  std::filesystem::path path;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;  // training-mode predictions seen during the epoch
};

using EpochCallback = std::function<void(const CheckpointInfo&)>;

// Adam on mean BCE; shuffles per epoch, independent 50% horizontal and 50%
// vertical flips per sample per epoch, one checkpoint per epoch (no early
// stopping). Throws EmptyDataset, Config, ShapeMismatch, Divergence.
std::vector<CheckpointInfo> train(CnnModel& model, const TileDataset& data, const TrainConfig& cfg,
                                  const EpochCallback& on_epoch = {});

std::string checkpoint_name(std::uint32_t epoch);

inline constexpr std::uint32_t kModelFormatVersion = 1;

// "AEYE", u32 LE version, u32 LE header length, JSON header, LE float32 blobs.
void save_model(const CnnModel& model, const std::filesystem::path& path);
CnnModel load_model(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_model(const CnnModel& model);
CnnModel deserialize_model(std::span<const std::uint8_t> bytes);

}  // namespace slidesift::nn
