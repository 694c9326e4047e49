#include <cmath>
#include <random>

#include "slidesift/error.hpp"
#include "slidesift/nn.hpp"

namespace slidesift::nn {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::ReLU: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dense: return "dense";
    case LayerKind::Sigmoid: return "sigmoid";
  }
  return "unknown";
}

std::size_t LayerSpec::param_count() const {
  switch (kind) {
    case LayerKind::Conv: return std::size_t{out} * in * 9 + out;
    case LayerKind::Dense: return std::size_t{out} * in + out;
    default: return 0;
  }
}

std::vector<Shape> layer_shapes(const std::vector<LayerSpec>& layers, std::uint32_t input_channels,
                                std::uint32_t input_size) {
  auto fail = [](std::size_t i, const std::string& why) {
    throw Error(Errc::ShapeMismatch, "layer " + std::to_string(i) + ": " + why);
  };
  if (input_size == 0 || input_channels == 0) throw Error(Errc::ShapeMismatch, "empty input shape");
  std::vector<Shape> shapes;
  shapes.reserve(layers.size());
  Shape s{input_channels, input_size, input_size};
  bool flat = false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    switch (l.kind) {
      case LayerKind::Conv:
        if (flat) fail(i, "conv after flatten");
        if (l.in != s.c)
          fail(i, "conv expects " + std::to_string(l.in) + " channels, got " + std::to_string(s.c));
        if (l.out == 0) fail(i, "conv with zero output channels");
        s.c = l.out;
        break;
      case LayerKind::MaxPool:
        if (flat) fail(i, "pool after flatten");
        if (s.h < 2 || s.w < 2) fail(i, "pool input smaller than 2x2");
        s.h /= 2;
        s.w /= 2;
        break;
      case LayerKind::Dropout:
        if (!(l.rate >= 0.0 && l.rate < 1.0)) fail(i, "dropout rate outside [0, 1)");
        break;
      case LayerKind::Flatten:
        s = {static_cast<std::uint32_t>(s.size()), 1, 1};
        flat = true;
        break;
      case LayerKind::Dense:
        if (!flat) fail(i, "dense before flatten");
        if (l.in != s.c)
          fail(i, "dense expects " + std::to_string(l.in) + " features, got " + std::to_string(s.c));
        if (l.out == 0) fail(i, "dense with zero outputs");
        s.c = l.out;
        break;
      case LayerKind::ReLU:
      case LayerKind::Sigmoid:
        break;
    }
    shapes.push_back(s);
  }
  return shapes;
}

template <typename T>
void validate(const Model<T>& model) {
  const auto shapes = layer_shapes(model.layers, model.input_channels, model.input_size);
  if (model.layers.empty() || model.layers.back().kind != LayerKind::Sigmoid || shapes.back().size() != 1)
    throw Error(Errc::ShapeMismatch, "model must end in a single sigmoid output");
  if (model.weights.size() != model.layers.size())
    throw Error(Errc::ShapeMismatch, "weight array count does not match layer count");
  for (std::size_t i = 0; i < model.layers.size(); ++i)
    if (model.weights[i].size() != model.layers[i].param_count())
      throw Error(Errc::ShapeMismatch, "layer " + std::to_string(i) + " has " +
                                           std::to_string(model.weights[i].size()) +
                                           " weights, expected " +
                                           std::to_string(model.layers[i].param_count()));
}

template void validate(const Model<float>&);
template void validate(const Model<double>&);

CnnModel build_model(std::vector<LayerSpec> layers, std::uint32_t input_size, std::uint64_t seed,
                     std::uint32_t input_channels) {
  CnnModel m;
  m.input_size = input_size;
  m.input_channels = input_channels;
  m.layers = std::move(layers);
  m.seed = seed;
  layer_shapes(m.layers, input_channels, input_size);

  std::mt19937_64 rng(seed);
  m.weights.resize(m.layers.size());
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const auto& l = m.layers[i];
    auto& w = m.weights[i];
    w.assign(l.param_count(), 0.0f);
    if (w.empty()) continue;
    const std::size_t fan_in = l.kind == LayerKind::Conv ? std::size_t{l.in} * 9 : l.in;
    const std::size_t n_weights = w.size() - l.out;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::size_t k = 0; k < n_weights; ++k) w[k] = static_cast<float>(dist(rng));
  }
  validate(m);
  return m;
}

bool is_supported_tile_size(std::uint32_t tile_size) {
  const bool paper_grid = tile_size >= 100 && tile_size <= 650 && tile_size % 50 == 0;
  const bool multiple_of_16 = tile_size >= 32 && tile_size % 16 == 0;
  return paper_grid || multiple_of_16;
}

CnnModel build_reference_model(std::uint32_t tile_size, std::uint64_t seed) {
  if (!is_supported_tile_size(tile_size))
    throw Error(Errc::UnsupportedTileSize,
                "tile size " + std::to_string(tile_size) +
                    " not in {100..650 step 50} and not a multiple of 16 >= 32");
  std::uint32_t side = tile_size;
  for (int i = 0; i < 4; ++i) side /= 2;
  const std::uint32_t flat = side * side * 64;
  return build_model(
      {
          LayerSpec::conv(3, 16), LayerSpec::relu(), LayerSpec::maxpool(),
          LayerSpec::conv(16, 32), LayerSpec::relu(), LayerSpec::maxpool(), LayerSpec::dropout(0.25),
          LayerSpec::conv(32, 48), LayerSpec::relu(), LayerSpec::maxpool(), LayerSpec::dropout(0.25),
          LayerSpec::conv(48, 64), LayerSpec::relu(), LayerSpec::maxpool(), LayerSpec::dropout(0.25),
          LayerSpec::flatten(),
          LayerSpec::dense(flat, 48), LayerSpec::relu(),
          LayerSpec::dense(48, 1), LayerSpec::sigmoid(),
      },
      tile_size, seed);
}

Cost count_params_flops(const std::vector<LayerSpec>& layers, std::uint32_t input_channels,
                        std::uint32_t input_size) {
  const auto shapes = layer_shapes(layers, input_channels, input_size);
  Cost cost;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const Shape& out = shapes[i];
    cost.params += l.param_count();
    switch (l.kind) {
      case LayerKind::Conv:
        cost.flops += 2ull * l.in * 9 * out.size() + out.size();
        break;
      case LayerKind::Dense:
        cost.flops += 2ull * l.in * l.out + l.out;
        break;
      case LayerKind::ReLU:
        cost.flops += out.size();
        break;
      case LayerKind::MaxPool:
        cost.flops += 3ull * out.size();
        break;
      case LayerKind::Sigmoid:
        cost.flops += 4ull * out.size();
        break;
      case LayerKind::Dropout:
      case LayerKind::Flatten:
        break;
    }
  }
  return cost;
}

}  // namespace slidesift::nn
