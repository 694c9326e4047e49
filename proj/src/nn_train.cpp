#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "nn_engine.hpp"
#include "slidesift/error.hpp"

namespace slidesift::nn {

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(Errc::Config, "epochs must be >= 1");
  if (batch_size < 1) throw Error(Errc::Config, "batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw Error(Errc::Config, "learning rate must be finite and non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw Error(Errc::Config, "Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw Error(Errc::Config, "Adam epsilon must be positive");
}

std::string checkpoint_name(std::uint32_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03u.aeye", epoch);
  return buf;
}

namespace {

class Adam {
 public:
  Adam(const CnnModel& model, const TrainConfig& cfg) : cfg_(cfg) {
    for (const auto& w : model.weights) {
      m_.emplace_back(w.size(), 0.0);
      v_.emplace_back(w.size(), 0.0);
    }
  }

  void step(CnnModel& model, const std::vector<std::vector<double>>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t l = 0; l < grads.size(); ++l) {
      auto& w = model.weights[l];
      auto& m = m_[l];
      auto& v = v_[l];
      const auto& g = grads[l];
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
        v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
        const double update = cfg_.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.epsilon);
        w[k] = static_cast<float>(static_cast<double>(w[k]) - update);
      }
    }
  }

 private:
  const TrainConfig& cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace

std::vector<CheckpointInfo> train(CnnModel& model, const TileDataset& data, const TrainConfig& cfg,
                                  const EpochCallback& on_epoch) {
  cfg.validate();
  validate(model);
  if (data.tiles.empty()) throw Error(Errc::EmptyDataset, "no training tiles");
  if (data.tile_size != model.input_size || model.input_channels != 3)
    throw Error(Errc::ShapeMismatch, "dataset tile size " + std::to_string(data.tile_size) +
                                         " does not match model input " +
                                         std::to_string(model.input_size));
  std::size_t per_class[2] = {0, 0};
  const std::size_t tile_bytes = std::size_t{data.tile_size} * data.tile_size * 3;
  for (std::size_t i = 0; i < data.tiles.size(); ++i) {
    const auto& t = data.tiles[i];
    if (t.label != 0 && t.label != 1)
      throw Error(Errc::InvalidArgument, "tile " + std::to_string(i) + " has label " +
                                             std::to_string(t.label) + ", expected 0 or 1");
    if (t.rgb.size() != tile_bytes)
      throw Error(Errc::ShapeMismatch, "tile " + std::to_string(i) + " has wrong byte count");
    ++per_class[t.label];
  }
  if (per_class[0] == 0 || per_class[1] == 0)
    throw Error(Errc::EmptyDataset, "training needs at least one tile per class (have " +
                                        std::to_string(per_class[0]) + " / " +
                                        std::to_string(per_class[1]) + ")");
  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);

  detail::Engine<float> engine(model);
  detail::BatchWorkspace<float> ws;
  Adam adam(model, cfg);
  std::mt19937_64 rng(cfg.seed);

  std::vector<std::size_t> order(data.tiles.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<CheckpointInfo> checkpoints;
  std::vector<std::vector<double>> grads;
  std::vector<double> probs;
  std::vector<int> labels;
  std::vector<std::uint8_t> flips(data.tiles.size());

  for (std::uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t i = 0; i < order.size(); ++i) {
      const bool h = cfg.flip_augmentation && coin(rng);
      const bool v = cfg.flip_augmentation && coin(rng);
      flips[i] = static_cast<std::uint8_t>(h | (v << 1));
    }

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::size_t n = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      labels.resize(n);
      for (std::size_t j = 0; j < n; ++j) labels[j] = data.tiles[order[start + j]].label;

      const double loss = detail::batch_loss_grad<float>(
          engine, n,
          [&](std::size_t j, std::span<float> dst) {
            const std::size_t pos = start + j;
            tile_to_chw(data.tiles[order[pos]].rgb, data.tile_size, dst, flips[pos] & 1,
                        (flips[pos] >> 1) & 1);
          },
          labels, true, detail::mix_seed(detail::mix_seed(cfg.seed, epoch), batch), ws, grads,
          &probs);
      if (!std::isfinite(loss))
        throw Error(Errc::Divergence, "non-finite loss at epoch " + std::to_string(epoch) +
                                          ", batch " + std::to_string(batch) +
                                          "; lower the learning rate");
      for (const auto& g : grads)
        for (double d : g)
          if (!std::isfinite(d))
            throw Error(Errc::Divergence, "non-finite gradient at epoch " + std::to_string(epoch) +
                                              ", batch " + std::to_string(batch));
      adam.step(model, grads);
      loss_sum += loss * static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) correct += (probs[j] >= 0.5) == (labels[j] == 1);
    }

    CheckpointInfo info;
    info.epoch = epoch;
    info.mean_loss = loss_sum / static_cast<double>(order.size());
    info.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    if (!cfg.checkpoint_dir.empty()) {
      info.path = cfg.checkpoint_dir / checkpoint_name(epoch);
      save_model(model, info.path);
    }
    if (on_epoch) on_epoch(info);
    checkpoints.push_back(std::move(info));
  }
  return checkpoints;
}

}  // namespace slidesift::nn
