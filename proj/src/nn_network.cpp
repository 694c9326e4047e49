#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Core>

#include "nn_engine.hpp"
#include "slidesift/error.hpp"
#include "slidesift/parallel.hpp"

namespace slidesift::nn {
namespace detail {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

template <typename T>
T stable_sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

template <typename T>
T clamp_probability(T p) {
  return std::clamp(p, std::numeric_limits<T>::min(), std::nextafter(T(1), T(0)));
}

double bce_from_logit(double z, int label) {
  return std::max(z, 0.0) - label * z + std::log1p(std::exp(-std::abs(z)));
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
void im2col(const T* in, const Shape& s, T* cols) {
  const std::size_t n = std::size_t{s.h} * s.w;
  for (std::uint32_t c = 0; c < s.c; ++c) {
    const T* plane = in + std::size_t{c} * n;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = cols + ((std::size_t{c} * 3 + ky) * 3 + kx) * n;
        for (std::uint32_t y = 0; y < s.h; ++y) {
          const int sy = static_cast<int>(y) + ky - 1;
          T* dst = row + std::size_t{y} * s.w;
          if (sy < 0 || sy >= static_cast<int>(s.h)) {
            std::fill_n(dst, s.w, T(0));
            continue;
          }
          const T* src = plane + std::size_t(sy) * s.w;
          for (std::uint32_t x = 0; x < s.w; ++x) {
            const int sx = static_cast<int>(x) + kx - 1;
            dst[x] = (sx < 0 || sx >= static_cast<int>(s.w)) ? T(0) : src[sx];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const Shape& s, T* out) {
  const std::size_t n = std::size_t{s.h} * s.w;
  std::fill_n(out, s.size(), T(0));
  for (std::uint32_t c = 0; c < s.c; ++c) {
    T* plane = out + std::size_t{c} * n;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = cols + ((std::size_t{c} * 3 + ky) * 3 + kx) * n;
        for (std::uint32_t y = 0; y < s.h; ++y) {
          const int sy = static_cast<int>(y) + ky - 1;
          if (sy < 0 || sy >= static_cast<int>(s.h)) continue;
          T* dst = plane + std::size_t(sy) * s.w;
          const T* src = row + std::size_t{y} * s.w;
          for (std::uint32_t x = 0; x < s.w; ++x) {
            const int sx = static_cast<int>(x) + kx - 1;
            if (sx >= 0 && sx < static_cast<int>(s.w)) dst[sx] += src[x];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Engine<T>::Engine(const Model<T>& model) : model_(model) {
  validate(model);
  const auto outs = layer_shapes(model.layers, model.input_channels, model.input_size);
  in_shapes_.reserve(outs.size());
  in_shapes_.push_back({model.input_channels, model.input_size, model.input_size});
  for (std::size_t i = 0; i + 1 < outs.size(); ++i) in_shapes_.push_back(outs[i]);
}

template <typename T>
std::size_t Engine<T>::input_size() const {
  return in_shapes_.front().size();
}

template <typename T>
void Engine<T>::prepare(Trace<T>& tr) const {
  const std::size_t L = model_.layers.size();
  if (tr.acts.size() == L) return;
  tr.acts.assign(L, {});
  tr.cols.assign(L, {});
  tr.argmax.assign(L, {});
  tr.masks.assign(L, {});
  for (std::size_t i = 0; i < L; ++i) {
    tr.acts[i].resize(in_shapes_[i].size());
    const auto& l = model_.layers[i];
    if (l.kind == LayerKind::Conv)
      tr.cols[i].resize(std::size_t{l.in} * 9 * in_shapes_[i].h * in_shapes_[i].w);
  }
}

template <typename T>
T Engine<T>::forward_logit(std::span<const T> input, bool training, std::uint64_t dropout_seed,
                           Trace<T>& tr) const {
  if (input.size() != input_size())
    throw Error(Errc::ShapeMismatch, "input has " + std::to_string(input.size()) +
                                         " values, model expects " + std::to_string(input_size()));
  prepare(tr);
  const std::size_t L = model_.layers.size();
  std::copy(input.begin(), input.end(), tr.acts[0].begin());

  for (std::size_t i = 0; i + 1 < L; ++i) {
    const auto& l = model_.layers[i];
    const Shape& s = in_shapes_[i];
    const AlignedVec<T>& x = tr.acts[i];
    AlignedVec<T>& y = tr.acts[i + 1];
    const auto& w = model_.weights[i];

    switch (l.kind) {
      case LayerKind::Conv: {
        const std::size_t k = std::size_t{l.in} * 9;
        const std::size_t n = std::size_t{s.h} * s.w;
        im2col(x.data(), s, tr.cols[i].data());
        Eigen::Map<const RowMat<T>> W(w.data(), l.out, k);
        Eigen::Map<const RowMat<T>> C(tr.cols[i].data(), k, n);
        Eigen::Map<RowMat<T>> Y(y.data(), l.out, n);
        Y.noalias() = W * C;
        for (std::uint32_t o = 0; o < l.out; ++o) Y.row(o).array() += w[std::size_t{l.out} * k + o];
        break;
      }
      case LayerKind::Dense: {
        Eigen::Map<const RowMat<T>> W(w.data(), l.out, l.in);
        Eigen::Map<const Vec<T>> b(w.data() + std::size_t{l.out} * l.in, l.out);
        Eigen::Map<const Vec<T>> X(x.data(), l.in);
        Eigen::Map<Vec<T>> Y(y.data(), l.out);
        Y.noalias() = W * X;
        Y += b;
        break;
      }
      case LayerKind::ReLU:
        for (std::size_t j = 0; j < x.size(); ++j) y[j] = x[j] > T(0) ? x[j] : T(0);
        break;
      case LayerKind::MaxPool: {
        const std::uint32_t oh = s.h / 2, ow = s.w / 2;
        auto& am = tr.argmax[i];
        am.resize(std::size_t{s.c} * oh * ow);
        std::size_t o = 0;
        for (std::uint32_t c = 0; c < s.c; ++c) {
          const std::size_t base = std::size_t{c} * s.h * s.w;
          for (std::uint32_t py = 0; py < oh; ++py) {
            for (std::uint32_t px = 0; px < ow; ++px, ++o) {
              std::size_t best = base + std::size_t{2 * py} * s.w + 2 * px;
              for (std::uint32_t dy = 0; dy < 2; ++dy)
                for (std::uint32_t dx = 0; dx < 2; ++dx) {
                  const std::size_t idx = base + std::size_t{2 * py + dy} * s.w + 2 * px + dx;
                  if (x[idx] > x[best]) best = idx;
                }
              am[o] = static_cast<std::uint32_t>(best);
              y[o] = x[best];
            }
          }
        }
        break;
      }
      case LayerKind::Dropout: {
        auto& mask = tr.masks[i];
        if (!training || l.rate == 0.0) {
          mask.clear();
          std::copy(x.begin(), x.end(), y.begin());
          break;
        }
        mask.resize(x.size());
        std::mt19937_64 rng(mix_seed(dropout_seed, i));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const T keep_scale = T(1.0 / (1.0 - l.rate));
        for (std::size_t j = 0; j < x.size(); ++j) {
          mask[j] = u(rng) >= l.rate ? keep_scale : T(0);
          y[j] = x[j] * mask[j];
        }
        break;
      }
      case LayerKind::Flatten:
        std::copy(x.begin(), x.end(), y.begin());
        break;
      case LayerKind::Sigmoid:
        for (std::size_t j = 0; j < x.size(); ++j) y[j] = stable_sigmoid(x[j]);
        break;
    }
  }
  // Layer L-1 is the sigmoid; its input is acts[L-1] (a single value).
  return tr.acts[L - 1][0];
}

template <typename T>
void Engine<T>::backward(Trace<T>& tr, T dlogit, std::vector<AlignedVec<T>>& grads) const {
  const std::size_t L = model_.layers.size();
  tr.grad.assign(1, dlogit);  // gradient w.r.t. the output of layer L-2
  for (std::size_t ii = L - 1; ii-- > 0;) {
    const auto& l = model_.layers[ii];
    const Shape& s = in_shapes_[ii];
    const AlignedVec<T>& x = tr.acts[ii];
    const AlignedVec<T>& dy = tr.grad;
    AlignedVec<T>& dx = tr.grad_next;
    dx.assign(s.size(), T(0));
    const auto& w = model_.weights[ii];

    switch (l.kind) {
      case LayerKind::Conv: {
        const std::size_t k = std::size_t{l.in} * 9;
        const std::size_t n = std::size_t{s.h} * s.w;
        auto& g = grads[ii];
        Eigen::Map<const RowMat<T>> W(w.data(), l.out, k);
        Eigen::Map<const RowMat<T>> C(tr.cols[ii].data(), k, n);
        Eigen::Map<const RowMat<T>> dY(dy.data(), l.out, n);
        Eigen::Map<RowMat<T>> dW(g.data(), l.out, k);
        dW.noalias() += dY * C.transpose();
        for (std::uint32_t o = 0; o < l.out; ++o) g[std::size_t{l.out} * k + o] += dY.row(o).sum();
        if (ii > 0) {
          tr.dcols.resize(k * n);
          Eigen::Map<RowMat<T>> dC(tr.dcols.data(), k, n);
          dC.noalias() = W.transpose() * dY;
          col2im(tr.dcols.data(), s, dx.data());
        }
        break;
      }
      case LayerKind::Dense: {
        auto& g = grads[ii];
        Eigen::Map<const RowMat<T>> W(w.data(), l.out, l.in);
        Eigen::Map<const Vec<T>> X(x.data(), l.in);
        Eigen::Map<const Vec<T>> dY(dy.data(), l.out);
        Eigen::Map<RowMat<T>> dW(g.data(), l.out, l.in);
        Eigen::Map<Vec<T>> db(g.data() + std::size_t{l.out} * l.in, l.out);
        dW.noalias() += dY * X.transpose();
        db += dY;
        Eigen::Map<Vec<T>> dX(dx.data(), l.in);
        dX.noalias() = W.transpose() * dY;
        break;
      }
      case LayerKind::ReLU:
        for (std::size_t j = 0; j < x.size(); ++j) dx[j] = x[j] > T(0) ? dy[j] : T(0);
        break;
      case LayerKind::MaxPool: {
        const auto& am = tr.argmax[ii];
        for (std::size_t o = 0; o < am.size(); ++o) dx[am[o]] += dy[o];
        break;
      }
      case LayerKind::Dropout: {
        const auto& mask = tr.masks[ii];
        if (mask.empty()) {
          std::copy(dy.begin(), dy.end(), dx.begin());
        } else {
          for (std::size_t j = 0; j < dy.size(); ++j) dx[j] = dy[j] * mask[j];
        }
        break;
      }
      case LayerKind::Flatten:
        std::copy(dy.begin(), dy.end(), dx.begin());
        break;
      case LayerKind::Sigmoid:
        for (std::size_t j = 0; j < dy.size(); ++j) {
          const T sj = stable_sigmoid(x[j]);
          dx[j] = dy[j] * sj * (T(1) - sj);
        }
        break;
    }
    std::swap(tr.grad, tr.grad_next);
  }
}

template <typename T>
double batch_loss_grad(const Engine<T>& engine, std::size_t n,
                       const std::function<void(std::size_t, std::span<T>)>& fill,
                       std::span<const int> labels, bool training, std::uint64_t dropout_seed,
                       BatchWorkspace<T>& ws, std::vector<std::vector<double>>& grads,
                       std::vector<double>* probabilities) {
  const auto& model = engine.model();
  const std::size_t L = model.layers.size();
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(thread_limit(), n));
  if (ws.traces.size() < workers) ws.traces.resize(workers);
  if (ws.inputs.size() < workers) ws.inputs.resize(workers);
  if (ws.sample_grads.size() < n) ws.sample_grads.resize(n);

  std::vector<double> losses(n), probs(n);
  const std::size_t block = (n + workers - 1) / workers;
  parallel_for(workers, [&](std::size_t wk) {
    auto& tr = ws.traces[wk];
    auto& in = ws.inputs[wk];
    in.resize(engine.input_size());
    for (std::size_t i = wk * block; i < std::min(n, (wk + 1) * block); ++i) {
      auto& g = ws.sample_grads[i];
      g.resize(L);
      for (std::size_t l = 0; l < L; ++l) g[l].assign(model.weights[l].size(), T(0));
      fill(i, in);
      const T z = engine.forward_logit(in, training, mix_seed(dropout_seed, i), tr);
      const T p = stable_sigmoid(z);
      losses[i] = bce_from_logit(static_cast<double>(z), labels[i]);
      probs[i] = static_cast<double>(clamp_probability(p));
      // d(mean BCE)/dz = (p - y) / n
      engine.backward(tr, (p - T(labels[i])) / T(n), g);
    }
  });

  grads.resize(L);
  for (std::size_t l = 0; l < L; ++l) grads[l].assign(model.weights[l].size(), 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    loss += losses[i];
    for (std::size_t l = 0; l < L; ++l) {
      const auto& src = ws.sample_grads[i][l];
      auto& dst = grads[l];
      for (std::size_t k = 0; k < src.size(); ++k) dst[k] += static_cast<double>(src[k]);
    }
  }
  if (probabilities) *probabilities = std::move(probs);
  return loss / static_cast<double>(n);
}

template class Engine<float>;
template class Engine<double>;
template float stable_sigmoid(float);
template double stable_sigmoid(double);
template float clamp_probability(float);
template double clamp_probability(double);
template double batch_loss_grad(const Engine<float>&, std::size_t,
                                const std::function<void(std::size_t, std::span<float>)>&,
                                std::span<const int>, bool, std::uint64_t, BatchWorkspace<float>&,
                                std::vector<std::vector<double>>&, std::vector<double>*);
template double batch_loss_grad(const Engine<double>&, std::size_t,
                                const std::function<void(std::size_t, std::span<double>)>&,
                                std::span<const int>, bool, std::uint64_t, BatchWorkspace<double>&,
                                std::vector<std::vector<double>>&, std::vector<double>*);

}  // namespace detail

template <typename T>
std::vector<T> forward(const Model<T>& model, const Tensor4<T>& batch, bool training,
                       std::uint64_t dropout_seed) {
  if (batch.c != model.input_channels || batch.h != model.input_size || batch.w != model.input_size)
    throw Error(Errc::ShapeMismatch,
                "batch is " + std::to_string(batch.c) + "x" + std::to_string(batch.h) + "x" +
                    std::to_string(batch.w) + ", model expects " +
                    std::to_string(model.input_channels) + "x" + std::to_string(model.input_size) +
                    "x" + std::to_string(model.input_size));
  if (batch.values.size() != std::size_t{batch.n} * batch.sample_size())
    throw Error(Errc::ShapeMismatch, "batch value count does not match its dims");
  detail::Engine<T> engine(model);
  std::vector<T> out(batch.n);
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(thread_limit(), batch.n));
  const std::size_t block = (batch.n + workers - 1) / workers;
  parallel_for(workers, [&](std::size_t wk) {
    detail::Trace<T> tr;
    for (std::size_t i = wk * block; i < std::min<std::size_t>(batch.n, (wk + 1) * block); ++i) {
      const T z = engine.forward_logit(batch.sample(i), training, detail::mix_seed(dropout_seed, i), tr);
      out[i] = detail::clamp_probability(detail::stable_sigmoid(z));
    }
  });
  return out;
}

template std::vector<float> forward(const Model<float>&, const Tensor4<float>&, bool, std::uint64_t);
template std::vector<double> forward(const Model<double>&, const Tensor4<double>&, bool, std::uint64_t);

double bce(double probability, int label) {
  const double p = std::clamp(probability, 1e-300, 1.0 - 1e-16);
  return label ? -std::log(p) : -std::log1p(-p);
}

template <typename T>
LossGrad loss_and_gradient(const Model<T>& model, const Tensor4<T>& batch,
                           std::span<const int> labels, bool training, std::uint64_t dropout_seed) {
  if (labels.size() != batch.n) throw Error(Errc::ShapeMismatch, "one label per sample required");
  if (batch.n == 0) throw Error(Errc::EmptyDataset, "empty batch");
  detail::Engine<T> engine(model);
  detail::BatchWorkspace<T> ws;
  LossGrad out;
  out.loss = detail::batch_loss_grad<T>(
      engine, batch.n,
      [&](std::size_t i, std::span<T> dst) {
        const auto src = batch.sample(i);
        std::copy(src.begin(), src.end(), dst.begin());
      },
      labels, training, dropout_seed, ws, out.grads, &out.probabilities);
  return out;
}

template LossGrad loss_and_gradient(const Model<float>&, const Tensor4<float>&, std::span<const int>,
                                    bool, std::uint64_t);
template LossGrad loss_and_gradient(const Model<double>&, const Tensor4<double>&,
                                    std::span<const int>, bool, std::uint64_t);

void tile_to_chw(std::span<const std::uint8_t> rgb, std::uint32_t size, std::span<float> out,
                 bool flip_horizontal, bool flip_vertical) {
  const std::size_t plane = std::size_t{size} * size;
  if (rgb.size() != plane * 3 || out.size() != plane * 3)
    throw Error(Errc::ShapeMismatch, "tile buffer does not match tile size " + std::to_string(size));
  constexpr float kScale = 1.0f / 255.0f;
  for (std::uint32_t y = 0; y < size; ++y) {
    const std::uint32_t sy = flip_vertical ? size - 1 - y : y;
    for (std::uint32_t x = 0; x < size; ++x) {
      const std::uint32_t sx = flip_horizontal ? size - 1 - x : x;
      const std::uint8_t* px = rgb.data() + (std::size_t{sy} * size + sx) * 3;
      const std::size_t o = std::size_t{y} * size + x;
      out[o] = px[0] * kScale;
      out[plane + o] = px[1] * kScale;
      out[2 * plane + o] = px[2] * kScale;
    }
  }
}

std::vector<float> predict(const CnnModel& model, const std::vector<RasterImage>& tiles) {
  detail::Engine<float> engine(model);
  std::vector<float> out(tiles.size());
  if (tiles.empty()) return out;
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(thread_limit(), tiles.size()));
  const std::size_t block = (tiles.size() + workers - 1) / workers;
  parallel_for(workers, [&](std::size_t wk) {
    detail::Trace<float> tr;
    std::vector<float> in(engine.input_size());
    for (std::size_t i = wk * block; i < std::min(tiles.size(), (wk + 1) * block); ++i) {
      const auto& t = tiles[i];
      if (t.channels() != 3 || t.width() != model.input_size || t.height() != model.input_size)
        throw Error(Errc::ShapeMismatch, "tile " + std::to_string(i) + " is " +
                                             std::to_string(t.width()) + "x" +
                                             std::to_string(t.height()) + ", model expects " +
                                             std::to_string(model.input_size));
      tile_to_chw(t.pixels(), model.input_size, in);
      const float z = engine.forward_logit(in, false, 0, tr);
      out[i] = detail::clamp_probability(detail::stable_sigmoid(z));
    }
  });
  return out;
}

}  // namespace slidesift::nn
