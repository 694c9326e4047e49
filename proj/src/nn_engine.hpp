#pragma once

// Internal forward/backward engine shared by inference, gradient checking and
// training. Not part of the public interface.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "slidesift/nn.hpp"

namespace slidesift::nn::detail {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// Eigen picks its vectorized code path from each buffer's runtime alignment,
// so scratch buffers must be aligned the same way no matter which worker owns
// them or results drift with the thread count.
template <typename T>
using AlignedVec = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
struct Trace {
  std::vector<AlignedVec<T>> acts;                // acts[i] is the input of layer i
  std::vector<AlignedVec<T>> cols;                // im2col buffers (conv layers)
  std::vector<std::vector<std::uint32_t>> argmax;  // pool winners
  std::vector<AlignedVec<T>> masks;               // dropout scales
  AlignedVec<T> grad, grad_next, dcols;
};

template <typename T>
class Engine {
 public:
  explicit Engine(const Model<T>& model);

  const Model<T>& model() const { return model_; }
  std::size_t input_size() const;
  void prepare(Trace<T>& tr) const;

  // Runs every layer but the trailing sigmoid and returns the logit.
  T forward_logit(std::span<const T> input, bool training, std::uint64_t dropout_seed,
                  Trace<T>& tr) const;

  // Accumulates d(loss)/d(params) into grads given d(loss)/d(logit).
  void backward(Trace<T>& tr, T dlogit, std::vector<AlignedVec<T>>& grads) const;

 private:
  const Model<T>& model_;
  std::vector<Shape> in_shapes_;  // input shape of each layer
};

template <typename T>
T stable_sigmoid(T z);

// Open-interval clamp for probabilities of type T.
template <typename T>
T clamp_probability(T p);

// BCE from a logit: softplus(z) - y z.
double bce_from_logit(double z, int label);

template <typename T>
struct BatchWorkspace {
  std::vector<Trace<T>> traces;                         // one per worker
  std::vector<AlignedVec<T>> inputs;                   // one per worker
  std::vector<std::vector<AlignedVec<T>>> sample_grads;  // one per sample
};

// Mean BCE over n samples and its gradient (double accumulation, reduced in
// sample order so the result does not depend on the worker count).
// fill(i, buffer) writes sample i's CHW input.
template <typename T>
double batch_loss_grad(const Engine<T>& engine, std::size_t n,
                       const std::function<void(std::size_t, std::span<T>)>& fill,
                       std::span<const int> labels, bool training, std::uint64_t dropout_seed,
                       BatchWorkspace<T>& ws, std::vector<std::vector<double>>& grads,
                       std::vector<double>* probabilities);

}  // namespace slidesift::nn::detail
