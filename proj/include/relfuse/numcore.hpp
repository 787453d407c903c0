#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace relfuse {

using Rng = std::mt19937_64;

// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// y = W x + b, with W stored out x in.
struct DenseLayer {
  Matrix weights;
  std::vector<double> bias;

  DenseLayer() = default;
  DenseLayer(std::size_t in_dim, std::size_t out_dim)
      : weights(out_dim, in_dim), bias(out_dim, 0.0) {}

  std::size_t in_dim() const { return weights.cols; }
  std::size_t out_dim() const { return weights.rows; }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Affine layers with a rectifier after every layer except the last.
struct Mlp {
  std::vector<DenseLayer> layers;

  std::size_t in_dim() const {
    return layers.empty() ? 0 : layers.front().in_dim();
  }
  std::size_t out_dim() const {
    return layers.empty() ? 0 : layers.back().out_dim();
  }

  friend bool operator==(const Mlp&, const Mlp&) = default;
};

struct ForwardCache {
  // inputs[l] is the (post-activation) input fed to layer l.
  std::vector<std::vector<double>> inputs;
  // pre[l] is layer l's affine output before the rectifier.
  std::vector<std::vector<double>> pre;
};

struct ForwardResult {
  std::vector<double> output;
  ForwardCache cache;
};

// Gradients share the parameter types so they can be walked in lockstep.
struct MlpBackward {
  Mlp grads;
  std::vector<double> grad_in;
};

std::vector<double> affine(const DenseLayer& layer, std::span<const double> x);

ForwardResult forward(const Mlp& mlp, std::span<const double> x);
std::vector<double> predict(const Mlp& mlp, std::span<const double> x);

MlpBackward backward(const Mlp& mlp, const ForwardCache& cache,
                     std::span<const double> grad_out);
// Adds parameter gradients into `grads` and returns the input gradient.
std::vector<double> backward_accumulate(const Mlp& mlp,
                                        const ForwardCache& cache,
                                        std::span<const double> grad_out,
                                        Mlp& grads);

// Single-layer variants, used by the one-layer visual heads.
void layer_backward_accumulate(const DenseLayer& layer,
                               std::span<const double> x,
                               std::span<const double> grad_out,
                               DenseLayer& grads,
                               std::span<double> grad_in = {});

// He-normal weights (variance 2/in_dim) and zero bias.
DenseLayer init_layer(std::size_t in_dim, std::size_t out_dim, Rng& rng);
// dims = {in, hidden..., out}.
Mlp make_mlp(std::span<const std::size_t> dims, Rng& rng);

DenseLayer zeros_like(const DenseLayer& layer);
Mlp zeros_like(const Mlp& mlp);

std::vector<double> softmax(std::span<const double> logits);
double log_sum_exp(std::span<const double> logits);

struct XentResult {
  double loss = 0.0;
  std::vector<double> grad;
};
// -log softmax(logits)[target] and its gradient softmax - onehot.
XentResult softmax_xent(std::span<const double> logits, std::size_t target);

// Parameter blocks in a fixed traversal order (weights, then bias, per layer).
using ParamBlocks = std::vector<std::span<double>>;
void append_blocks(DenseLayer& layer, ParamBlocks& out);
void append_blocks(Mlp& mlp, ParamBlocks& out);

struct OptimizerState {
  double learning_rate = 0.01;
  double momentum = 0.0;
  std::vector<std::vector<double>> velocity;
};

OptimizerState make_optimizer_state(double learning_rate, double momentum,
                                    const ParamBlocks& params);

// velocity = momentum * velocity - lr * grad; param += velocity.
void sgd_step(const ParamBlocks& params, const ParamBlocks& grads,
              OptimizerState& state);

}  // namespace relfuse
