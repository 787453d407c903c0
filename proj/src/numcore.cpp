#include "relfuse/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "relfuse/errors.hpp"

namespace relfuse {

namespace {

// Four independent accumulators; fixed order keeps results bitwise stable.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void check_chain(const Mlp& mlp) {
  if (mlp.layers.empty()) throw DimensionError("mlp has no layers");
  for (std::size_t l = 1; l < mlp.layers.size(); ++l)
    if (mlp.layers[l].in_dim() != mlp.layers[l - 1].out_dim())
      throw DimensionError("mlp layer " + std::to_string(l) +
                           " does not chain with its predecessor");
}

}  // namespace

std::vector<double> affine(const DenseLayer& layer, std::span<const double> x) {
  if (x.size() != layer.in_dim())
    throw DimensionError("layer expects input of size " +
                         std::to_string(layer.in_dim()) + ", got " +
                         std::to_string(x.size()));
  std::vector<double> y(layer.out_dim());
  const double* w = layer.weights.data.data();
  for (std::size_t r = 0; r < y.size(); ++r)
    y[r] = dot(w + r * layer.in_dim(), x.data(), x.size()) + layer.bias[r];
  return y;
}

ForwardResult forward(const Mlp& mlp, std::span<const double> x) {
  check_chain(mlp);
  ForwardResult res;
  const std::size_t n = mlp.layers.size();
  res.cache.inputs.reserve(n);
  res.cache.pre.reserve(n);
  std::vector<double> h(x.begin(), x.end());
  for (std::size_t l = 0; l < n; ++l) {
    std::vector<double> z = affine(mlp.layers[l], h);
    res.cache.inputs.push_back(std::move(h));
    h = z;
    if (l + 1 < n)
      for (double& v : h) v = std::max(0.0, v);
    res.cache.pre.push_back(std::move(z));
  }
  res.output = std::move(h);
  return res;
}

std::vector<double> predict(const Mlp& mlp, std::span<const double> x) {
  check_chain(mlp);
  std::vector<double> h(x.begin(), x.end());
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    h = affine(mlp.layers[l], h);
    if (l + 1 < mlp.layers.size())
      for (double& v : h) v = std::max(0.0, v);
  }
  return h;
}

void layer_backward_accumulate(const DenseLayer& layer,
                               std::span<const double> x,
                               std::span<const double> grad_out,
                               DenseLayer& grads, std::span<double> grad_in) {
  const std::size_t in = layer.in_dim();
  const std::size_t out = layer.out_dim();
  if (x.size() != in || grad_out.size() != out)
    throw DimensionError("layer backward shape mismatch");
  if (grads.in_dim() != in || grads.out_dim() != out)
    throw DimensionError("gradient buffer shape mismatch");
  if (!grad_in.empty() && grad_in.size() != in)
    throw DimensionError("input gradient buffer shape mismatch");
  for (std::size_t r = 0; r < out; ++r) {
    const double g = grad_out[r];
    if (g == 0.0) continue;
    grads.bias[r] += g;
    double* gw = grads.weights.data.data() + r * in;
    for (std::size_t c = 0; c < in; ++c) gw[c] += g * x[c];
    if (!grad_in.empty()) {
      const double* w = layer.weights.data.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) grad_in[c] += g * w[c];
    }
  }
}

std::vector<double> backward_accumulate(const Mlp& mlp,
                                        const ForwardCache& cache,
                                        std::span<const double> grad_out,
                                        Mlp& grads) {
  check_chain(mlp);
  const std::size_t n = mlp.layers.size();
  if (cache.inputs.size() != n || cache.pre.size() != n)
    throw DimensionError("forward cache does not match the mlp");
  for (std::size_t l = 0; l < n; ++l)
    if (cache.inputs[l].size() != mlp.layers[l].in_dim() ||
        cache.pre[l].size() != mlp.layers[l].out_dim())
      throw DimensionError("forward cache is stale for layer " +
                           std::to_string(l));
  if (grads.layers.size() != n)
    throw DimensionError("gradient buffer does not match the mlp");
  if (grad_out.size() != mlp.out_dim())
    throw DimensionError("output gradient has wrong size");

  std::vector<double> g(grad_out.begin(), grad_out.end());
  for (std::size_t l = n; l-- > 0;) {
    if (l + 1 < n)
      for (std::size_t i = 0; i < g.size(); ++i)
        if (cache.pre[l][i] <= 0.0) g[i] = 0.0;
    std::vector<double> gin(mlp.layers[l].in_dim(), 0.0);
    layer_backward_accumulate(mlp.layers[l], cache.inputs[l], g,
                              grads.layers[l], gin);
    g = std::move(gin);
  }
  return g;
}

MlpBackward backward(const Mlp& mlp, const ForwardCache& cache,
                     std::span<const double> grad_out) {
  MlpBackward res;
  res.grads = zeros_like(mlp);
  res.grad_in = backward_accumulate(mlp, cache, grad_out, res.grads);
  return res;
}

DenseLayer init_layer(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
  DenseLayer layer(in_dim, out_dim);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / in_dim));
  for (double& w : layer.weights.data) w = dist(rng);
  return layer;
}

Mlp make_mlp(std::span<const std::size_t> dims, Rng& rng) {
  if (dims.size() < 2) throw DimensionError("mlp needs at least in and out dims");
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] == 0 || dims[i + 1] == 0)
      throw DimensionError("mlp dimensions must be positive");
    mlp.layers.push_back(init_layer(dims[i], dims[i + 1], rng));
  }
  return mlp;
}

DenseLayer zeros_like(const DenseLayer& layer) {
  return DenseLayer(layer.in_dim(), layer.out_dim());
}

Mlp zeros_like(const Mlp& mlp) {
  Mlp out;
  out.layers.reserve(mlp.layers.size());
  for (const auto& l : mlp.layers) out.layers.push_back(zeros_like(l));
  return out;
}

double log_sum_exp(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("log_sum_exp of empty vector");
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  return m + std::log(s);
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("softmax of empty vector");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    s += p[i];
  }
  for (double& v : p) v /= s;
  return p;
}

XentResult softmax_xent(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size())
    throw DimensionError("target class " + std::to_string(target) +
                         " out of range for " + std::to_string(logits.size()) +
                         " logits");
  XentResult r;
  r.loss = log_sum_exp(logits) - logits[target];
  r.grad = softmax(logits);
  r.grad[target] -= 1.0;
  return r;
}

void append_blocks(DenseLayer& layer, ParamBlocks& out) {
  out.emplace_back(layer.weights.data);
  out.emplace_back(layer.bias);
}

void append_blocks(Mlp& mlp, ParamBlocks& out) {
  for (auto& l : mlp.layers) append_blocks(l, out);
}

OptimizerState make_optimizer_state(double learning_rate, double momentum,
                                    const ParamBlocks& params) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("momentum must lie in [0,1)");
  OptimizerState state;
  state.learning_rate = learning_rate;
  state.momentum = momentum;
  state.velocity.reserve(params.size());
  for (const auto& p : params) state.velocity.emplace_back(p.size(), 0.0);
  return state;
}

void sgd_step(const ParamBlocks& params, const ParamBlocks& grads,
              OptimizerState& state) {
  if (params.size() != grads.size() || params.size() != state.velocity.size())
    throw DimensionError("optimizer block count mismatch");
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto p = params[b];
    auto g = grads[b];
    auto& v = state.velocity[b];
    if (p.size() != g.size() || p.size() != v.size())
      throw DimensionError("optimizer block " + std::to_string(b) +
                           " shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = state.momentum * v[i] - state.learning_rate * g[i];
      p[i] += v[i];
    }
  }
}

}  // namespace relfuse
