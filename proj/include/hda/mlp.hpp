#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hda/error.hpp"
#include "hda/matrix.hpp"
#include "hda/random.hpp"

namespace hda {

enum class Activation : std::uint8_t { identity = 0, relu = 1 };

struct Layer {
  Matrix weight;             // out x in
  std::vector<double> bias;  // out
  Activation activation = Activation::identity;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Feed-forward network. Classifier networks end in an identity layer; the
/// losses apply their own link.
struct Mlp {
  std::vector<Layer> layers;

  std::size_t in_dim() const noexcept { return layers.empty() ? 0 : layers.front().in_dim(); }
  std::size_t out_dim() const noexcept { return layers.empty() ? 0 : layers.back().out_dim(); }
  std::size_t parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  friend bool operator==(const Mlp&, const Mlp&) = default;
};

/// Checks that consecutive layer dimensions chain.
inline void validate(const Mlp& net) {
  if (net.layers.empty()) throw ConfigError("network has no layers");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    if (layer.bias.size() != layer.out_dim()) {
      throw ConfigError("layer " + std::to_string(l) + " bias length " +
                        std::to_string(layer.bias.size()) + " != out dim " +
                        std::to_string(layer.out_dim()));
    }
    if (l > 0 && net.layers[l - 1].out_dim() != layer.in_dim()) {
      throw ConfigError("layer " + std::to_string(l) + " expects input dim " +
                        std::to_string(layer.in_dim()) + " but previous layer emits " +
                        std::to_string(net.layers[l - 1].out_dim()));
    }
  }
}

/// Builds a network with layer widths `dims` (input first). Hidden layers use
/// relu; the last layer uses `last`. Weights are drawn uniformly from
/// +-sqrt(6 / (fan_in + fan_out)); biases start at zero.
inline Mlp make_mlp(std::span<const std::size_t> dims, std::uint64_t seed,
                    Activation last = Activation::identity) {
  if (dims.size() < 2) throw ConfigError("make_mlp needs at least input and output widths");
  Mlp net;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l];
    const std::size_t out = dims[l + 1];
    if (in == 0 || out == 0) throw ConfigError("layer widths must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Layer layer{Matrix(out, in), std::vector<double>(out, 0.0),
                l + 2 == dims.size() ? last : Activation::relu};
    for (double& w : layer.weight.data()) w = dist(rng);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

inline Mlp make_mlp(std::initializer_list<std::size_t> dims, std::uint64_t seed,
                    Activation last = Activation::identity) {
  return make_mlp(std::span<const std::size_t>(dims.begin(), dims.size()), seed, last);
}

/// Activations retained by `forward` for the backward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;          // input to each layer
  std::vector<Matrix> preactivations;  // x W^T + b of each layer
};

struct ForwardResult {
  Matrix output;
  ForwardCache cache;
};

namespace detail {

inline Matrix affine(const Layer& layer, const Matrix& x) {
  const std::size_t n = x.rows(), in = layer.in_dim(), out = layer.out_dim();
  Matrix z(n, out);
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.row(r).data();
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = layer.weight.row(o).data();
      double acc = layer.bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wo[i];
      z(r, o) = acc;
    }
  }
  return z;
}

inline Matrix activate(Activation act, Matrix z) {
  if (act == Activation::relu) {
    for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
  }
  return z;
}

}  // namespace detail

inline ForwardResult forward(const Mlp& net, const Matrix& x) {
  validate(net);
  if (x.cols() != net.in_dim()) {
    throw ConfigError("input has " + std::to_string(x.cols()) + " features, network expects " +
                      std::to_string(net.in_dim()));
  }
  ForwardResult res;
  res.cache.inputs.reserve(net.layers.size());
  res.cache.preactivations.reserve(net.layers.size());
  Matrix h = x;
  for (const auto& layer : net.layers) {
    Matrix z = detail::affine(layer, h);
    res.cache.inputs.push_back(std::move(h));
    h = detail::activate(layer.activation, z);
    res.cache.preactivations.push_back(std::move(z));
  }
  res.output = std::move(h);
  return res;
}

/// Forward pass without keeping the cache.
inline Matrix predict_logits(const Mlp& net, const Matrix& x) {
  validate(net);
  if (x.cols() != net.in_dim()) {
    throw ConfigError("input has " + std::to_string(x.cols()) + " features, network expects " +
                      std::to_string(net.in_dim()));
  }
  Matrix h = x;
  for (const auto& layer : net.layers) h = detail::activate(layer.activation, detail::affine(layer, h));
  return h;
}

struct LayerGradient {
  Matrix weight;
  std::vector<double> bias;
};

struct Gradients {
  std::vector<LayerGradient> layers;
  Matrix input_grad;  // dLoss/dx, same shape as the forward input
};

/// Zero-valued gradient buffers mirroring `net`.
inline Gradients zero_gradients(const Mlp& net, std::size_t batch_rows = 0) {
  Gradients g;
  for (const auto& l : net.layers) {
    g.layers.push_back({Matrix(l.out_dim(), l.in_dim()), std::vector<double>(l.out_dim(), 0.0)});
  }
  g.input_grad = Matrix(batch_rows, net.in_dim());
  return g;
}

/// Adds the parameter gradients of `from` into `into` (input gradients are left alone).
inline void accumulate(Gradients& into, const Gradients& from) {
  if (into.layers.size() != from.layers.size()) throw UsageError("gradient layer count mismatch");
  for (std::size_t l = 0; l < into.layers.size(); ++l) {
    auto& a = into.layers[l];
    const auto& b = from.layers[l];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.bias.size() != b.bias.size()) {
      throw UsageError("gradient shape mismatch at layer " + std::to_string(l));
    }
    for (std::size_t i = 0; i < a.weight.size(); ++i) a.weight.data()[i] += b.weight.data()[i];
    for (std::size_t i = 0; i < a.bias.size(); ++i) a.bias[i] += b.bias[i];
  }
}

inline Gradients backward(const Mlp& net, const ForwardCache& cache, const Matrix& upstream) {
  const std::size_t depth = net.layers.size();
  if (depth == 0) throw UsageError("backward through a network with no layers");
  if (cache.inputs.size() != depth || cache.preactivations.size() != depth) {
    throw UsageError("forward cache has " + std::to_string(cache.inputs.size()) +
                     " layers, network has " + std::to_string(depth));
  }
  const std::size_t n = cache.inputs.front().rows();
  for (std::size_t l = 0; l < depth; ++l) {
    const auto& layer = net.layers[l];
    const auto& in = cache.inputs[l];
    const auto& pre = cache.preactivations[l];
    if (in.cols() != layer.in_dim() || pre.cols() != layer.out_dim() || in.rows() != n ||
        pre.rows() != n) {
      throw UsageError("forward cache does not match network at layer " + std::to_string(l));
    }
  }
  if (upstream.rows() != n || upstream.cols() != net.out_dim()) {
    throw UsageError("upstream gradient is " + shape_str(upstream) + ", expected " +
                     std::to_string(n) + "x" + std::to_string(net.out_dim()));
  }

  Gradients g;
  g.layers.resize(depth);
  Matrix delta = upstream;
  for (std::size_t step = 0; step < depth; ++step) {
    const std::size_t l = depth - 1 - step;
    const auto& layer = net.layers[l];
    const auto& in = cache.inputs[l];
    const auto& pre = cache.preactivations[l];
    const std::size_t out_dim = layer.out_dim(), in_dim = layer.in_dim();

    if (layer.activation == Activation::relu) {
      for (std::size_t i = 0; i < delta.size(); ++i) {
        if (!(pre.data()[i] > 0.0)) delta.data()[i] = 0.0;
      }
    }

    LayerGradient lg{Matrix(out_dim, in_dim), std::vector<double>(out_dim, 0.0)};
    for (std::size_t r = 0; r < n; ++r) {
      const double* dr = delta.row(r).data();
      const double* xr = in.row(r).data();
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double d = dr[o];
        lg.bias[o] += d;
        double* gw = lg.weight.row(o).data();
        for (std::size_t i = 0; i < in_dim; ++i) gw[i] += d * xr[i];
      }
    }

    Matrix next(n, in_dim);
    for (std::size_t r = 0; r < n; ++r) {
      const double* dr = delta.row(r).data();
      double* nr = next.row(r).data();
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double d = dr[o];
        const double* wo = layer.weight.row(o).data();
        for (std::size_t i = 0; i < in_dim; ++i) nr[i] += d * wo[i];
      }
    }
    g.layers[l] = std::move(lg);
    delta = std::move(next);
  }
  g.input_grad = std::move(delta);
  return g;
}

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;  // dLoss/dLogits
};

enum class Reduction { mean, sum };

/// Softmax cross-entropy over the batch (mean by default), max-shift stabilized.
inline LossAndGrad softmax_cross_entropy(const Matrix& logits, std::span<const std::size_t> labels,
                                         Reduction reduction = Reduction::mean) {
  const std::size_t n = logits.rows(), c = logits.cols();
  if (labels.size() != n) {
    throw InputError("got " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                     " rows");
  }
  if (n == 0) throw InputError("cross-entropy of an empty batch");
  LossAndGrad out{0.0, Matrix(n, c)};
  const double inv_n = reduction == Reduction::mean ? 1.0 / static_cast<double>(n) : 1.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] >= c) {
      throw InputError("label " + std::to_string(labels[r]) + " out of range [0, " +
                       std::to_string(c) + ")");
    }
    const auto z = logits.row(r);
    const double shift = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - shift);
    const double log_sum = std::log(sum);
    out.loss += (log_sum - (z[labels[r]] - shift)) * inv_n;
    auto g = out.grad.row(r);
    for (std::size_t k = 0; k < c; ++k) {
      const double p = std::exp(z[k] - shift - log_sum);
      g[k] = (p - (k == labels[r] ? 1.0 : 0.0)) * inv_n;
    }
  }
  return out;
}

/// Backward rule of the gradient reversal layer (its forward pass is the identity).
inline Matrix grad_reversal(const Matrix& upstream, double lambda) {
  Matrix out = upstream;
  for (double& v : out.data()) v = -lambda * v;
  return out;
}

/// Index of the largest entry per row; ties go to the lower index.
inline std::vector<std::size_t> argmax_rows(const Matrix& m) {
  std::vector<std::size_t> out(m.rows(), 0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k) {
      if (row[k] > row[best]) best = k;
    }
    out[r] = best;
  }
  return out;
}

}  // namespace hda
