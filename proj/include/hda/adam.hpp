#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "hda/error.hpp"
#include "hda/mlp.hpp"

namespace hda {

/// Bias-corrected Adam. One moment buffer per parameter tensor; for an Mlp the
/// tensors are ordered weight0, bias0, weight1, bias1, ...
struct AdamState {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon_stab = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

inline AdamState make_adam(const Mlp& net, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  for (const auto& l : net.layers) {
    s.m.emplace_back(l.weight.size(), 0.0);
    s.m.emplace_back(l.bias.size(), 0.0);
  }
  s.v = s.m;
  return s;
}

/// State for a single flat parameter vector.
inline AdamState make_adam(std::size_t n_params, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.m.emplace_back(n_params, 0.0);
  s.v = s.m;
  return s;
}

namespace detail {

inline void adam_update(std::span<double> p, std::span<const double> g, std::vector<double>& m,
                        std::vector<double>& v, const AdamState& s, double correction1,
                        double correction2) {
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
    throw UsageError("adam: parameter, gradient and moment sizes differ (" +
                     std::to_string(p.size()) + ", " + std::to_string(g.size()) + ", " +
                     std::to_string(m.size()) + ")");
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    p[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon_stab);
  }
}

}  // namespace detail

inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& s) {
  if (s.m.size() != 1) throw UsageError("adam: state does not describe a single flat tensor");
  ++s.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  detail::adam_update(params, grads, s.m[0], s.v[0], s, c1, c2);
}

inline void adam_step(Mlp& net, const Gradients& grads, AdamState& s) {
  if (grads.layers.size() != net.layers.size() || s.m.size() != 2 * net.layers.size()) {
    throw UsageError("adam: gradient/state layer count does not match network");
  }
  ++s.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& layer = net.layers[l];
    const auto& g = grads.layers[l];
    if (g.weight.rows() != layer.weight.rows() || g.weight.cols() != layer.weight.cols()) {
      throw UsageError("adam: weight gradient shape mismatch at layer " + std::to_string(l));
    }
    detail::adam_update(layer.weight.data(), g.weight.data(), s.m[2 * l], s.v[2 * l], s, c1, c2);
    detail::adam_update(layer.bias, g.bias, s.m[2 * l + 1], s.v[2 * l + 1], s, c1, c2);
  }
}

}  // namespace hda
