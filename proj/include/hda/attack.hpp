#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hda/dataset.hpp"
#include "hda/divergence.hpp"
#include "hda/error.hpp"
#include "hda/mlp.hpp"

namespace hda {

enum class AttackNorm : std::uint8_t { linf = 0 };

/// Iterated targeted FGSM settings. `epsilon` is the per-step l_inf size, so
/// the total budget is steps * epsilon.
struct AttackConfig {
  double epsilon = 0.01;
  std::size_t steps = 7;
  AttackNorm norm = AttackNorm::linf;
  double clip_min = 0.0;
  double clip_max = 1.0;
  std::size_t target_domain_label = kTargetDomainLabel;

  double budget() const noexcept { return static_cast<double>(steps) * epsilon; }

  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

/// `allow_zero_steps` admits steps = 0, which the pipeline treats as "no attack".
inline std::vector<std::string> violations(const AttackConfig& c, const std::string& prefix = "attack",
                                           bool allow_zero_steps = false) {
  std::vector<std::string> v;
  if (!(c.epsilon >= 0.0)) v.push_back(prefix + ".epsilon must be >= 0");
  if (c.steps < 1 && !allow_zero_steps) v.push_back(prefix + ".steps must be >= 1");
  if (!(c.clip_min < c.clip_max)) v.push_back(prefix + ".clip_min must be < clip_max");
  if (c.target_domain_label > 1) v.push_back(prefix + ".target_domain_label must be 0 or 1");
  return v;
}

namespace detail {

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Pulls `v` toward `anchor` until the floating-point distance is within `radius`.
inline double within_radius(double v, double anchor, double radius) {
  v = std::clamp(v, anchor - radius, anchor + radius);
  while (std::abs(v - anchor) > radius) v = std::nextafter(v, anchor);
  return v;
}

inline void require_in_range(const Matrix& x, double lo, double hi) {
  for (double v : x.data()) {
    if (!(v >= lo && v <= hi)) {
      throw InputError("attack input " + std::to_string(v) + " outside clip range [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "]");
    }
  }
}

}  // namespace detail

/// One targeted step: clip(x + epsilon * sign(-grad_x CE(h(x), y_target))).
/// Rows are attacked independently; the loss is summed so the per-row gradient
/// does not depend on the batch size.
inline Matrix fgsm_step(const Mlp& h, const Matrix& x, std::span<const std::size_t> y_target, double epsilon,
                        double clip_min = 0.0, double clip_max = 1.0) {
  if (x.cols() != h.in_dim()) {
    throw ConfigError("attack input has " + std::to_string(x.cols()) + " features, classifier expects " +
                      std::to_string(h.in_dim()));
  }
  detail::require_in_range(x, clip_min, clip_max);
  auto fwd = forward(h, x);
  const auto ce = softmax_cross_entropy(fwd.output, y_target, Reduction::sum);
  const Matrix grad_x = backward(h, fwd.cache, ce.grad).input_grad;

  Matrix out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x0 = x.data()[i];
    const double moved = std::clamp(x0 + epsilon * detail::sign(-grad_x.data()[i]), clip_min, clip_max);
    out.data()[i] = detail::within_radius(moved, x0, epsilon);
  }
  return out;
}

/// Runs `cfg.steps` targeted steps against the domain classifier so source rows
/// drift toward what `h` calls the target domain. Class labels are kept.
inline LabeledDataset generate_adversarial_domain(const Mlp& h, const LabeledDataset& s, const AttackConfig& cfg) {
  if (auto v = violations(cfg); !v.empty()) throw ValidationError(std::move(v));
  detail::require_domain_classifier(h);
  if (s.dim() != h.in_dim()) {
    throw ConfigError("source has " + std::to_string(s.dim()) + " features, classifier expects " +
                      std::to_string(h.in_dim()));
  }
  const std::vector<std::size_t> y_target(s.size(), cfg.target_domain_label);
  const double budget = cfg.budget();
  Matrix x = s.features;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    x = fgsm_step(h, x, y_target, cfg.epsilon, cfg.clip_min, cfg.clip_max);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x.data()[i] = detail::within_radius(x.data()[i], s.features.data()[i], budget);
    }
  }
  return LabeledDataset{std::move(x), s.labels, DomainTag::adversarial, s.class_count};
}

/// Fraction of rows that `h` assigns to `target_label`.
inline double attack_success_rate(const Mlp& h, const Matrix& x, std::size_t target_label) {
  detail::require_domain_classifier(h);
  if (x.rows() == 0) return 0.0;
  const auto pred = argmax_rows(predict_logits(h, x));
  const auto hits = std::count(pred.begin(), pred.end(), target_label);
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

inline double max_perturbation(const Matrix& a, const Matrix& b) { return max_abs_diff(a, b); }

}  // namespace hda
