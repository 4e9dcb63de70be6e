#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "hda/adam.hpp"
#include "hda/dataset.hpp"
#include "hda/error.hpp"
#include "hda/mlp.hpp"
#include "hda/random.hpp"
#include "hda/training.hpp"

namespace hda {

inline constexpr std::size_t kSourceDomainLabel = 0;
inline constexpr std::size_t kTargetDomainLabel = 1;

/// Training settings for the binary domain classifier.
struct HdhConfig {
  std::size_t epochs = 5;
  double learning_rate = 0.01;
  std::size_t batch_size = kDefaultBatchSize;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden = {64, 64};
  double train_fraction = 0.8;

  friend bool operator==(const HdhConfig&, const HdhConfig&) = default;
};

inline std::vector<std::string> violations(const HdhConfig& c, const std::string& prefix = "hdh") {
  std::vector<std::string> v;
  if (c.epochs < 1) v.push_back(prefix + ".epochs must be >= 1");
  if (!(c.learning_rate > 0.0)) v.push_back(prefix + ".learning_rate must be > 0");
  if (c.batch_size < 1) v.push_back(prefix + ".batch_size must be >= 1");
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) v.push_back(prefix + ".train_fraction must be in (0,1)");
  for (std::size_t h : c.hidden) {
    if (h == 0) v.push_back(prefix + ".hidden widths must be positive");
  }
  return v;
}

struct DivergenceReport {
  double domain_error = 0.0;      // balanced held-out error of the domain classifier
  double proxy_a_distance = 0.0;  // 2 (1 - 2 domain_error)
  std::size_t n_source = 0;
  std::size_t n_target = 0;

  friend bool operator==(const DivergenceReport&, const DivergenceReport&) = default;
};

/// 2 (1 - 2 err). Not clamped: a worse-than-chance discriminator yields a negative value.
inline double proxy_a_distance(double err) {
  if (!(err >= 0.0 && err <= 1.0)) throw InputError("domain error " + std::to_string(err) + " outside [0,1]");
  return 2.0 * (1.0 - 2.0 * err);
}

namespace detail {

inline void require_domain_classifier(const Mlp& h) {
  validate(h);
  if (h.out_dim() != 2) {
    throw ConfigError("domain classifier must have 2 outputs, has " + std::to_string(h.out_dim()));
  }
}

}  // namespace detail

/// Trains a 2-class network separating s (label 0) from t (label 1). Each epoch
/// subsamples the larger domain down to the size of the smaller one.
inline Mlp train_domain_classifier(const Matrix& s, const Matrix& t, const HdhConfig& cfg) {
  if (auto v = violations(cfg); !v.empty()) throw ValidationError(std::move(v));
  if (s.cols() != t.cols()) {
    throw ConfigError("source has " + std::to_string(s.cols()) + " features, target has " + std::to_string(t.cols()));
  }
  if (s.rows() == 0 || t.rows() == 0) throw InputError("domain classifier needs non-empty domains");

  std::vector<std::size_t> dims{s.cols()};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(2);
  Mlp net = make_mlp(dims, derive_seed(cfg.seed, 1));
  AdamState adam = make_adam(net, cfg.learning_rate);

  const std::size_t m = std::min(s.rows(), t.rows());
  std::vector<std::size_t> labels(2 * m);
  std::fill(labels.begin() + static_cast<long>(m), labels.end(), kTargetDomainLabel);
  BatchIterator batches(2 * m, cfg.batch_size, derive_seed(cfg.seed, 2));

  auto draw = [&](const Matrix& x, std::size_t epoch, std::uint64_t stream) {
    if (x.rows() == m) return x;
    auto perm = permutation(x.rows(), derive_seed(derive_seed(cfg.seed, stream), epoch));
    perm.resize(m);
    std::sort(perm.begin(), perm.end());
    return take_rows(x, perm);
  };

  std::vector<std::size_t> yb;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const Matrix pool = vstack(draw(s, e, 3), draw(t, e, 4));
    for (const auto& idx : batches.next()) {
      yb.clear();
      for (std::size_t i : idx) yb.push_back(labels[i]);
      train_step(net, adam, take_rows(pool, idx), yb);
    }
  }
  return net;
}

inline Mlp train_domain_classifier(const LabeledDataset& s, const LabeledDataset& t, const HdhConfig& cfg) {
  return train_domain_classifier(s.features, t.features, cfg);
}

/// Mean of the per-domain misclassification rates (argmax, ties to label 0).
inline double domain_error(const Mlp& h, const Matrix& s_eval, const Matrix& t_eval) {
  detail::require_domain_classifier(h);
  if (s_eval.rows() == 0 || t_eval.rows() == 0) throw InputError("domain error needs non-empty evaluation sets");
  auto miss_rate = [&](const Matrix& x, std::size_t want) {
    const auto pred = argmax_rows(predict_logits(h, x));
    const auto wrong = std::count_if(pred.begin(), pred.end(), [&](std::size_t p) { return p != want; });
    return static_cast<double>(wrong) / static_cast<double>(pred.size());
  };
  return 0.5 * (miss_rate(s_eval, kSourceDomainLabel) + miss_rate(t_eval, kTargetDomainLabel));
}

struct DivergenceEstimate {
  DivergenceReport report;
  Mlp classifier;  // trained on the training split only
};

/// Splits each domain train/held-out, trains a domain classifier on the
/// training parts and scores it on the held-out parts.
inline DivergenceEstimate estimate_divergence(const LabeledDataset& s, const LabeledDataset& t, const HdhConfig& cfg) {
  if (s.dim() != t.dim()) {
    throw ConfigError("source has " + std::to_string(s.dim()) + " features, target has " + std::to_string(t.dim()));
  }
  auto [s_train, s_eval] = split_holdout(s, cfg.train_fraction, derive_seed(cfg.seed, 10));
  auto [t_train, t_eval] = split_holdout(t, cfg.train_fraction, derive_seed(cfg.seed, 11));
  DivergenceEstimate out;
  out.classifier = train_domain_classifier(s_train.features, t_train.features, cfg);
  const double err = domain_error(out.classifier, s_eval.features, t_eval.features);
  out.report = {err, proxy_a_distance(err), s.size(), t.size()};
  return out;
}

}  // namespace hda
