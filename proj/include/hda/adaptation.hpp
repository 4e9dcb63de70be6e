#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hda/adam.hpp"
#include "hda/attack.hpp"
#include "hda/dataset.hpp"
#include "hda/divergence.hpp"
#include "hda/error.hpp"
#include "hda/mlp.hpp"
#include "hda/mmd.hpp"
#include "hda/random.hpp"

namespace hda {

/// F_theta split at its first hidden layer: extractor -> label head, plus a
/// domain head on the same representation (used by DANN only).
struct SourceClassifier {
  Mlp extractor;    // input -> representation (ends in relu)
  Mlp label_head;   // representation -> class logits
  Mlp domain_head;  // representation -> 2 domain logits

  std::vector<Mlp> networks() const { return {extractor, label_head, domain_head}; }

  friend bool operator==(const SourceClassifier&, const SourceClassifier&) = default;
};

inline constexpr std::size_t kDefaultHiddenWidth = 64;

inline void validate(const SourceClassifier& f) {
  validate(f.extractor);
  validate(f.label_head);
  validate(f.domain_head);
  if (f.extractor.out_dim() != f.label_head.in_dim() || f.extractor.out_dim() != f.domain_head.in_dim()) {
    throw ConfigError("extractor output width " + std::to_string(f.extractor.out_dim()) +
                      " does not match head input widths " + std::to_string(f.label_head.in_dim()) + " / " +
                      std::to_string(f.domain_head.in_dim()));
  }
  if (f.domain_head.out_dim() != 2) throw ConfigError("domain head must have 2 outputs");
}

inline SourceClassifier make_source_classifier(std::size_t input_dim, std::size_t class_count, std::uint64_t seed,
                                               std::size_t hidden = kDefaultHiddenWidth) {
  if (class_count < 2) throw ConfigError("source classifier needs at least 2 classes");
  return {make_mlp({input_dim, hidden}, derive_seed(seed, 1), Activation::relu),
          make_mlp({hidden, hidden, class_count}, derive_seed(seed, 2)),
          make_mlp({hidden, hidden, 2}, derive_seed(seed, 3))};
}

inline SourceClassifier source_classifier_from_networks(std::vector<Mlp> nets) {
  if (nets.size() != 3) {
    throw FormatError("source classifier file must hold 3 networks, found " + std::to_string(nets.size()));
  }
  SourceClassifier f{std::move(nets[0]), std::move(nets[1]), std::move(nets[2])};
  validate(f);
  return f;
}

inline Matrix classify_logits(const SourceClassifier& f, const Matrix& x) {
  return predict_logits(f.label_head, predict_logits(f.extractor, x));
}

struct PretrainConfig {
  std::size_t epochs = 10;
  double learning_rate = 0.01;
  std::size_t batch_size = kDefaultBatchSize;
  std::uint64_t seed = 0;

  friend bool operator==(const PretrainConfig&, const PretrainConfig&) = default;
};

inline std::vector<std::string> violations(const PretrainConfig& c, const std::string& prefix = "pretrain") {
  std::vector<std::string> v;
  if (c.epochs < 1) v.push_back(prefix + ".epochs must be >= 1");
  if (!(c.learning_rate > 0.0)) v.push_back(prefix + ".learning_rate must be > 0");
  if (c.batch_size < 1) v.push_back(prefix + ".batch_size must be >= 1");
  return v;
}

enum class DaMethod : std::uint8_t { source_only, dann, mmd };

inline std::string_view to_string(DaMethod m) {
  switch (m) {
    case DaMethod::source_only: return "source_only";
    case DaMethod::dann: return "dann";
    case DaMethod::mmd: return "mmd";
  }
  return "unknown";
}

inline DaMethod da_method_from_string(std::string_view s) {
  if (s == "source_only") return DaMethod::source_only;
  if (s == "dann") return DaMethod::dann;
  if (s == "mmd") return DaMethod::mmd;
  throw ConfigError("unknown adaptation method '" + std::string(s) + "' (expected source_only, dann or mmd)");
}

struct DAConfig {
  DaMethod method = DaMethod::source_only;
  std::size_t epochs = 20;
  double learning_rate = 0.01;
  double lambda_domain = 1.0;  // final reversal strength; ramps linearly from lambda/epochs
  double mmd_weight = 1.0;
  std::vector<double> mmd_bandwidths;                   // fixed bandwidths; empty = median heuristic
  std::vector<double> bandwidth_scales = {0.5, 1.0, 2.0};  // multipliers of the median distance
  std::size_t batch_size = kDefaultBatchSize;
  std::uint64_t seed = 0;

  friend bool operator==(const DAConfig&, const DAConfig&) = default;
};

inline std::vector<std::string> violations(const DAConfig& c, const std::string& prefix = "da") {
  std::vector<std::string> v;
  if (c.epochs < 1) v.push_back(prefix + ".epochs must be >= 1");
  if (!(c.learning_rate > 0.0)) v.push_back(prefix + ".learning_rate must be > 0");
  if (!(c.lambda_domain >= 0.0)) v.push_back(prefix + ".lambda_domain must be >= 0");
  if (!(c.mmd_weight >= 0.0)) v.push_back(prefix + ".mmd_weight must be >= 0");
  if (c.batch_size < 1) v.push_back(prefix + ".batch_size must be >= 1");
  for (double b : c.mmd_bandwidths) {
    if (!(b > 0.0)) v.push_back(prefix + ".mmd_bandwidths must be positive");
  }
  if (c.mmd_bandwidths.empty() && c.bandwidth_scales.empty()) {
    v.push_back(prefix + ".bandwidth_scales must be non-empty when mmd_bandwidths is empty");
  }
  for (double s : c.bandwidth_scales) {
    if (!(s > 0.0)) v.push_back(prefix + ".bandwidth_scales must be positive");
  }
  return v;
}

/// Reversal strength during epoch `epoch` (0-based): lambda * (epoch + 1) / epochs.
inline double dann_lambda(const DAConfig& cfg, std::size_t epoch) {
  return cfg.lambda_domain * static_cast<double>(epoch + 1) / static_cast<double>(cfg.epochs);
}

namespace detail {

struct ClassifierOptimizer {
  AdamState extractor, label_head, domain_head;

  ClassifierOptimizer(const SourceClassifier& f, double lr)
      : extractor(make_adam(f.extractor, lr)),
        label_head(make_adam(f.label_head, lr)),
        domain_head(make_adam(f.domain_head, lr)) {}
};

inline std::vector<std::size_t> gather_labels(std::span<const std::size_t> labels, std::span<const std::size_t> idx) {
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(labels[i]);
  return out;
}

// Cycles through target mini-batches across as many epochs as needed.
class TargetStream {
 public:
  TargetStream(std::size_t n, std::size_t batch_size, std::uint64_t seed) : it_(n, batch_size, seed) {}

  const std::vector<std::size_t>& next() {
    if (pos_ >= current_.size()) {
      current_ = it_.next();
      pos_ = 0;
    }
    return current_[pos_++];
  }

 private:
  BatchIterator it_;
  std::vector<std::vector<std::size_t>> current_;
  std::size_t pos_ = 0;
};

inline void check_input_dim(const SourceClassifier& f, std::size_t dim) {
  if (f.extractor.in_dim() != dim) {
    throw ConfigError("data has " + std::to_string(dim) + " features, classifier expects " +
                      std::to_string(f.extractor.in_dim()));
  }
}

inline void check_labels(const SourceClassifier& f, const LabeledDataset& d) {
  validate(d);
  if (d.class_count > f.label_head.out_dim()) {
    throw ConfigError("dataset has " + std::to_string(d.class_count) + " classes, label head has " +
                      std::to_string(f.label_head.out_dim()) + " outputs");
  }
}

}  // namespace detail

/// Supervised training of extractor + label head on `labeled`.
inline SourceClassifier pretrain(SourceClassifier f, const LabeledDataset& labeled, const PretrainConfig& cfg) {
  if (auto v = violations(cfg); !v.empty()) throw ValidationError(std::move(v));
  validate(f);
  detail::check_input_dim(f, labeled.dim());
  detail::check_labels(f, labeled);

  detail::ClassifierOptimizer opt(f, cfg.learning_rate);
  BatchIterator batches(labeled.size(), cfg.batch_size, derive_seed(cfg.seed, 10));
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    for (const auto& idx : batches.next()) {
      const auto feats = forward(f.extractor, take_rows(labeled.features, idx));
      const auto logits = forward(f.label_head, feats.output);
      const auto ce = softmax_cross_entropy(logits.output, detail::gather_labels(labeled.labels, idx));
      const auto g_head = backward(f.label_head, logits.cache, ce.grad);
      const auto g_ext = backward(f.extractor, feats.cache, g_head.input_grad);
      adam_step(f.label_head, g_head, opt.label_head);
      adam_step(f.extractor, g_ext, opt.extractor);
    }
  }
  return f;
}

/// Unsupervised adaptation toward `target_features`. The target is passed as a
/// bare feature matrix so no method can read target labels.
inline SourceClassifier adapt(SourceClassifier f, const LabeledDataset& labeled, const Matrix& target_features,
                              const DAConfig& cfg) {
  if (auto v = violations(cfg); !v.empty()) throw ValidationError(std::move(v));
  validate(f);
  detail::check_input_dim(f, labeled.dim());
  detail::check_input_dim(f, target_features.cols());
  detail::check_labels(f, labeled);
  if (target_features.rows() == 0) throw InputError("adaptation target is empty");

  detail::ClassifierOptimizer opt(f, cfg.learning_rate);
  BatchIterator batches(labeled.size(), cfg.batch_size, derive_seed(cfg.seed, 20));
  detail::TargetStream target_batches(target_features.rows(), cfg.batch_size, derive_seed(cfg.seed, 21));

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const double lambda = dann_lambda(cfg, e);
    for (const auto& idx : batches.next()) {
      const auto feats_s = forward(f.extractor, take_rows(labeled.features, idx));
      const auto logits = forward(f.label_head, feats_s.output);
      const auto ce = softmax_cross_entropy(logits.output, detail::gather_labels(labeled.labels, idx));
      const auto g_head = backward(f.label_head, logits.cache, ce.grad);
      Matrix upstream_s = g_head.input_grad;

      if (cfg.method == DaMethod::source_only) {
        const auto g_ext = backward(f.extractor, feats_s.cache, upstream_s);
        adam_step(f.label_head, g_head, opt.label_head);
        adam_step(f.extractor, g_ext, opt.extractor);
        continue;
      }

      const auto feats_t = forward(f.extractor, take_rows(target_features, target_batches.next()));
      const std::size_t ns = feats_s.output.rows();
      const std::size_t nt = feats_t.output.rows();
      Matrix upstream_t(nt, feats_t.output.cols());

      if (cfg.method == DaMethod::dann) {
        const auto dom = forward(f.domain_head, vstack(feats_s.output, feats_t.output));
        std::vector<std::size_t> dom_labels(ns + nt, kSourceDomainLabel);
        std::fill(dom_labels.begin() + static_cast<long>(ns), dom_labels.end(), kTargetDomainLabel);
        const auto dom_ce = softmax_cross_entropy(dom.output, dom_labels);
        const auto g_dom = backward(f.domain_head, dom.cache, dom_ce.grad);
        const Matrix reversed = grad_reversal(g_dom.input_grad, lambda);
        for (std::size_t r = 0; r < ns; ++r) {
          for (std::size_t c = 0; c < upstream_s.cols(); ++c) upstream_s(r, c) += reversed(r, c);
        }
        for (std::size_t r = 0; r < nt; ++r) {
          for (std::size_t c = 0; c < upstream_t.cols(); ++c) upstream_t(r, c) = reversed(ns + r, c);
        }
        adam_step(f.domain_head, g_dom, opt.domain_head);
      } else if (ns >= 2 && nt >= 2) {
        const std::vector<double> bandwidths =
            cfg.mmd_bandwidths.empty()
                ? median_heuristic_bandwidths(feats_s.output, feats_t.output, cfg.bandwidth_scales)
                : cfg.mmd_bandwidths;
        const auto mmd = mmd2_with_grad(feats_s.output, feats_t.output, bandwidths);
        for (std::size_t i = 0; i < upstream_s.size(); ++i) {
          upstream_s.data()[i] += cfg.mmd_weight * mmd.grad_a.data()[i];
        }
        for (std::size_t i = 0; i < upstream_t.size(); ++i) {
          upstream_t.data()[i] = cfg.mmd_weight * mmd.grad_b.data()[i];
        }
      }

      auto g_ext = backward(f.extractor, feats_s.cache, upstream_s);
      accumulate(g_ext, backward(f.extractor, feats_t.cache, upstream_t));
      adam_step(f.label_head, g_head, opt.label_head);
      adam_step(f.extractor, g_ext, opt.extractor);
    }
  }
  return f;
}

/// Exact argmax accuracy with per-class counts.
struct Accuracy {
  double accuracy = 0.0;
  std::vector<std::size_t> correct;  // per class
  std::vector<std::size_t> total;    // per class

  friend bool operator==(const Accuracy&, const Accuracy&) = default;
};

inline Accuracy accuracy_from_predictions(std::span<const std::size_t> predicted, std::span<const std::size_t> labels,
                                          std::size_t class_count) {
  if (labels.empty()) throw InputError("cannot evaluate on an empty dataset");
  Accuracy a{0.0, std::vector<std::size_t>(class_count, 0), std::vector<std::size_t>(class_count, 0)};
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= class_count) throw InputError("label out of range in evaluation");
    ++a.total[labels[i]];
    if (predicted[i] == labels[i]) {
      ++a.correct[labels[i]];
      ++hits;
    }
  }
  a.accuracy = static_cast<double>(hits) / static_cast<double>(labels.size());
  return a;
}

inline Accuracy evaluate(const SourceClassifier& f, const LabeledDataset& d) {
  if (d.size() == 0) throw InputError("cannot evaluate on an empty dataset");
  detail::check_input_dim(f, d.dim());
  const auto pred = argmax_rows(classify_logits(f, d.features));
  return accuracy_from_predictions(pred, d.labels, d.class_count);
}

struct EvalReport {
  Accuracy source;
  Accuracy target;

  double accuracy_source() const noexcept { return source.accuracy; }
  double accuracy_target() const noexcept { return target.accuracy; }

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct VariantResult {
  SourceClassifier model;
  EvalReport after_pretrain;
  EvalReport after_adapt;
  DivergenceReport divergence;  // labeled domain vs target
};

/// Step 1 and 2 of the pipeline: domain classifier, attack, and both divergence estimates.
struct AdversarialDomain {
  LabeledDataset data;
  Mlp domain_classifier;
  DivergenceReport source_vs_target;
  DivergenceReport adversarial_vs_target;
  double success_before = 0.0;  // fraction of S classified as target by the domain classifier
  double success_after = 0.0;   // same for A
};

inline AdversarialDomain build_adversarial_domain(const LabeledDataset& s, const LabeledDataset& t,
                                                  const HdhConfig& hdh, const AttackConfig& atk) {
  if (auto v = violations(atk, "attack", true); !v.empty()) throw ValidationError(std::move(v));
  if (s.dim() != t.dim()) {
    throw ConfigError("source has " + std::to_string(s.dim()) + " features, target has " + std::to_string(t.dim()));
  }
  AdversarialDomain out;
  auto est = estimate_divergence(s, t, hdh);
  out.source_vs_target = est.report;
  out.domain_classifier = std::move(est.classifier);
  if (atk.steps == 0) {
    out.data = s;
    out.data.domain = DomainTag::adversarial;
  } else {
    out.data = generate_adversarial_domain(out.domain_classifier, s, atk);
  }
  out.adversarial_vs_target = estimate_divergence(out.data, t, hdh).report;
  out.success_before = attack_success_rate(out.domain_classifier, s.features, atk.target_domain_label);
  out.success_after = attack_success_rate(out.domain_classifier, out.data.features, atk.target_domain_label);
  return out;
}

/// Steps 3 and 4 for one choice of labeled domain. `init_seed` fixes the
/// initial classifier so variants differ only in their data.
inline VariantResult run_variant(const LabeledDataset& labeled, const LabeledDataset& s, const LabeledDataset& t,
                                 const DivergenceReport& divergence, const PretrainConfig& pre, const DAConfig& da,
                                 std::uint64_t init_seed) {
  VariantResult r;
  r.divergence = divergence;
  const std::size_t classes = std::max({labeled.class_count, s.class_count, t.class_count});
  r.model = pretrain(make_source_classifier(labeled.dim(), classes, init_seed), labeled, pre);
  r.after_pretrain = {evaluate(r.model, s), evaluate(r.model, t)};
  r.model = adapt(std::move(r.model), labeled, t.features, da);
  r.after_adapt = {evaluate(r.model, s), evaluate(r.model, t)};
  return r;
}

struct PipelineResult {
  VariantResult hda;       // labeled domain = adversarial domain
  VariantResult baseline;  // labeled domain = source
  AdversarialDomain adversarial;
};

/// Full pipeline plus the control run with the real source as labeled domain.
/// Target labels are read only by evaluation.
inline PipelineResult hda_pipeline(const LabeledDataset& s, const LabeledDataset& t, const HdhConfig& hdh,
                                   const AttackConfig& atk, const PretrainConfig& pre, const DAConfig& da) {
  PipelineResult out;
  out.adversarial = build_adversarial_domain(s, t, hdh, atk);
  const std::uint64_t init_seed = derive_seed(pre.seed, 99);
  out.hda = run_variant(out.adversarial.data, s, t, out.adversarial.adversarial_vs_target, pre, da, init_seed);
  out.baseline = run_variant(s, s, t, out.adversarial.source_vs_target, pre, da, init_seed);
  return out;
}

}  // namespace hda
