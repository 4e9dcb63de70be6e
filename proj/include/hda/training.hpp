#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hda/adam.hpp"
#include "hda/dataset.hpp"
#include "hda/mlp.hpp"

namespace hda {

/// One Adam step of softmax cross-entropy on a mini-batch. Returns the batch loss.
inline double train_step(Mlp& net, AdamState& opt, const Matrix& x, std::span<const std::size_t> labels) {
  auto fwd = forward(net, x);
  auto ce = softmax_cross_entropy(fwd.output, labels);
  adam_step(net, backward(net, fwd.cache, ce.grad), opt);
  return ce.loss;
}

struct TrainOptions {
  std::size_t epochs = 10;
  double learning_rate = 0.01;
  std::size_t batch_size = kDefaultBatchSize;
  std::uint64_t seed = 0;
};

/// Plain supervised training; used for probes and as the shared loop shape.
inline void train_classifier(Mlp& net, const Matrix& x, std::span<const std::size_t> labels,
                             const TrainOptions& opt) {
  AdamState adam = make_adam(net, opt.learning_rate);
  BatchIterator batches(x.rows(), opt.batch_size, opt.seed);
  std::vector<std::size_t> yb;
  for (std::size_t e = 0; e < opt.epochs; ++e) {
    for (const auto& idx : batches.next()) {
      yb.clear();
      for (std::size_t i : idx) yb.push_back(labels[i]);
      train_step(net, adam, take_rows(x, idx), yb);
    }
  }
}

/// Fraction of rows whose argmax prediction equals the label.
inline double accuracy(const Mlp& net, const Matrix& x, std::span<const std::size_t> labels) {
  if (x.rows() == 0) throw InputError("accuracy of an empty set");
  const auto pred = argmax_rows(predict_logits(net, x));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace hda
