#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hda/error.hpp"
#include "hda/matrix.hpp"
#include "hda/random.hpp"

namespace hda {

enum class DomainTag : std::uint8_t { source = 0, target = 1, adversarial = 2 };

inline std::string_view to_string(DomainTag t) {
  switch (t) {
    case DomainTag::source: return "source";
    case DomainTag::target: return "target";
    case DomainTag::adversarial: return "adversarial";
  }
  return "unknown";
}

inline DomainTag domain_tag_from_string(std::string_view s) {
  if (s == "source") return DomainTag::source;
  if (s == "target") return DomainTag::target;
  if (s == "adversarial") return DomainTag::adversarial;
  throw ConfigError("unknown domain tag '" + std::string(s) + "'");
}

/// Features in [0,1]^{N x D} with class labels in [0, class_count).
struct LabeledDataset {
  Matrix features;
  std::vector<std::size_t> labels;
  DomainTag domain = DomainTag::source;
  std::size_t class_count = 0;

  std::size_t size() const noexcept { return features.rows(); }
  std::size_t dim() const noexcept { return features.cols(); }

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

inline void validate(const LabeledDataset& d) {
  if (d.size() == 0) throw InputError("dataset is empty");
  if (d.labels.size() != d.size()) {
    throw InputError("dataset has " + std::to_string(d.size()) + " rows but " +
                     std::to_string(d.labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < d.labels.size(); ++i) {
    if (d.labels[i] >= d.class_count) {
      throw InputError("label " + std::to_string(d.labels[i]) + " at row " + std::to_string(i) +
                       " out of range [0, " + std::to_string(d.class_count) + ")");
    }
  }
  for (double v : d.features.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("feature value outside [0,1]");
  }
}

inline LabeledDataset subset(const LabeledDataset& d, std::span<const std::size_t> idx) {
  LabeledDataset out{take_rows(d.features, idx), {}, d.domain, d.class_count};
  out.labels.reserve(idx.size());
  for (std::size_t i : idx) out.labels.push_back(d.labels[i]);
  return out;
}

/// Seeded split into (first `train_fraction` of a permutation, remainder).
inline std::pair<LabeledDataset, LabeledDataset> split_holdout(const LabeledDataset& d,
                                                               double train_fraction,
                                                               std::uint64_t seed) {
  if (d.size() < 2) throw InputError("need at least 2 rows to split");
  const auto perm = permutation(d.size(), seed);
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(d.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, d.size() - 1);
  std::span<const std::size_t> all(perm);
  return {subset(d, all.first(n_train)), subset(d, all.subspan(n_train))};
}

inline void clip_unit(Matrix& m) {
  for (double& v : m.data()) v = std::clamp(v, 0.0, 1.0);
}

// Two-moons geometry: outer arc (cos t, sin t), inner arc (1 - cos t, 0.5 - sin t),
// t in [0, pi], mapped into the unit square by a fixed affine map that leaves
// room for rotations about the centroid.
inline constexpr double kMoonsCenterX = 0.5;
inline constexpr double kMoonsCenterY = 0.25;
inline constexpr double kMoonsScale = 3.5;

inline double moons_to_unit_x(double x) { return (x - kMoonsCenterX) / kMoonsScale + 0.5; }
inline double moons_to_unit_y(double y) { return (y - kMoonsCenterY) / kMoonsScale + 0.5; }

/// Two interleaved half circles; the first n/2 rows are class 0 (outer arc).
/// `noise_sigma` is in the arcs' native units, before mapping to [0,1]^2.
inline LabeledDataset gen_two_moons(std::size_t n, double noise_sigma, std::uint64_t seed) {
  if (n < 2) throw InputError("two moons needs n >= 2, got " + std::to_string(n));
  if (!(noise_sigma >= 0.0)) throw InputError("noise sigma must be >= 0");
  const std::size_t n_outer = n / 2;
  const std::size_t n_inner = n - n_outer;
  LabeledDataset d{Matrix(n, 2), std::vector<std::size_t>(n), DomainTag::source, 2};
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto arc_param = [](std::size_t i, std::size_t count) {
    return count == 1 ? 0.0 : std::numbers::pi * static_cast<double>(i) / static_cast<double>(count - 1);
  };
  for (std::size_t i = 0; i < n; ++i) {
    double x, y;
    if (i < n_outer) {
      const double t = arc_param(i, n_outer);
      x = std::cos(t);
      y = std::sin(t);
      d.labels[i] = 0;
    } else {
      const double t = arc_param(i - n_outer, n_inner);
      x = 1.0 - std::cos(t);
      y = 0.5 - std::sin(t);
      d.labels[i] = 1;
    }
    if (noise_sigma > 0.0) {
      x += noise_sigma * noise(rng);
      y += noise_sigma * noise(rng);
    }
    d.features(i, 0) = moons_to_unit_x(x);
    d.features(i, 1) = moons_to_unit_y(y);
  }
  clip_unit(d.features);
  return d;
}

/// One class per center, n split as evenly as possible (earlier classes get the remainder).
inline LabeledDataset gen_gaussian_blobs(std::size_t n, const std::vector<std::vector<double>>& centers,
                                         double sigma, std::uint64_t seed) {
  if (centers.size() < 2) throw InputError("gaussian blobs need at least 2 centers");
  if (!(sigma >= 0.0)) throw InputError("sigma must be >= 0, got " + std::to_string(sigma));
  if (n < centers.size()) throw InputError("need at least one sample per center");
  const std::size_t dim = centers.front().size();
  if (dim == 0) throw InputError("centers must have at least one coordinate");
  for (const auto& c : centers) {
    if (c.size() != dim) throw InputError("centers have differing dimensions");
  }
  const std::size_t k = centers.size();
  LabeledDataset d{Matrix(n, dim), std::vector<std::size_t>(n), DomainTag::source, k};
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::size_t row = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t count = n / k + (c < n % k ? 1 : 0);
    for (std::size_t i = 0; i < count; ++i, ++row) {
      for (std::size_t j = 0; j < dim; ++j) d.features(row, j) = centers[c][j] + sigma * noise(rng);
      d.labels[row] = c;
    }
  }
  clip_unit(d.features);
  return d;
}

/// Parametric covariate shift used to build target domains.
struct ShiftSpec {
  double rotation = 0.0;            // radians
  std::vector<double> translation;  // empty, length D, or length 2 (pixels) for images
  double noise_sigma = 0.0;
  std::vector<double> channel_bias;  // empty or length D
  std::uint64_t seed = 0;
  // Nonzero when features are an image_height x image_width raster; rotation
  // and translation then act on pixel geometry.
  std::size_t image_height = 0;
  std::size_t image_width = 0;

  friend bool operator==(const ShiftSpec&, const ShiftSpec&) = default;
};

namespace detail {

inline double bilinear(std::span<const double> img, std::size_t h, std::size_t w, double r, double c) {
  const double r0f = std::floor(r), c0f = std::floor(c);
  const double fr = r - r0f, fc = c - c0f;
  auto px = [&](double rr, double cc) {
    if (rr < 0.0 || cc < 0.0 || rr > static_cast<double>(h - 1) || cc > static_cast<double>(w - 1)) return 0.0;
    return img[static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(cc)];
  };
  // Snap coordinates that are integers up to rounding so exact pixel moves stay exact.
  if (std::abs(fr) < 1e-12 || std::abs(fr - 1.0) < 1e-12) {
    const double rr = std::round(r);
    if (std::abs(fc) < 1e-12 || std::abs(fc - 1.0) < 1e-12) return px(rr, std::round(c));
    return (1.0 - fc) * px(rr, c0f) + fc * px(rr, c0f + 1.0);
  }
  if (std::abs(fc) < 1e-12 || std::abs(fc - 1.0) < 1e-12) {
    const double cc = std::round(c);
    return (1.0 - fr) * px(r0f, cc) + fr * px(r0f + 1.0, cc);
  }
  return (1.0 - fr) * ((1.0 - fc) * px(r0f, c0f) + fc * px(r0f, c0f + 1.0)) +
         fr * ((1.0 - fc) * px(r0f + 1.0, c0f) + fc * px(r0f + 1.0, c0f + 1.0));
}

inline void warp_images(Matrix& m, std::size_t h, std::size_t w, double angle, double dx, double dy) {
  const double cr = (static_cast<double>(h) - 1.0) / 2.0;
  const double cc = (static_cast<double>(w) - 1.0) / 2.0;
  const double cs = std::cos(angle), sn = std::sin(angle);
  std::vector<double> src(h * w);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    std::copy(row.begin(), row.end(), src.begin());
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        // Inverse map: destination pixel -> source location.
        const double x = static_cast<double>(c) - cc - dx;
        const double y = static_cast<double>(r) - cr - dy;
        const double sx = cs * x + sn * y + cc;
        const double sy = -sn * x + cs * y + cr;
        row[r * w + c] = bilinear(src, h, w, sy, sx);
      }
    }
  }
}

}  // namespace detail

/// Rotates about the centroid, translates, adds noise and per-feature bias,
/// then clips to [0,1]. Labels and row count are untouched; the result is
/// tagged as the target domain.
inline LabeledDataset apply_shift(const LabeledDataset& d, const ShiftSpec& spec) {
  const std::size_t dim = d.dim();
  const bool image = spec.image_height != 0 || spec.image_width != 0;
  if (image && spec.image_height * spec.image_width != dim) {
    throw ConfigError("image geometry " + std::to_string(spec.image_height) + "x" +
                      std::to_string(spec.image_width) + " does not match " + std::to_string(dim) +
                      " features");
  }
  if (spec.rotation != 0.0 && !image && dim != 2) {
    throw ConfigError("rotation needs 2-d features or declared image geometry, got D=" +
                      std::to_string(dim));
  }
  const bool pixel_translation = image && spec.translation.size() == 2 && dim != 2;
  if (!spec.translation.empty() && spec.translation.size() != dim && !pixel_translation) {
    throw ConfigError("translation has length " + std::to_string(spec.translation.size()) +
                      ", expected " + std::to_string(dim));
  }
  if (!spec.channel_bias.empty() && spec.channel_bias.size() != dim) {
    throw ConfigError("channel bias has length " + std::to_string(spec.channel_bias.size()) +
                      ", expected " + std::to_string(dim));
  }
  if (!(spec.noise_sigma >= 0.0)) throw ConfigError("shift noise sigma must be >= 0");

  LabeledDataset out = d;
  out.domain = DomainTag::target;
  Matrix& x = out.features;

  if (image) {
    const double dx = pixel_translation ? spec.translation[0] : 0.0;
    const double dy = pixel_translation ? spec.translation[1] : 0.0;
    if (spec.rotation != 0.0 || dx != 0.0 || dy != 0.0) {
      detail::warp_images(x, spec.image_height, spec.image_width, spec.rotation, dx, dy);
    }
  } else if (spec.rotation != 0.0) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      mx += x(i, 0);
      my += x(i, 1);
    }
    mx /= static_cast<double>(x.rows());
    my /= static_cast<double>(x.rows());
    const double cs = std::cos(spec.rotation), sn = std::sin(spec.rotation);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const double px = x(i, 0) - mx, py = x(i, 1) - my;
      x(i, 0) = mx + cs * px - sn * py;
      x(i, 1) = my + sn * px + cs * py;
    }
  }
  if (!spec.translation.empty() && !pixel_translation) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < dim; ++j) x(i, j) += spec.translation[j];
    }
  }
  if (spec.noise_sigma > 0.0) {
    Rng rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (double& v : x.data()) v += noise(rng);
  }
  if (!spec.channel_bias.empty()) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < dim; ++j) x(i, j) += spec.channel_bias[j];
    }
  }
  clip_unit(x);
  return out;
}

/// Seeded mini-batch schedule over n rows. Each epoch is a permutation that
/// depends only on (seed, epoch).
class BatchIterator {
 public:
  BatchIterator(std::size_t n, std::size_t batch_size, std::uint64_t seed)
      : n_(n), batch_size_(batch_size), seed_(seed) {
    if (n_ == 0) throw InputError("cannot batch an empty dataset");
    if (batch_size_ == 0) throw ConfigError("batch size must be positive");
  }

  std::vector<std::vector<std::size_t>> epoch_batches(std::size_t epoch) const {
    const auto order = permutation(n_, derive_seed(seed_, epoch));
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n_; start += batch_size_) {
      const std::size_t end = std::min(n_, start + batch_size_);
      batches.emplace_back(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(end));
    }
    return batches;
  }

  std::vector<std::vector<std::size_t>> next() { return epoch_batches(epoch_++); }

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch_size() const noexcept { return batch_size_; }
  std::size_t rows() const noexcept { return n_; }

 private:
  std::size_t n_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
};

inline constexpr std::size_t kDefaultBatchSize = 64;

}  // namespace hda
