#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "hda/error.hpp"
#include "hda/matrix.hpp"

namespace hda {

struct MmdResult {
  double value = 0.0;
  Matrix grad_a;  // d value / d a
  Matrix grad_b;  // d value / d b
};

namespace detail {

inline double squared_distance(std::span<const double> u, std::span<const double> v) {
  double acc = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double d = u[k] - v[k];
    acc += d * d;
  }
  return acc;
}

inline void check_mmd_inputs(const Matrix& a, const Matrix& b, std::span<const double> bandwidths) {
  if (a.rows() < 2 || b.rows() < 2) {
    throw InputError("mmd2 needs at least 2 rows per set, got " + std::to_string(a.rows()) + " and " +
                     std::to_string(b.rows()));
  }
  if (a.cols() != b.cols()) throw ConfigError("mmd2 sets differ in width: " + shape_str(a) + " vs " + shape_str(b));
  if (bandwidths.empty()) throw ConfigError("mmd2 needs at least one bandwidth");
  for (double s : bandwidths) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("mmd2 bandwidths must be positive and finite");
  }
}

// Adds the gradient of w * sum_{pairs} k(x_i, y_j) w.r.t. x_i (and y_j when
// `both`) for every Gaussian bandwidth.
inline double kernel_block(const Matrix& x, const Matrix& y, std::span<const double> bandwidths, bool skip_diagonal,
                           double w, Matrix* gx, Matrix* gy) {
  double total = 0.0;
  const std::size_t dim = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto xi = x.row(i);
    for (std::size_t j = 0; j < y.rows(); ++j) {
      if (skip_diagonal && i == j) continue;
      const auto yj = y.row(j);
      const double d2 = squared_distance(xi, yj);
      double k_sum = 0.0;
      double dk_coeff = 0.0;  // sum_s k_s / s^2
      for (double s : bandwidths) {
        const double inv = 1.0 / (s * s);
        const double k = std::exp(-0.5 * d2 * inv);
        k_sum += k;
        dk_coeff += k * inv;
      }
      total += k_sum;
      if (gx != nullptr) {
        // d k / d x_i = -k (x_i - y_j) / s^2
        const double c = -w * dk_coeff;
        for (std::size_t c_idx = 0; c_idx < dim; ++c_idx) {
          const double diff = xi[c_idx] - yj[c_idx];
          (*gx)(i, c_idx) += c * diff;
          if (gy != nullptr) (*gy)(j, c_idx) -= c * diff;
        }
      }
    }
  }
  return total;
}

}  // namespace detail

/// Unbiased multi-kernel MMD^2 with Gaussian kernels exp(-|u-v|^2 / (2 s^2)),
/// summed over bandwidths, with gradients for both sets.
inline MmdResult mmd2_with_grad(const Matrix& a, const Matrix& b, std::span<const double> bandwidths) {
  detail::check_mmd_inputs(a, b, bandwidths);
  const double m = static_cast<double>(a.rows());
  const double n = static_cast<double>(b.rows());
  const double w_aa = 1.0 / (m * (m - 1.0));
  const double w_bb = 1.0 / (n * (n - 1.0));
  const double w_ab = -2.0 / (m * n);

  MmdResult r{0.0, Matrix(a.rows(), a.cols()), Matrix(b.rows(), b.cols())};
  // The within-set sums visit each unordered pair twice; gx accumulates only
  // the first argument's derivative, which by symmetry covers both visits.
  const double s_aa = detail::kernel_block(a, a, bandwidths, true, w_aa * 2.0, &r.grad_a, nullptr);
  const double s_bb = detail::kernel_block(b, b, bandwidths, true, w_bb * 2.0, &r.grad_b, nullptr);
  const double s_ab = detail::kernel_block(a, b, bandwidths, false, w_ab, &r.grad_a, &r.grad_b);
  r.value = w_aa * s_aa + w_bb * s_bb + w_ab * s_ab;
  return r;
}

inline double mmd2(const Matrix& a, const Matrix& b, std::span<const double> bandwidths) {
  detail::check_mmd_inputs(a, b, bandwidths);
  const double m = static_cast<double>(a.rows());
  const double n = static_cast<double>(b.rows());
  const double s_aa = detail::kernel_block(a, a, bandwidths, true, 0.0, nullptr, nullptr);
  const double s_bb = detail::kernel_block(b, b, bandwidths, true, 0.0, nullptr, nullptr);
  const double s_ab = detail::kernel_block(a, b, bandwidths, false, 0.0, nullptr, nullptr);
  return s_aa / (m * (m - 1.0)) + s_bb / (n * (n - 1.0)) - 2.0 * s_ab / (m * n);
}

/// Median of pairwise Euclidean distances over the pooled rows of a and b.
/// Falls back to 1 when all rows coincide.
inline double median_pairwise_distance(const Matrix& a, const Matrix& b) {
  const Matrix pooled = vstack(a, b);
  std::vector<double> d;
  d.reserve(pooled.rows() * (pooled.rows() - 1) / 2);
  for (std::size_t i = 0; i < pooled.rows(); ++i) {
    for (std::size_t j = i + 1; j < pooled.rows(); ++j) {
      d.push_back(std::sqrt(detail::squared_distance(pooled.row(i), pooled.row(j))));
    }
  }
  if (d.empty()) return 1.0;
  const auto mid = d.begin() + static_cast<long>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double med = *mid;
  if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), mid));
  return med > 0.0 ? med : 1.0;
}

/// Median heuristic bandwidths: median distance times each scale.
inline std::vector<double> median_heuristic_bandwidths(const Matrix& a, const Matrix& b,
                                                       std::span<const double> scales) {
  const double med = median_pairwise_distance(a, b);
  std::vector<double> out;
  for (double s : scales) out.push_back(med * s);
  return out;
}

}  // namespace hda
