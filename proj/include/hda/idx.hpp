#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "hda/binary_io.hpp"
#include "hda/dataset.hpp"
#include "hda/error.hpp"
#include "hda/matrix.hpp"

// IDX: big-endian u32 magic (0x00000801 labels, 0x00000803 images), then one
// big-endian u32 per dimension, then raw unsigned bytes.
namespace hda {

inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

struct IdxImages {
  Matrix pixels;  // N x (height * width), scaled to [0,1]
  std::size_t height = 0;
  std::size_t width = 0;
};

using IdxData = std::variant<IdxImages, std::vector<std::size_t>>;

namespace detail {

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (static_cast<std::uint32_t>(b[at]) << 24) | (static_cast<std::uint32_t>(b[at + 1]) << 16) |
         (static_cast<std::uint32_t>(b[at + 2]) << 8) | static_cast<std::uint32_t>(b[at + 3]);
}

inline void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

inline std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

inline void require_bytes(std::size_t expected, std::size_t actual, const std::string& what) {
  if (actual < expected) {
    throw FormatError("truncated IDX " + what + ": expected " + std::to_string(expected) +
                      " bytes, found " + std::to_string(actual));
  }
}

}  // namespace detail

inline IdxData parse_idx(const std::vector<std::uint8_t>& bytes) {
  detail::require_bytes(4, bytes.size(), "header");
  const std::uint32_t magic = detail::read_be32(bytes, 0);
  if (magic == kIdxLabelMagic) {
    detail::require_bytes(8, bytes.size(), "header");
    const std::size_t n = detail::read_be32(bytes, 4);
    detail::require_bytes(8 + n, bytes.size(), "payload");
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = bytes[8 + i];
    return labels;
  }
  if (magic == kIdxImageMagic) {
    detail::require_bytes(16, bytes.size(), "header");
    const std::size_t n = detail::read_be32(bytes, 4);
    const std::size_t h = detail::read_be32(bytes, 8);
    const std::size_t w = detail::read_be32(bytes, 12);
    const std::size_t payload = n * h * w;
    detail::require_bytes(16 + payload, bytes.size(), "payload");
    IdxImages img{Matrix(n, h * w), h, w};
    for (std::size_t i = 0; i < payload; ++i) img.pixels.data()[i] = bytes[16 + i] / 255.0;
    return img;
  }
  throw FormatError("bad IDX magic " + detail::hex32(magic) + " (expected " +
                    detail::hex32(kIdxLabelMagic) + " or " + detail::hex32(kIdxImageMagic) + ")");
}

inline IdxData load_idx(const std::filesystem::path& path) { return parse_idx(io::read_file(path)); }

inline IdxImages load_idx_images(const std::filesystem::path& path) {
  auto data = load_idx(path);
  if (auto* img = std::get_if<IdxImages>(&data)) return std::move(*img);
  throw FormatError("'" + path.string() + "' holds labels, expected images");
}

inline std::vector<std::size_t> load_idx_labels(const std::filesystem::path& path) {
  auto data = load_idx(path);
  if (auto* labels = std::get_if<std::vector<std::size_t>>(&data)) return std::move(*labels);
  throw FormatError("'" + path.string() + "' holds images, expected labels");
}

/// Values are rounded to the nearest byte level; values already on the k/255
/// grid round-trip exactly.
inline std::vector<std::uint8_t> encode_idx_images(const Matrix& pixels, std::size_t height, std::size_t width) {
  if (height * width != pixels.cols()) throw ConfigError("image geometry does not match matrix width");
  std::vector<std::uint8_t> b;
  b.reserve(16 + pixels.size());
  detail::put_be32(b, kIdxImageMagic);
  detail::put_be32(b, static_cast<std::uint32_t>(pixels.rows()));
  detail::put_be32(b, static_cast<std::uint32_t>(height));
  detail::put_be32(b, static_cast<std::uint32_t>(width));
  for (double v : pixels.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("pixel value outside [0,1]");
    b.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
  }
  return b;
}

inline std::vector<std::uint8_t> encode_idx_labels(const std::vector<std::size_t>& labels) {
  std::vector<std::uint8_t> b;
  detail::put_be32(b, kIdxLabelMagic);
  detail::put_be32(b, static_cast<std::uint32_t>(labels.size()));
  for (std::size_t l : labels) {
    if (l > 255) throw InputError("IDX labels must fit in one byte");
    b.push_back(static_cast<std::uint8_t>(l));
  }
  return b;
}

inline void write_idx_images(const std::filesystem::path& path, const Matrix& pixels, std::size_t height,
                             std::size_t width) {
  io::write_file(path, encode_idx_images(pixels, height, width));
}

inline void write_idx_labels(const std::filesystem::path& path, const std::vector<std::size_t>& labels) {
  io::write_file(path, encode_idx_labels(labels));
}

/// Pairs an image file with its label file. `class_count` 0 means max label + 1.
inline LabeledDataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                                       DomainTag tag, std::size_t class_count = 0) {
  auto img = load_idx_images(images);
  auto lab = load_idx_labels(labels);
  if (lab.size() != img.pixels.rows()) {
    throw FormatError("image file has " + std::to_string(img.pixels.rows()) + " rows, label file has " +
                      std::to_string(lab.size()));
  }
  if (class_count == 0) {
    for (std::size_t l : lab) class_count = std::max(class_count, l + 1);
  }
  LabeledDataset d{std::move(img.pixels), std::move(lab), tag, class_count};
  validate(d);
  return d;
}

}  // namespace hda
