#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hda/binary_io.hpp"
#include "hda/dataset.hpp"
#include "hda/error.hpp"
#include "hda/mlp.hpp"

// Little-endian binary formats; byte layouts are documented in docs/formats.md.
namespace hda {

inline constexpr char kDatasetMagic[4] = {'H', 'D', 'A', 'D'};
inline constexpr char kModelMagic[4] = {'H', 'D', 'A', 'M'};
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

inline void check_magic(io::Reader& r, const char (&magic)[4], const std::string& what) {
  char got[4];
  r.bytes(got, 4);
  if (std::memcmp(got, magic, 4) != 0) throw FormatError("not a " + what + " file (bad magic)");
}

inline void check_version(std::uint32_t got, std::uint32_t want, const std::string& what) {
  if (got != want) {
    throw FormatError(what + " format version " + std::to_string(got) + " is not supported (expected " +
                      std::to_string(want) + ")");
  }
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_dataset(const LabeledDataset& d) {
  io::Writer w;
  w.bytes(kDatasetMagic, 4);
  w.u32(kDatasetVersion);
  w.u64(d.size());
  w.u64(d.dim());
  w.u64(d.class_count);
  w.u8(static_cast<std::uint8_t>(d.domain));
  w.zeros(7);
  for (double v : d.features.data()) w.f64(v);
  for (std::size_t l : d.labels) w.u32(static_cast<std::uint32_t>(l));
  return w.buffer();
}

inline LabeledDataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  io::Reader r(bytes, "dataset");
  detail::check_magic(r, kDatasetMagic, "dataset");
  detail::check_version(r.u32(), kDatasetVersion, "dataset");
  const std::uint64_t n = r.u64();
  const std::uint64_t dim = r.u64();
  const std::uint64_t classes = r.u64();
  const std::uint8_t tag = r.u8();
  r.skip(7);
  if (tag > static_cast<std::uint8_t>(DomainTag::adversarial)) {
    throw FormatError("dataset has unknown domain tag " + std::to_string(tag));
  }
  r.need(n * dim * 8 + n * 4);
  LabeledDataset d{Matrix(n, dim), std::vector<std::size_t>(n), static_cast<DomainTag>(tag), classes};
  for (double& v : d.features.data()) v = r.f64();
  for (auto& l : d.labels) l = r.u32();
  if (r.remaining() != 0) throw FormatError("dataset file has " + std::to_string(r.remaining()) + " trailing bytes");
  return d;
}

inline void save_dataset(const LabeledDataset& d, const std::filesystem::path& path) {
  io::write_file(path, encode_dataset(d));
}

inline LabeledDataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file(path));
}

/// A model file holds an ordered list of networks (one for a domain
/// classifier; extractor, label head, domain head for a source classifier).
inline std::vector<std::uint8_t> encode_networks(const std::vector<Mlp>& nets) {
  io::Writer w;
  w.bytes(kModelMagic, 4);
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(nets.size()));
  for (const auto& net : nets) {
    w.u32(static_cast<std::uint32_t>(net.layers.size()));
    for (const auto& l : net.layers) {
      w.u64(l.out_dim());
      w.u64(l.in_dim());
      w.u8(static_cast<std::uint8_t>(l.activation));
      for (double v : l.weight.data()) w.f64(v);
      for (double v : l.bias) w.f64(v);
    }
  }
  return w.buffer();
}

inline std::vector<Mlp> decode_networks(const std::vector<std::uint8_t>& bytes) {
  io::Reader r(bytes, "model");
  detail::check_magic(r, kModelMagic, "model");
  detail::check_version(r.u32(), kModelVersion, "model");
  const std::uint32_t count = r.u32();
  std::vector<Mlp> nets(count);
  for (auto& net : nets) {
    const std::uint32_t depth = r.u32();
    for (std::uint32_t l = 0; l < depth; ++l) {
      const std::uint64_t out = r.u64();
      const std::uint64_t in = r.u64();
      const std::uint8_t act = r.u8();
      if (act > static_cast<std::uint8_t>(Activation::relu)) {
        throw FormatError("unknown activation code " + std::to_string(act));
      }
      r.need((out * in + out) * 8);
      Layer layer{Matrix(out, in), std::vector<double>(out), static_cast<Activation>(act)};
      for (double& v : layer.weight.data()) v = r.f64();
      for (double& v : layer.bias) v = r.f64();
      net.layers.push_back(std::move(layer));
    }
    if (!net.layers.empty()) validate(net);
  }
  if (r.remaining() != 0) throw FormatError("model file has " + std::to_string(r.remaining()) + " trailing bytes");
  return nets;
}

inline void save_networks(const std::vector<Mlp>& nets, const std::filesystem::path& path) {
  io::write_file(path, encode_networks(nets));
}

inline std::vector<Mlp> load_networks(const std::filesystem::path& path) {
  return decode_networks(io::read_file(path));
}

}  // namespace hda
