#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "spotgcn/common.hpp"
#include "spotgcn/tensor.hpp"

namespace spotgcn {

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

inline constexpr char kCheckpointMagic[8] = {'S', 'P', 'O', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kMaxTensorRank = 8;
inline constexpr std::uint64_t kMaxTensorElems = 1ull << 30;

// Layout: magic "SPOTCKPT", version u32, tensor count u32, then per tensor:
// name length u32 + UTF-8 name, rank u32, dims u32 each, f32 payload (LE).
inline void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  FilePtr f = open_file(path, "wb");
  require(f != nullptr, Errc::io, "cannot open checkpoint for writing: " + path);
  if (std::fwrite(kCheckpointMagic, 1, 8, f.get()) != 8) raise(Errc::io, "short write");
  write_u32le(f.get(), kCheckpointVersion);
  write_u32le(f.get(), static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    require(t.shape.size() <= kMaxTensorRank, Errc::invalid_argument, "tensor rank too large");
    require(shape_numel(t.shape) == t.data.size(), Errc::invalid_argument,
            "tensor payload does not match shape: " + t.name);
    write_u32le(f.get(), static_cast<std::uint32_t>(t.name.size()));
    if (std::fwrite(t.name.data(), 1, t.name.size(), f.get()) != t.name.size())
      raise(Errc::io, "short write");
    write_u32le(f.get(), static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) write_u32le(f.get(), static_cast<std::uint32_t>(d));
    write_f32_block(f.get(), t.data.data(), t.data.size());
  }
}

inline std::vector<NamedTensor> read_checkpoint(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  require(f != nullptr, Errc::io, "cannot open checkpoint: " + path);
  char magic[8];
  if (std::fread(magic, 1, 8, f.get()) != 8 || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    raise(Errc::data, "bad magic in checkpoint: " + path);
  std::uint32_t version = 0, count = 0;
  if (!read_u32le(f.get(), version)) raise(Errc::data, "truncated payload in checkpoint");
  require(version == kCheckpointVersion, Errc::data, "unsupported checkpoint version");
  if (!read_u32le(f.get(), count)) raise(Errc::data, "truncated payload in checkpoint");
  std::vector<NamedTensor> tensors(count);
  for (auto& t : tensors) {
    std::uint32_t name_len = 0, rank = 0;
    if (!read_u32le(f.get(), name_len)) raise(Errc::data, "truncated payload in checkpoint");
    require(name_len <= 4096, Errc::data, "dimension overflow in checkpoint");
    t.name.resize(name_len);
    if (name_len && std::fread(t.name.data(), 1, name_len, f.get()) != name_len)
      raise(Errc::data, "truncated payload in checkpoint");
    if (!read_u32le(f.get(), rank)) raise(Errc::data, "truncated payload in checkpoint");
    require(rank >= 1 && rank <= kMaxTensorRank, Errc::data, "dimension overflow in checkpoint");
    t.shape.resize(rank);
    std::uint64_t numel = 1;
    for (auto& d : t.shape) {
      std::uint32_t v = 0;
      if (!read_u32le(f.get(), v)) raise(Errc::data, "truncated payload in checkpoint");
      d = v;
      numel *= v;
      require(numel <= kMaxTensorElems, Errc::data, "dimension overflow in checkpoint");
    }
    t.data.resize(numel);
    if (!read_f32_block(f.get(), t.data.data(), t.data.size()))
      raise(Errc::data, "truncated payload in checkpoint");
  }
  return tensors;
}

template <typename T>
NamedTensor to_named(const std::string& name, const Tensor<T>& t) {
  NamedTensor out;
  out.name = name;
  out.shape = t.shape();
  out.data.resize(t.size());
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = static_cast<float>(t.values()[i]);
  return out;
}

template <typename T>
void load_named(const NamedTensor& src, Tensor<T>& dst) {
  require(src.shape == dst.shape(), Errc::data, "checkpoint shape mismatch for " + src.name);
  for (std::size_t i = 0; i < src.data.size(); ++i) dst.values()[i] = static_cast<T>(src.data[i]);
}

}  // namespace spotgcn
