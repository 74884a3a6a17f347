#pragma once

// Parameter checkpoint file, version 1, all integers little-endian:
//
//   "FFCK"  u32 version  u32 count
//   count x { u32 name_len, name bytes, u32 rank, rank x u64 dim,
//             numel x f32 value }

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "flowformer/error.hpp"
#include "flowformer/nn/layers.hpp"

namespace flowformer::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    bytes[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <class U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size()))
    throw ParseError("checkpoint truncated");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= std::uint64_t(bytes[i]) << (8 * i);
  return static_cast<U>(v);
}

}  // namespace detail

template <class T>
void save_checkpoint(const ParameterList<T>& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write("FFCK", 4);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) detail::put_le<std::uint64_t>(out, d);
    for (T v : p.tensor.data())
      detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  if (!out) throw IoError("write failed for checkpoint '" + path + "'");
}

/// Loads values into `params` by name; every parameter must be present with
/// an identical shape.
template <class T>
void load_checkpoint(ParameterList<T>& params, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "FFCK", 4) != 0)
    throw ParseError("not a checkpoint file: '" + path + "'");
  if (detail::get_le<std::uint32_t>(in) != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version");
  const auto count = detail::get_le<std::uint32_t>(in);

  std::map<std::string, std::pair<Shape, std::vector<float>>> stored;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = detail::get_le<std::uint32_t>(in);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw ParseError("checkpoint truncated");
    Shape shape(detail::get_le<std::uint32_t>(in));
    for (auto& d : shape) d = detail::get_le<std::uint64_t>(in);
    std::vector<float> values(numel(shape));
    for (auto& v : values) v = std::bit_cast<float>(detail::get_le<std::uint32_t>(in));
    stored.emplace(std::move(name), std::make_pair(std::move(shape), std::move(values)));
  }
  for (auto& p : params) {
    auto it = stored.find(p.name);
    if (it == stored.end()) throw ValidationError("checkpoint lacks parameter '" + p.name + "'");
    if (it->second.first != p.tensor.shape())
      throw ValidationError("checkpoint shape mismatch for '" + p.name + "'");
    auto dst = p.tensor.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second.second[i]);
  }
}

}  // namespace flowformer::nn
