// Binary weight checkpoints.
//
//   magic "DSCKPT01" (8 bytes)
//   u32 tensor count
//   per tensor: u32 name length, name bytes, u32 rank, u32 dims[rank],
//               float32 payload
// All integers and floats are little-endian.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dscore/gradnet/tensor.hpp"

namespace dscore::nn {

inline constexpr char kCheckpointMagic[8] = {'D', 'S', 'C', 'K', 'P', 'T', '0', '1'};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

inline std::uint32_t get_u32(std::string_view in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw CheckpointError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    detail::put_u32(out, static_cast<std::uint32_t>(nt.name.size()));
    out += nt.name;
    detail::put_u32(out, static_cast<std::uint32_t>(nt.tensor.shape.size()));
    for (int d : nt.tensor.shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (float f : nt.tensor.data) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline std::vector<NamedTensor> decode_checkpoint(std::string_view in) {
  if (in.size() < sizeof kCheckpointMagic || std::memcmp(in.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
    throw CheckpointError("not a checkpoint (bad magic)");
  std::size_t pos = sizeof kCheckpointMagic;
  const std::uint32_t count = detail::get_u32(in, pos);
  std::vector<NamedTensor> out;
  for (std::uint32_t t = 0; t < count; ++t) {
    NamedTensor nt;
    const std::uint32_t len = detail::get_u32(in, pos);
    if (pos + len > in.size()) throw CheckpointError("checkpoint truncated in tensor name");
    nt.name.assign(in.substr(pos, len));
    pos += len;
    const std::uint32_t rank = detail::get_u32(in, pos);
    if (rank > 8) throw CheckpointError("tensor '" + nt.name + "' has implausible rank");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<int>(detail::get_u32(in, pos)));
    nt.tensor = Tensor<float>(shape);
    for (auto& f : nt.tensor.data) f = std::bit_cast<float>(detail::get_u32(in, pos));
    out.push_back(std::move(nt));
  }
  if (pos != in.size()) throw CheckpointError("trailing bytes after checkpoint");
  return out;
}

inline void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  const std::string bytes = encode_checkpoint(tensors);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace dscore::nn
