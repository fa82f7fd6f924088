#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sample/tensor.hpp"

namespace sample {

// Flat binary checkpoint: magic "SMPL1", u32 tensor count, then per tensor
// u32 name length, name bytes, u32 rank, u32 dims, raw little-endian 32-bit
// reals. Round-trips are bit-exact.

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace detail

constexpr char kCheckpointMagic[5] = {'S', 'M', 'P', 'L', '1'};

inline void save_checkpoint(const std::string& path, const NamedParams& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u32(out, 2);
    detail::write_u32(out, static_cast<std::uint32_t>(t.rows()));
    detail::write_u32(out, static_cast<std::uint32_t>(t.cols()));
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline NamedParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, sizeof(magic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  const std::uint32_t count = detail::read_u32(in);
  NamedParams out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = detail::read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t rank = detail::read_u32(in);
    if (rank != 2) throw std::runtime_error("checkpoint: unsupported rank in " + path);
    const std::uint32_t rows = detail::read_u32(in);
    const std::uint32_t cols = detail::read_u32(in);
    std::vector<float> data(static_cast<std::size_t>(rows) * cols);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated tensor data in " + path);
    out.emplace_back(std::move(name),
                     Tensor::from(static_cast<int>(rows), static_cast<int>(cols), std::move(data)));
  }
  return out;
}

// Copies checkpoint values into an existing parameter set. Names and shapes
// must match exactly; extra or missing tensors are an error.
inline void load_checkpoint_into(const std::string& path, NamedParams& params) {
  NamedParams loaded = load_checkpoint(path);
  if (loaded.size() != params.size()) {
    throw std::runtime_error("checkpoint: " + path + " holds " +
                             std::to_string(loaded.size()) + " tensors, expected " +
                             std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, dst] = params[i];
    auto& [loaded_name, src] = loaded[i];
    if (name != loaded_name) {
      throw std::runtime_error("checkpoint: tensor name mismatch, expected " + name +
                               ", found " + loaded_name);
    }
    if (!dst.same_shape(src)) {
      throw std::runtime_error("checkpoint: shape mismatch for " + name + ", expected " +
                               dst.shape() + ", found " + src.shape());
    }
    dst.data() = src.data();
  }
}

}  // namespace sample
