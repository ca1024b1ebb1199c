// Named-tensor checkpoint file.
//
// Layout (little-endian): magic "MTXK", u32 version, u64 tensor count,
// then per tensor sorted by name: u32 name length, name bytes, u32 rank,
// rank x u64 dims, then the values as raw 64-bit doubles. Raw byte copies
// make save/load round-trips bit-exact.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "meshtex/common.hpp"
#include "meshtex/rng.hpp"
#include "meshtex/tensor.hpp"

namespace meshtex {

using TensorMap = std::map<std::string, Tensor<double>>;

constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'M', 'T', 'X', 'K'};

inline void save_checkpoint(const std::string& path, const TensorMap& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw DataError("cannot open '" + path + "' for writing");
  }
  os.write(kCheckpointMagic, 4);
  const std::uint32_t version = kCheckpointVersion;
  os.write(reinterpret_cast<const char*>(&version), 4);
  const std::uint64_t count = map.size();
  os.write(reinterpret_cast<const char*>(&count), 8);
  for (const auto& [name, tensor] : map) {
    const std::uint32_t name_len = static_cast<std::uint32_t>(name.size());
    os.write(reinterpret_cast<const char*>(&name_len), 4);
    os.write(name.data(), name_len);
    const std::uint32_t rank = static_cast<std::uint32_t>(tensor.ndim());
    os.write(reinterpret_cast<const char*>(&rank), 4);
    for (int d : tensor.shape) {
      const std::uint64_t dim = static_cast<std::uint64_t>(d);
      os.write(reinterpret_cast<const char*>(&dim), 8);
    }
    os.write(reinterpret_cast<const char*>(tensor.ptr()),
             static_cast<std::streamsize>(tensor.size() * 8));
  }
  if (!os) {
    throw DataError("failed writing checkpoint '" + path + "'");
  }
}

inline TensorMap load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw DataError("cannot open checkpoint '" + path + "'");
  }
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw DataError("'" + path + "' is not a checkpoint file");
  }
  std::uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), 4);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " +
                    std::to_string(version));
  }
  std::uint64_t count = 0;
  is.read(reinterpret_cast<char*>(&count), 8);
  TensorMap map;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t name_len = 0;
    is.read(reinterpret_cast<char*>(&name_len), 4);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    std::uint32_t rank = 0;
    is.read(reinterpret_cast<char*>(&rank), 4);
    Shape shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) {
      std::uint64_t dim = 0;
      is.read(reinterpret_cast<char*>(&dim), 8);
      shape[d] = static_cast<int>(dim);
    }
    Tensor<double> t = Tensor<double>::zeros(shape);
    is.read(reinterpret_cast<char*>(t.ptr()),
            static_cast<std::streamsize>(t.size() * 8));
    if (!is) {
      throw DataError("checkpoint '" + path + "' truncated at tensor '" +
                      name + "'");
    }
    map.emplace(std::move(name), std::move(t));
  }
  return map;
}

inline const Tensor<double>& checkpoint_get(const TensorMap& map,
                                            const std::string& name) {
  const auto it = map.find(name);
  if (it == map.end()) {
    throw DataError("checkpoint is missing tensor '" + name + "'");
  }
  return it->second;
}

// RNG engine state serialized through the 64-bit value format by bit
// pattern (raw byte copies keep the round-trip exact).
inline Tensor<double> rng_state_tensor(const Rng& rng) {
  Tensor<double> t = Tensor<double>::zeros({4});
  for (int i = 0; i < 4; ++i) {
    (*t.data)[i] = std::bit_cast<double>(rng.state()[i]);
  }
  return t;
}

inline void restore_rng_state(Rng& rng, const Tensor<double>& t) {
  if (t.size() != 4) {
    throw DataError("rng state tensor must have 4 entries");
  }
  Rng::State s;
  for (int i = 0; i < 4; ++i) {
    s[i] = std::bit_cast<std::uint64_t>((*t.data)[i]);
  }
  rng.set_state(s);
}

}  // namespace meshtex
