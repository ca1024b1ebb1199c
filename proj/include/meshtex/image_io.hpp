// Binary PPM (P6, 8-bit) image output and the debug index-buffer dump.
// Bytes are the sRGB-naive mapping round(255 * clamp(v, 0, 1)).
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "meshtex/common.hpp"
#include "meshtex/renderer.hpp"

namespace meshtex {

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(
      std::lround(255.0 * std::min(1.0, std::max(0.0, v))));
}

// rgb is H*W*3 row-major in [0,1].
inline void write_ppm(const std::string& path, int width, int height,
                      const double* rgb) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw DataError("cannot open '" + path + "' for writing");
  }
  os << "P6\n" << width << " " << height << "\n255\n";
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(width) * height *
                                  3);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = to_byte(rgb[i]);
  }
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
}

struct PpmImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bytes;  // H*W*3
};

inline PpmImage read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw DataError("cannot open '" + path + "'");
  }
  std::string magic;
  int maxval = 0;
  PpmImage img;
  is >> magic >> img.width >> img.height >> maxval;
  if (magic != "P6" || maxval != 255 || img.width < 1 || img.height < 1) {
    throw DataError("'" + path + "' is not an 8-bit binary PPM");
  }
  is.get();  // single whitespace after the header
  img.bytes.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  is.read(reinterpret_cast<char*>(img.bytes.data()),
          static_cast<std::streamsize>(img.bytes.size()));
  if (!is) {
    throw DataError("'" + path + "' truncated");
  }
  return img;
}

// Debug dump: height, width, then face indices as 32-bit signed values,
// all little-endian.
inline void write_index_dump(const std::string& path,
                             const RenderBuffers& buf) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw DataError("cannot open '" + path + "' for writing");
  }
  const std::uint32_t h = static_cast<std::uint32_t>(buf.height);
  const std::uint32_t w = static_cast<std::uint32_t>(buf.width);
  os.write(reinterpret_cast<const char*>(&h), 4);
  os.write(reinterpret_cast<const char*>(&w), 4);
  os.write(reinterpret_cast<const char*>(buf.face_index.data()),
           static_cast<std::streamsize>(buf.face_index.size() * 4));
}

}  // namespace meshtex
