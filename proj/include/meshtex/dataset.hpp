// Training data layout: one directory per mesh holding `mesh.obj` and
// `facecolors.bin` (u32 face count, then F x 3 doubles in [0,1],
// little-endian). Face colors refer to the validated mesh's face order.
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "meshtex/common.hpp"
#include "meshtex/mesh.hpp"
#include "meshtex/rng.hpp"
#include "meshtex/shapes.hpp"
#include "meshtex/tensor.hpp"

namespace meshtex {

inline void write_facecolors(const std::string& path,
                             const Tensor<double>& colors) {
  if (colors.ndim() != 2 || colors.cols() != 3) {
    throw ShapeError("facecolors must be (F,3), got " +
                     shape_str(colors.shape));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw DataError("cannot open '" + path + "' for writing");
  }
  const std::uint32_t count = static_cast<std::uint32_t>(colors.rows());
  os.write(reinterpret_cast<const char*>(&count), 4);
  os.write(reinterpret_cast<const char*>(colors.ptr()),
           static_cast<std::streamsize>(colors.size() * 8));
}

inline Tensor<double> read_facecolors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw DataError("cannot open '" + path + "'");
  }
  std::uint32_t count = 0;
  is.read(reinterpret_cast<char*>(&count), 4);
  Tensor<double> colors = Tensor<double>::zeros({static_cast<int>(count), 3});
  is.read(reinterpret_cast<char*>(colors.ptr()),
          static_cast<std::streamsize>(colors.size() * 8));
  if (!is) {
    throw DataError("facecolors file '" + path + "' truncated");
  }
  for (std::size_t i = 0; i < colors.size(); ++i) {
    const double v = (*colors.data)[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DataError("facecolors value " + std::to_string(v) +
                      " outside [0,1] in '" + path + "'");
    }
  }
  return colors;
}

struct DatasetEntry {
  std::string name;
  Mesh mesh;  // validated and normalized
  Tensor<double> colors;
};

// Loads every subdirectory containing `mesh.obj`, sorted by name so runs
// are deterministic regardless of filesystem enumeration order.
inline std::vector<DatasetEntry> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    throw DataError("dataset directory '" + dir + "' does not exist");
  }
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "mesh.obj")) {
      names.push_back(entry.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) {
    throw DataError("dataset directory '" + dir + "' has no mesh entries");
  }
  std::vector<DatasetEntry> out;
  out.reserve(names.size());
  for (const std::string& name : names) {
    const fs::path base = fs::path(dir) / name;
    std::ifstream is(base / "mesh.obj");
    std::ostringstream text;
    text << is.rdbuf();
    DatasetEntry e;
    e.name = name;
    e.mesh = load_obj(text.str());
    e.colors = read_facecolors((base / "facecolors.bin").string());
    if (e.colors.rows() != e.mesh.face_count()) {
      throw DataError("dataset entry '" + name + "': facecolors has " +
                      std::to_string(e.colors.rows()) + " rows but mesh has " +
                      std::to_string(e.mesh.face_count()) + " faces");
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline void write_dataset_entry(const std::string& dir,
                                const std::string& name, const Mesh& mesh,
                                const Tensor<double>& colors) {
  namespace fs = std::filesystem;
  const fs::path base = fs::path(dir) / name;
  fs::create_directories(base);
  std::ofstream os(base / "mesh.obj");
  os << write_obj(mesh);
  write_facecolors((base / "facecolors.bin").string(), colors);
}

// Structured ground-truth palette: channels follow the face normal, so a
// mesh's texture correlates with its geometry (the stand-in for real
// UV-textured data).
inline Tensor<double> structured_colors(const Mesh& mesh) {
  Tensor<double> colors = Tensor<double>::zeros({mesh.face_count(), 3});
  for (int f = 0; f < mesh.face_count(); ++f) {
    const Vec3& n = mesh.face_normals[f];
    colors.at(f, 0) = 0.5 + 0.4 * n.x;
    colors.at(f, 1) = 0.5 + 0.4 * n.y;
    colors.at(f, 2) = 0.5 + 0.4 * n.z;
  }
  return colors;
}

inline Tensor<double> random_colors(int face_count, Rng& rng) {
  Tensor<double> colors = Tensor<double>::zeros({face_count, 3});
  for (std::size_t i = 0; i < colors.size(); ++i) {
    (*colors.data)[i] = rng.uniform();
  }
  return colors;
}

// The three-mesh toy dataset used by the training walkthrough and the
// desk-scale trend checks.
inline void write_toy_dataset(const std::string& dir) {
  const Mesh tet = normalize_mesh(shapes::tetrahedron());
  const Mesh cub = normalize_mesh(shapes::cube());
  const Mesh ico = normalize_mesh(shapes::icosahedron());
  write_dataset_entry(dir, "cube", cub, structured_colors(cub));
  write_dataset_entry(dir, "ico", ico, structured_colors(ico));
  write_dataset_entry(dir, "tetra", tet, structured_colors(tet));
}

}  // namespace meshtex
