// Triangle mesh loading and geometric preprocessing.
//
// Pipeline: parse_obj -> validate_mesh -> compute_face_geometry ->
// normalize_mesh. All functions are pure (value in, value out) and safe to
// call concurrently on distinct meshes.
#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "meshtex/common.hpp"
#include "meshtex/geometry.hpp"

namespace meshtex {

// Faces with area below this threshold (model units squared) are treated as
// degenerate and removed during validation.
constexpr double kDegenerateAreaThreshold = 1e-12;

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;  // CCW winding = front face
  // Per-face geometry, filled by compute_face_geometry.
  std::vector<Vec3> face_centroids;
  std::vector<Vec3> face_normals;
  std::vector<double> face_areas;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int face_count() const { return static_cast<int>(faces.size()); }
  bool has_geometry() const {
    return face_centroids.size() == faces.size() && !faces.empty();
  }
};

struct ValidationReport {
  std::vector<int> removed_degenerate;  // original face indices
  std::vector<int> removed_duplicate;
  bool clean() const {
    return removed_degenerate.empty() && removed_duplicate.empty();
  }
  int removed_count() const {
    return static_cast<int>(removed_degenerate.size() +
                            removed_duplicate.size());
  }
};

namespace detail {

inline double parse_double(std::string_view tok, int line_no) {
  double v = 0.0;
  const char* begin = tok.data();
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("line " + std::to_string(line_no) +
                     ": expected a number, got '" + std::string(tok) + "'");
  }
  return v;
}

// OBJ face tokens may be "i", "i/t", "i//n", or "i/t/n"; only the vertex
// index matters here.
inline int parse_face_index(std::string_view tok, int line_no) {
  const auto slash = tok.find('/');
  if (slash != std::string_view::npos) tok = tok.substr(0, slash);
  long v = 0;
  const char* begin = tok.data();
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("line " + std::to_string(line_no) +
                     ": expected a face index, got '" + std::string(tok) +
                     "'");
  }
  if (v < 1) {
    throw DataError("line " + std::to_string(line_no) +
                    ": face index must be positive (1-based), got " +
                    std::to_string(v));
  }
  return static_cast<int>(v - 1);
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double raw_face_area(const Mesh& m, const std::array<int, 3>& f) {
  const Vec3 e1 = m.vertices[f[1]] - m.vertices[f[0]];
  const Vec3 e2 = m.vertices[f[2]] - m.vertices[f[0]];
  return 0.5 * norm(cross(e1, e2));
}

}  // namespace detail

// Parses Wavefront OBJ text. Only `v` and `f` records are interpreted;
// `vt`/`vn`/materials/groups are ignored (the pipeline uses per-face colors
// only). Polygons with more than three vertices are fan-triangulated.
// Geometry fields are left unset.
inline Mesh parse_obj(std::string_view text) {
  Mesh mesh;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tokens = detail::split_ws(line);
    if (tokens.empty()) continue;
    if (tokens[0] == "v") {
      if (tokens.size() < 4) {
        throw ParseError("line " + std::to_string(line_no) +
                         ": vertex record needs 3 coordinates");
      }
      mesh.vertices.push_back({detail::parse_double(tokens[1], line_no),
                               detail::parse_double(tokens[2], line_no),
                               detail::parse_double(tokens[3], line_no)});
    } else if (tokens[0] == "f") {
      if (tokens.size() < 4) {
        throw ParseError("line " + std::to_string(line_no) +
                         ": face record needs at least 3 indices");
      }
      std::vector<int> idx;
      idx.reserve(tokens.size() - 1);
      for (std::size_t t = 1; t < tokens.size(); ++t) {
        idx.push_back(detail::parse_face_index(tokens[t], line_no));
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
        mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
      }
    }
    // All other record types are ignored.
  }
  // Forward references are legal in OBJ, so range-check after the full pass.
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (int c = 0; c < 3; ++c) {
      if (mesh.faces[f][c] >= mesh.vertex_count()) {
        throw DataError("face " + std::to_string(f) +
                        " references vertex index " +
                        std::to_string(mesh.faces[f][c] + 1) + " but only " +
                        std::to_string(mesh.vertex_count()) +
                        " vertices exist");
      }
    }
  }
  return mesh;
}

// Removes degenerate (area < kDegenerateAreaThreshold) and duplicate faces.
// A duplicate is a face whose unordered vertex set was already seen. Throws
// DataError if indices are out of range or no faces remain.
inline Mesh validate_mesh(const Mesh& in, ValidationReport* report = nullptr) {
  ValidationReport local;
  ValidationReport& rep = report ? *report : local;
  rep = ValidationReport{};

  Mesh out;
  out.vertices = in.vertices;
  out.faces.reserve(in.faces.size());

  std::set<std::array<int, 3>> seen;
  for (int f = 0; f < in.face_count(); ++f) {
    const auto& face = in.faces[f];
    for (int c = 0; c < 3; ++c) {
      if (face[c] < 0 || face[c] >= in.vertex_count()) {
        throw DataError("face " + std::to_string(f) +
                        " references out-of-range vertex index " +
                        std::to_string(face[c]));
      }
    }
    if (detail::raw_face_area(in, face) < kDegenerateAreaThreshold) {
      rep.removed_degenerate.push_back(f);
      continue;
    }
    std::array<int, 3> key = face;
    std::sort(key.begin(), key.end());
    if (!seen.insert(key).second) {
      rep.removed_duplicate.push_back(f);
      continue;
    }
    out.faces.push_back(face);
  }
  if (out.faces.empty()) {
    throw DataError("mesh has no valid faces after validation");
  }
  return out;
}

// Centroid = vertex average; normal = normalized edge cross product (CCW
// winding gives the front-facing normal); area = half cross magnitude.
inline Mesh compute_face_geometry(Mesh mesh) {
  const int f_count = mesh.face_count();
  mesh.face_centroids.resize(f_count);
  mesh.face_normals.resize(f_count);
  mesh.face_areas.resize(f_count);
  for (int f = 0; f < f_count; ++f) {
    const Vec3& a = mesh.vertices[mesh.faces[f][0]];
    const Vec3& b = mesh.vertices[mesh.faces[f][1]];
    const Vec3& c = mesh.vertices[mesh.faces[f][2]];
    mesh.face_centroids[f] = (a + b + c) / 3.0;
    const Vec3 cr = cross(b - a, c - a);
    const double len = norm(cr);
    mesh.face_normals[f] = cr / len;
    mesh.face_areas[f] = 0.5 * len;
  }
  return mesh;
}

// Translates the bounding-box center to the origin and scales uniformly so
// the longest box side is 1, then recomputes face geometry. Idempotent.
inline Mesh normalize_mesh(Mesh mesh) {
  Vec3 lo = mesh.vertices.at(0);
  Vec3 hi = lo;
  for (const Vec3& v : mesh.vertices) {
    lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
    hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
  }
  const Vec3 center = (lo + hi) * 0.5;
  const Vec3 extent = hi - lo;
  const double longest = std::max({extent.x, extent.y, extent.z});
  const double scale = 1.0 / longest;
  for (Vec3& v : mesh.vertices) {
    v = (v - center) * scale;
  }
  return compute_face_geometry(std::move(mesh));
}

inline Mesh load_obj(std::string_view text, ValidationReport* report = nullptr) {
  return normalize_mesh(validate_mesh(parse_obj(text), report));
}

// Serializes vertices and faces back to OBJ text (1-based indices).
inline std::string write_obj(const Mesh& mesh) {
  std::ostringstream os;
  os.precision(17);
  for (const Vec3& v : mesh.vertices) {
    os << "v " << v.x << " " << v.y << " " << v.z << "\n";
  }
  for (const auto& f : mesh.faces) {
    os << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
  }
  return os.str();
}

}  // namespace meshtex
