// Procedural solids with consistent outward (CCW) winding, plus a fuzzed
// mesh generator. Used by the toy dataset writer and throughout the tests.
#pragma once

#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "meshtex/mesh.hpp"
#include "meshtex/rng.hpp"

namespace meshtex {
namespace shapes {

// Regular tetrahedron from alternating cube corners. All four faces are
// visible from a low-elevation camera ring, which the reconstruction tests
// rely on.
inline Mesh tetrahedron() {
  Mesh m;
  m.vertices = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  m.faces = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
  return compute_face_geometry(std::move(m));
}

// Axis-aligned box centered at the origin with the given side lengths.
inline Mesh box(double sx, double sy, double sz) {
  const double hx = sx / 2, hy = sy / 2, hz = sz / 2;
  Mesh m;
  m.vertices = {{-hx, -hy, -hz}, {hx, -hy, -hz}, {hx, hy, -hz},
                {-hx, hy, -hz},  {-hx, -hy, hz}, {hx, -hy, hz},
                {hx, hy, hz},    {-hx, hy, hz}};
  m.faces = {
      {0, 2, 1}, {0, 3, 2},  // z = -hz
      {4, 5, 6}, {4, 6, 7},  // z = +hz
      {0, 1, 5}, {0, 5, 4},  // y = -hy
      {2, 3, 7}, {2, 7, 6},  // y = +hy
      {1, 2, 6}, {1, 6, 5},  // x = +hx
      {3, 0, 4}, {3, 4, 7},  // x = -hx
  };
  return compute_face_geometry(std::move(m));
}

inline Mesh cube(double side = 2.0) { return box(side, side, side); }

inline Mesh octahedron() {
  Mesh m;
  m.vertices = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  m.faces = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4},
             {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
  return compute_face_geometry(std::move(m));
}

// Regular icosahedron with unit circumradius.
inline Mesh icosahedron() {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  const double s = 1.0 / std::sqrt(1.0 + phi * phi);
  const double a = s;
  const double b = phi * s;
  Mesh m;
  m.vertices = {{-a, b, 0}, {a, b, 0},   {-a, -b, 0}, {a, -b, 0},
                {0, -a, b}, {0, a, b},   {0, -a, -b}, {0, a, -b},
                {b, 0, -a}, {b, 0, a},   {-b, 0, -a}, {-b, 0, a}};
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  return compute_face_geometry(std::move(m));
}

// Loop-style subdivision of an icosahedron projected to the unit sphere.
// levels=1 gives 80 faces, levels=2 gives 320.
inline Mesh icosphere(int levels) {
  Mesh m = icosahedron();
  for (int l = 0; l < levels; ++l) {
    Mesh next;
    next.vertices = m.vertices;
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int i, int j) {
      const auto key = std::minmax(i, j);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const Vec3 p = normalized((next.vertices[i] + next.vertices[j]) * 0.5);
      next.vertices.push_back(p);
      const int idx = static_cast<int>(next.vertices.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    for (const auto& f : m.faces) {
      const int ab = mid(f[0], f[1]);
      const int bc = mid(f[1], f[2]);
      const int ca = mid(f[2], f[0]);
      next.faces.push_back({f[0], ab, ca});
      next.faces.push_back({f[1], bc, ab});
      next.faces.push_back({f[2], ca, bc});
      next.faces.push_back({ab, bc, ca});
    }
    m = std::move(next);
  }
  return compute_face_geometry(std::move(m));
}

// Breaks geometric symmetry while keeping the face structure. A regular
// solid's features can sum to zero under graph averaging, which starves
// parts of the encoder of gradient; jitter avoids that in test fixtures.
inline Mesh jittered(Mesh m, Rng& rng, double amount = 0.2) {
  for (Vec3& v : m.vertices) {
    v.x += rng.uniform(-amount, amount);
    v.y += rng.uniform(-amount, amount);
    v.z += rng.uniform(-amount, amount);
  }
  return normalize_mesh(std::move(m));
}

// Random triangle soup: valid indices, non-degenerate areas, no duplicate
// faces. Not manifold in general, which is exactly what the adjacency
// oracle tests want to see.
inline Mesh fuzzed_mesh(Rng& rng, int num_vertices, int num_faces) {
  Mesh m;
  m.vertices.reserve(num_vertices);
  for (int i = 0; i < num_vertices; ++i) {
    m.vertices.push_back(
        {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
  }
  std::set<std::array<int, 3>> used;
  int guard = 0;
  while (m.face_count() < num_faces && guard++ < num_faces * 100) {
    std::array<int, 3> f = {
        static_cast<int>(rng.next_u64() % num_vertices),
        static_cast<int>(rng.next_u64() % num_vertices),
        static_cast<int>(rng.next_u64() % num_vertices)};
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
    std::array<int, 3> key = f;
    std::sort(key.begin(), key.end());
    if (!used.insert(key).second) continue;
    m.faces.push_back(f);
    if (detail::raw_face_area(m, f) < 1e-6) {
      m.faces.pop_back();
      used.erase(key);
    }
  }
  return compute_face_geometry(std::move(m));
}

}  // namespace shapes
}  // namespace meshtex
