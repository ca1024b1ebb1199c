// Face-adjacency graph construction: faces become nodes, faces sharing an
// undirected vertex-pair edge become neighbors. Node features are the face
// centroid and unit normal (6 values). normalize_adjacency produces the
// symmetric degree-normalized weights of A+I used by graph convolutions.
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <unordered_map>
#include <vector>

#include "meshtex/common.hpp"
#include "meshtex/mesh.hpp"

namespace meshtex {

constexpr int kNodeFeatureDim = 6;  // centroid xyz + normal xyz

struct FaceGraph {
  int num_nodes = 0;
  // CSR neighbor lists, sorted per row, symmetric, no self-loops.
  std::vector<int> offsets;
  std::vector<int> neighbors;
  // Row-major num_nodes x 6.
  std::vector<double> node_features;

  int degree(int i) const { return offsets[i + 1] - offsets[i]; }
  std::span<const int> neighbors_of(int i) const {
    return {neighbors.data() + offsets[i],
            static_cast<std::size_t>(degree(i))};
  }
  // Undirected edge count.
  int edge_count() const { return static_cast<int>(neighbors.size()) / 2; }
};

// Same index structure as FaceGraph with self-loops inserted and the
// per-entry weight 1/sqrt(d_i * d_j), degrees counted with the self-loop.
struct NormalizedAdjacency {
  int num_nodes = 0;
  std::vector<int> offsets;
  std::vector<int> neighbors;
  std::vector<double> weights;

  std::span<const int> neighbors_of(int i) const {
    return {neighbors.data() + offsets[i],
            static_cast<std::size_t>(offsets[i + 1] - offsets[i])};
  }
  std::span<const double> weights_of(int i) const {
    return {weights.data() + offsets[i],
            static_cast<std::size_t>(offsets[i + 1] - offsets[i])};
  }
};

// Row i = (centroid_x, centroid_y, centroid_z, n_x, n_y, n_z). Expects a
// normalized mesh so centroids are bounded in [-0.5, 0.5].
inline std::vector<double> build_node_features(const Mesh& mesh) {
  if (!mesh.has_geometry()) {
    throw DataError("build_node_features requires computed face geometry");
  }
  std::vector<double> feats(static_cast<std::size_t>(mesh.face_count()) *
                            kNodeFeatureDim);
  for (int f = 0; f < mesh.face_count(); ++f) {
    double* row = feats.data() + static_cast<std::size_t>(f) * kNodeFeatureDim;
    row[0] = mesh.face_centroids[f].x;
    row[1] = mesh.face_centroids[f].y;
    row[2] = mesh.face_centroids[f].z;
    row[3] = mesh.face_normals[f].x;
    row[4] = mesh.face_normals[f].y;
    row[5] = mesh.face_normals[f].z;
  }
  return feats;
}

// Two faces are neighbors iff they share an undirected vertex-pair edge.
// Edges shared by more than two faces (non-manifold) connect every incident
// face pair.
inline FaceGraph build_face_adjacency(const Mesh& mesh) {
  const int f_count = mesh.face_count();
  std::unordered_map<std::uint64_t, std::vector<int>> edge_faces;
  edge_faces.reserve(static_cast<std::size_t>(f_count) * 3);
  for (int f = 0; f < f_count; ++f) {
    for (int c = 0; c < 3; ++c) {
      const std::uint64_t a = mesh.faces[f][c];
      const std::uint64_t b = mesh.faces[f][(c + 1) % 3];
      const std::uint64_t key = a < b ? (a << 32 | b) : (b << 32 | a);
      edge_faces[key].push_back(f);
    }
  }
  std::vector<std::vector<int>> adj(f_count);
  for (const auto& [key, faces] : edge_faces) {
    for (std::size_t i = 0; i < faces.size(); ++i) {
      for (std::size_t j = i + 1; j < faces.size(); ++j) {
        adj[faces[i]].push_back(faces[j]);
        adj[faces[j]].push_back(faces[i]);
      }
    }
  }
  FaceGraph g;
  g.num_nodes = f_count;
  g.offsets.resize(f_count + 1, 0);
  for (int i = 0; i < f_count; ++i) {
    auto& row = adj[i];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    g.offsets[i + 1] = g.offsets[i] + static_cast<int>(row.size());
  }
  g.neighbors.reserve(g.offsets.back());
  for (auto& row : adj) {
    g.neighbors.insert(g.neighbors.end(), row.begin(), row.end());
  }
  if (mesh.has_geometry()) {
    g.node_features = build_node_features(mesh);
  }
  return g;
}

inline NormalizedAdjacency normalize_adjacency(const FaceGraph& g) {
  NormalizedAdjacency a;
  a.num_nodes = g.num_nodes;
  a.offsets.resize(g.num_nodes + 1, 0);
  std::vector<double> inv_sqrt_deg(g.num_nodes);
  for (int i = 0; i < g.num_nodes; ++i) {
    // Degree counted with the self-loop.
    inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(i) + 1));
    a.offsets[i + 1] = a.offsets[i] + g.degree(i) + 1;
  }
  a.neighbors.reserve(a.offsets.back());
  a.weights.reserve(a.offsets.back());
  for (int i = 0; i < g.num_nodes; ++i) {
    bool self_inserted = false;
    auto push = [&](int j) {
      a.neighbors.push_back(j);
      a.weights.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    };
    for (int j : g.neighbors_of(i)) {
      if (!self_inserted && j > i) {
        push(i);
        self_inserted = true;
      }
      push(j);
    }
    if (!self_inserted) push(i);
  }
  return a;
}

struct GraphStats {
  int nodes = 0;
  int edges = 0;
  int components = 0;
  std::map<int, int> degree_histogram;  // degree -> node count
};

inline GraphStats compute_graph_stats(const FaceGraph& g) {
  GraphStats s;
  s.nodes = g.num_nodes;
  s.edges = g.edge_count();
  for (int i = 0; i < g.num_nodes; ++i) ++s.degree_histogram[g.degree(i)];
  std::vector<char> visited(g.num_nodes, 0);
  std::vector<int> stack;
  for (int i = 0; i < g.num_nodes; ++i) {
    if (visited[i]) continue;
    ++s.components;
    stack.push_back(i);
    visited[i] = 1;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int w : g.neighbors_of(v)) {
        if (!visited[w]) {
          visited[w] = 1;
          stack.push_back(w);
        }
      }
    }
  }
  return s;
}

inline void print_graph_stats(const GraphStats& s, std::ostream& os) {
  os << "nodes " << s.nodes << "\n";
  os << "edges " << s.edges << "\n";
  os << "components " << s.components << "\n";
  os << "degree_histogram\n";
  for (const auto& [deg, count] : s.degree_histogram) {
    os << "  " << deg << " " << count << "\n";
  }
}

}  // namespace meshtex
