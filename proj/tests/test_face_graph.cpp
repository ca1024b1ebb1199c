#include <catch2/catch_amalgamated.hpp>
#include <numeric>
#include <set>

#include "meshtex/face_graph.hpp"
#include "meshtex/mesh.hpp"
#include "meshtex/shapes.hpp"

using namespace meshtex;
using Catch::Approx;

namespace {

// Independent O(F^2) oracle: two triangles are adjacent iff they share at
// least two distinct vertex indices (any two vertices of a triangle form
// one of its edges).
std::set<std::pair<int, int>> brute_force_adjacency(const Mesh& mesh) {
  std::set<std::pair<int, int>> edges;
  for (int f = 0; f < mesh.face_count(); ++f) {
    for (int g = f + 1; g < mesh.face_count(); ++g) {
      int shared = 0;
      for (int a : mesh.faces[f]) {
        for (int b : mesh.faces[g]) {
          if (a == b) {
            ++shared;
            break;
          }
        }
      }
      if (shared >= 2) {
        edges.insert({f, g});
      }
    }
  }
  return edges;
}

std::set<std::pair<int, int>> graph_edges(const FaceGraph& g) {
  std::set<std::pair<int, int>> edges;
  for (int i = 0; i < g.num_nodes; ++i) {
    for (int j : g.neighbors_of(i)) {
      edges.insert({std::min(i, j), std::max(i, j)});
    }
  }
  return edges;
}

}  // namespace

TEST_CASE("single triangle gives one node and no edges") {
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}};
  m = compute_face_geometry(std::move(m));
  const FaceGraph g = build_face_adjacency(m);
  REQUIRE(g.num_nodes == 1);
  REQUIRE(g.edge_count() == 0);
}

TEST_CASE("tetrahedron faces form K4") {
  const FaceGraph g = build_face_adjacency(shapes::tetrahedron());
  REQUIRE(g.num_nodes == 4);
  REQUIRE(g.edge_count() == 6);
  for (int i = 0; i < 4; ++i) REQUIRE(g.degree(i) == 3);
  REQUIRE(graph_edges(g) == brute_force_adjacency(shapes::tetrahedron()));
}

TEST_CASE("icosahedron adjacency is 3-regular with 30 edges") {
  const Mesh m = shapes::icosahedron();
  const FaceGraph g = build_face_adjacency(m);
  REQUIRE(g.num_nodes == 20);
  REQUIRE(g.edge_count() == 30);
  for (int i = 0; i < 20; ++i) REQUIRE(g.degree(i) == 3);
  REQUIRE(graph_edges(g) == brute_force_adjacency(m));
}

TEST_CASE("adjacency matches the brute-force oracle on varied meshes") {
  std::vector<Mesh> meshes;
  meshes.push_back(shapes::cube());
  meshes.push_back(shapes::octahedron());
  meshes.push_back(shapes::icosphere(1));
  Rng rng(7);
  for (int i = 0; i < 5; ++i) {
    meshes.push_back(shapes::fuzzed_mesh(rng, 10 + i * 5, 20 + i * 10));
  }
  for (const Mesh& m : meshes) {
    const FaceGraph g = build_face_adjacency(m);
    REQUIRE(graph_edges(g) == brute_force_adjacency(m));
    // Symmetry of the stored lists.
    for (int i = 0; i < g.num_nodes; ++i) {
      for (int j : g.neighbors_of(i)) {
        const auto nb = g.neighbors_of(j);
        REQUIRE(std::find(nb.begin(), nb.end(), i) != nb.end());
      }
    }
  }
}

TEST_CASE("node features are centroid and normal per row") {
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}};
  m = compute_face_geometry(std::move(m));
  const auto feats = build_node_features(m);
  REQUIRE(feats.size() == 6);
  REQUIRE(feats[0] == Approx(1.0 / 3));
  REQUIRE(feats[1] == Approx(1.0 / 3));
  REQUIRE(feats[2] == Approx(0.0));
  REQUIRE(feats[3] == Approx(0.0));
  REQUIRE(feats[4] == Approx(0.0));
  REQUIRE(feats[5] == Approx(1.0));
}

TEST_CASE("centroid features are bounded after normalization") {
  const Mesh m = normalize_mesh(shapes::icosphere(1));
  const auto feats = build_node_features(m);
  for (int f = 0; f < m.face_count(); ++f) {
    for (int c = 0; c < 3; ++c) {
      REQUIRE(std::abs(feats[f * kNodeFeatureDim + c]) <= 0.5 + 1e-12);
    }
  }
}

TEST_CASE("tetrahedron has four distinct feature rows") {
  const Mesh m = normalize_mesh(shapes::tetrahedron());
  const auto feats = build_node_features(m);
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      bool differs = false;
      for (int c = 0; c < kNodeFeatureDim; ++c) {
        if (feats[a * kNodeFeatureDim + c] != feats[b * kNodeFeatureDim + c]) {
          differs = true;
        }
      }
      REQUIRE(differs);
    }
  }
}

TEST_CASE("normalize_adjacency on two connected nodes") {
  // Both degrees are 2 with the self-loop, so every weight is 1/2.
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
  m.faces = {{0, 1, 2}, {1, 3, 2}};
  m = compute_face_geometry(std::move(m));
  const NormalizedAdjacency a = normalize_adjacency(build_face_adjacency(m));
  REQUIRE(a.weights.size() == 4);
  for (double w : a.weights) REQUIRE(w == Approx(0.5));
}

TEST_CASE("normalize_adjacency gives an isolated node weight one") {
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}};
  m = compute_face_geometry(std::move(m));
  const NormalizedAdjacency a = normalize_adjacency(build_face_adjacency(m));
  REQUIRE(a.weights.size() == 1);
  REQUIRE(a.weights[0] == Approx(1.0));
  REQUIRE(a.neighbors[0] == 0);
}

TEST_CASE("normalize_adjacency on K4 gives uniform quarter weights") {
  const NormalizedAdjacency a =
      normalize_adjacency(build_face_adjacency(shapes::tetrahedron()));
  REQUIRE(a.weights.size() == 16);
  for (double w : a.weights) REQUIRE(w == Approx(0.25));
}

TEST_CASE("normalized weights are symmetric and bounded") {
  Rng rng(11);
  const Mesh m = shapes::fuzzed_mesh(rng, 20, 40);
  const FaceGraph g = build_face_adjacency(m);
  const NormalizedAdjacency a = normalize_adjacency(g);
  for (int i = 0; i < a.num_nodes; ++i) {
    const auto nb = a.neighbors_of(i);
    const auto wt = a.weights_of(i);
    double row_sum = 0;
    for (std::size_t t = 0; t < nb.size(); ++t) {
      row_sum += wt[t];
      REQUIRE(wt[t] > 0.0);
      REQUIRE(wt[t] <= 1.0);
      // Mirror entry must carry the identical weight.
      const auto mnb = a.neighbors_of(nb[t]);
      const auto mwt = a.weights_of(nb[t]);
      bool found = false;
      for (std::size_t u = 0; u < mnb.size(); ++u) {
        if (mnb[u] == i) {
          REQUIRE(mwt[u] == wt[t]);
          found = true;
        }
      }
      REQUIRE(found);
    }
    REQUIRE(row_sum > 0.0);
  }
}

TEST_CASE("closed triangulations are 3-regular with unit row sums") {
  // Every edge of a closed mesh is shared by exactly two faces, so the
  // face graph is 3-regular and symmetric normalization gives row sums of
  // exactly 1.
  for (const Mesh& m : {shapes::tetrahedron(), shapes::cube(),
                        shapes::octahedron(), shapes::icosahedron(),
                        shapes::icosphere(1)}) {
    const NormalizedAdjacency a =
        normalize_adjacency(build_face_adjacency(m));
    for (int i = 0; i < a.num_nodes; ++i) {
      const auto wt = a.weights_of(i);
      REQUIRE(wt.size() == 4);  // 3 neighbors + self-loop
      const double row = std::accumulate(wt.begin(), wt.end(), 0.0);
      REQUIRE(row == Approx(1.0));
      for (double w : wt) {
        REQUIRE(w > 0.0);
        REQUIRE(w <= 1.0);
      }
    }
  }
}

TEST_CASE("face relabeling permutes features and adjacency consistently") {
  const Mesh base = normalize_mesh(shapes::icosahedron());
  // Apply a fixed permutation to the face order.
  std::vector<int> perm(base.face_count());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(3);
  for (int i = base.face_count() - 1; i > 0; --i) {
    std::swap(perm[i], perm[rng.next_u64() % (i + 1)]);
  }
  Mesh permuted = base;
  for (int f = 0; f < base.face_count(); ++f) {
    permuted.faces[perm[f]] = base.faces[f];
  }
  permuted = compute_face_geometry(std::move(permuted));

  const FaceGraph ga = build_face_adjacency(base);
  const FaceGraph gb = build_face_adjacency(permuted);
  // Features permute rows.
  for (int f = 0; f < base.face_count(); ++f) {
    for (int c = 0; c < kNodeFeatureDim; ++c) {
      REQUIRE(ga.node_features[f * kNodeFeatureDim + c] ==
              gb.node_features[perm[f] * kNodeFeatureDim + c]);
    }
  }
  // Edges permute consistently.
  const auto ea = graph_edges(ga);
  const auto eb = graph_edges(gb);
  std::set<std::pair<int, int>> mapped;
  for (const auto& [i, j] : ea) {
    mapped.insert({std::min(perm[i], perm[j]), std::max(perm[i], perm[j])});
  }
  REQUIRE(mapped == eb);
}

TEST_CASE("graph stats report nodes, edges, histogram and components") {
  const GraphStats s =
      compute_graph_stats(build_face_adjacency(shapes::icosahedron()));
  REQUIRE(s.nodes == 20);
  REQUIRE(s.edges == 30);
  REQUIRE(s.components == 1);
  REQUIRE(s.degree_histogram.at(3) == 20);

  // Two disjoint triangles: two components.
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0},
                {5, 0, 0}, {6, 0, 0}, {5, 1, 0}};
  m.faces = {{0, 1, 2}, {3, 4, 5}};
  m = compute_face_geometry(std::move(m));
  const GraphStats s2 = compute_graph_stats(build_face_adjacency(m));
  REQUIRE(s2.components == 2);
  REQUIRE(s2.edges == 0);
}
