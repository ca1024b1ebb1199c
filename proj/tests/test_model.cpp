#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <numeric>

#include "meshtex/gradcheck.hpp"
#include "meshtex/model.hpp"
#include "meshtex/shapes.hpp"

using namespace meshtex;
using Catch::Approx;
using T = Tensor<double>;

namespace {

// Mesh -> (graph, adjacency, features) for forward tests.
struct GraphData {
  FaceGraph graph;
  NormalizedAdjacency adj;
  T feats;
};

GraphData graph_of(const Mesh& mesh) {
  GraphData g;
  g.graph = build_face_adjacency(mesh);
  g.adj = normalize_adjacency(g.graph);
  g.feats = T::from({g.graph.num_nodes, kNodeFeatureDim},
                    std::vector<double>(g.graph.node_features));
  return g;
}

void zero_params(ModelParams<double>& m) {
  m.visit_all([](const std::string&, T& t) {
    std::fill(t.data->begin(), t.data->end(), 0.0);
  });
}

}  // namespace

TEST_CASE("sample_noise is seed-deterministic") {
  Rng a(5), b(5), c(6);
  const T za = sample_noise<double>(a, 16);
  const T zb = sample_noise<double>(b, 16);
  const T zc = sample_noise<double>(c, 16);
  REQUIRE(*za.data == *zb.data);
  REQUIRE(*za.data != *zc.data);
}

TEST_CASE("encoder on an isolated node is a dense stack") {
  // Single face: the normalized adjacency is the 1x1 identity, so the
  // encoder must match a plain three-layer dense map of the feature row.
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}};
  m = compute_face_geometry(std::move(m));
  const GraphData g = graph_of(m);

  Rng rng(31);
  const auto enc = Encoder<double>::make(rng, kNodeFeatureDim, 4);
  Tape<double> tape;
  const T latent = encode_parts(tape, enc, g.adj, g.feats);
  REQUIRE(latent.shape == Shape{1, 4});

  auto dense = [](const GraphConvLayer<double>& l,
                  const std::vector<double>& x) {
    std::vector<double> out(l.weight.cols(), 0.0);
    for (int j = 0; j < l.weight.cols(); ++j) {
      for (int i = 0; i < l.weight.rows(); ++i) {
        out[j] += x[i] * l.weight.at(i, j);
      }
      out[j] += (*l.bias.data)[j];
      out[j] = out[j] > 0 ? out[j] : 0.2 * out[j];
    }
    return out;
  };
  std::vector<double> row(g.feats.data->begin(), g.feats.data->end());
  row = dense(enc.l1, row);
  row = dense(enc.l2, row);
  row = dense(enc.l3, row);
  for (int j = 0; j < 4; ++j) {
    REQUIRE(latent.at(0, j) == Approx(row[j]).epsilon(1e-12));
  }
}

TEST_CASE("encoder is exactly permutation-equivariant") {
  Rng rng(32);
  const Mesh base = shapes::jittered(shapes::icosahedron(), rng, 0.05);
  std::vector<int> perm(base.face_count());
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = base.face_count() - 1; i > 0; --i) {
    std::swap(perm[i], perm[rng.next_u64() % (i + 1)]);
  }
  Mesh permuted = base;
  for (int f = 0; f < base.face_count(); ++f) {
    permuted.faces[perm[f]] = base.faces[f];
  }
  permuted = compute_face_geometry(std::move(permuted));

  const GraphData ga = graph_of(base);
  const GraphData gb = graph_of(permuted);
  const auto enc = Encoder<double>::make(rng);
  Tape<double> ta, tb;
  const T la = encode_parts(ta, enc, ga.adj, ga.feats);
  const T lb = encode_parts(tb, enc, gb.adj, gb.feats);
  for (int f = 0; f < base.face_count(); ++f) {
    for (int c = 0; c < 64; ++c) {
      REQUIRE(la.at(f, c) == lb.at(perm[f], c));  // bitwise
    }
  }
}

TEST_CASE("duplicated disconnected components share latent rows") {
  // The same triangles appear twice through duplicated vertices, so the
  // components are graph-disconnected but geometrically identical; their
  // latent rows must match exactly.
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0.3},
                {0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0.3}};
  m.faces = {{0, 1, 2}, {1, 3, 2}, {4, 5, 6}, {5, 7, 6}};
  m = compute_face_geometry(std::move(m));
  const GraphData g = graph_of(m);
  REQUIRE(compute_graph_stats(g.graph).components == 2);

  Rng rng(33);
  const auto enc = Encoder<double>::make(rng);
  Tape<double> tape;
  const T latent = encode_parts(tape, enc, g.adj, g.feats);
  for (int c = 0; c < 64; ++c) {
    REQUIRE(latent.at(0, c) == latent.at(2, c));
    REQUIRE(latent.at(1, c) == latent.at(3, c));
  }
}

TEST_CASE("identical latent rows produce identical ggan colors") {
  Rng rng(34);
  ModelParams<double> model =
      ModelParams<double>::make(GeneratorVariant::ggan, rng, 4, 64, 8);
  T latent = T::zeros({5, 8});
  for (int c = 0; c < 8; ++c) {
    const double v = rng.uniform(-1, 1);
    for (int r = 0; r < 5; ++r) latent.at(r, c) = v;
  }
  const T z = sample_noise<double>(rng, 4);
  Tape<double> tape;
  const T colors = generate_texture(tape, model, latent, z);
  for (int r = 1; r < 5; ++r) {
    for (int c = 0; c < 3; ++c) {
      REQUIRE(colors.at(r, c) == colors.at(0, c));
    }
  }
  for (std::size_t i = 0; i < colors.size(); ++i) {
    REQUIRE((*colors.data)[i] > 0.0);
    REQUIRE((*colors.data)[i] < 1.0);
  }
}

TEST_CASE("one parameter set runs on meshes of any face count") {
  Rng rng(35);
  ModelParams<double> model =
      ModelParams<double>::make(GeneratorVariant::ggan, rng, 16, 64);
  const T z = sample_noise<double>(rng, 16);
  for (const Mesh& mesh :
       {normalize_mesh(shapes::tetrahedron()),
        normalize_mesh(shapes::icosahedron())}) {
    const GraphData g = graph_of(mesh);
    Tape<double> tape;
    const T latent = encode_parts(tape, model.encoder, g.adj, g.feats);
    const T colors = generate_texture(tape, model, latent, z, &g.adj);
    REQUIRE(colors.shape == Shape{mesh.face_count(), 3});
  }
}

TEST_CASE("distinct noise draws change the generated texture") {
  Rng rng(36);
  ModelParams<double> model =
      ModelParams<double>::make(GeneratorVariant::ggan, rng, 16, 64);
  const GraphData g = graph_of(normalize_mesh(shapes::icosahedron()));
  Tape<double> tape;
  const T latent = encode_parts(tape, model.encoder, g.adj, g.feats);
  const T c1 = generate_texture(tape, model, latent,
                                sample_noise<double>(rng, 16));
  const T c2 = generate_texture(tape, model, latent,
                                sample_noise<double>(rng, 16));
  double dist = 0;
  for (std::size_t i = 0; i < c1.size(); ++i) {
    dist += std::abs((*c1.data)[i] - (*c2.data)[i]);
  }
  REQUIRE(dist / c1.size() > 0.0);
}

TEST_CASE("gcn generator variant requires the adjacency") {
  Rng rng(37);
  ModelParams<double> model =
      ModelParams<double>::make(GeneratorVariant::gcn, rng, 4, 64, 8);
  Tape<double> tape;
  const T latent = T::zeros({3, 8});
  const T z = T::zeros({4});
  REQUIRE_THROWS_AS(generate_texture(tape, model, latent, z), ShapeError);
}

TEST_CASE("zero-weight discriminator emits logit zero") {
  Rng rng(38);
  ModelParams<double> model =
      ModelParams<double>::make(GeneratorVariant::ggan, rng, 16, 16, 8, 4, 2);
  zero_params(model);
  Tape<double> tape;
  T img = T::zeros({3, 16, 16});
  for (std::size_t i = 0; i < img.size(); ++i) {
    (*img.data)[i] = rng.uniform();
  }
  const T logit = discriminate(tape, model.disc, img);
  REQUIRE(logit.item() == 0.0);
  // Determinism on identical inputs.
  Rng r2(39);
  ModelParams<double> m2 =
      ModelParams<double>::make(GeneratorVariant::ggan, r2, 16, 16, 8, 4, 2);
  Tape<double> t2;
  const double l1 = discriminate(t2, m2.disc, img).item();
  const double l2 = discriminate(t2, m2.disc, img).item();
  REQUIRE(l1 == l2);
}

TEST_CASE("discriminator input gradient matches finite differences") {
  Rng rng(40);
  ModelParams<double> model =
      ModelParams<double>::make(GeneratorVariant::ggan, rng, 4, 16, 4, 4, 2);
  T img = T::zeros({3, 16, 16});
  for (std::size_t i = 0; i < img.size(); ++i) {
    (*img.data)[i] = rng.uniform(0.1, 0.9);
  }
  const auto rep = finite_difference_check(
      [&](Tape<double>& t, const std::vector<T>& in) {
        return discriminate(t, model.disc, in[0]);
      },
      {img});
  REQUIRE(rep.max_rel_err <= 1e-5);
}

TEST_CASE("losses at zero discriminator weights equal ln 2 terms") {
  Rng rng(41);
  ModelParams<double> model =
      ModelParams<double>::make(GeneratorVariant::ggan, rng, 4, 16, 4, 4, 2);
  zero_params(model);
  Tape<double> tape;
  std::vector<T> real, fake;
  for (int v = 0; v < 3; ++v) {
    T r = T::zeros({3, 16, 16});
    T f = T::zeros({3, 16, 16});
    for (std::size_t i = 0; i < r.size(); ++i) {
      (*r.data)[i] = rng.uniform();
      (*f.data)[i] = rng.uniform();
    }
    real.push_back(r);
    fake.push_back(f);
  }
  const auto bundle =
      compute_losses(tape, model.disc, real, fake, {}, {}, 0.0);
  REQUIRE(bundle.loss_d.item() == Approx(2.0 * std::log(2.0)));
  REQUIRE(bundle.loss_g.item() == Approx(std::log(2.0)));
  REQUIRE(bundle.d_real == Approx(0.5));
  REQUIRE(bundle.d_fake == Approx(0.5));
}

TEST_CASE("perceptual term vanishes on identical images") {
  Rng rng(42);
  ModelParams<double> model =
      ModelParams<double>::make(GeneratorVariant::ggan, rng, 4, 16, 4, 4, 2);
  const FeatureExtractor<double> fe = FeatureExtractor<double>::make_seeded();
  Tape<double> tape;
  std::vector<T> images, feats;
  for (int v = 0; v < 2; ++v) {
    T img = T::zeros({3, 16, 16});
    for (std::size_t i = 0; i < img.size(); ++i) {
      (*img.data)[i] = rng.uniform();
    }
    images.push_back(img);
    feats.push_back(fe.features(tape, img));
  }
  const auto bundle =
      compute_losses(tape, model.disc, images, images, feats, feats, 0.5);
  REQUIRE(bundle.perceptual == 0.0);

  // lambda = 0 reduces loss_g to the pure adversarial term.
  const auto no_perc =
      compute_losses(tape, model.disc, images, images, feats, feats, 0.0);
  Tape<double> t2;
  const T logits = t2.stack_scalars({discriminate(t2, model.disc, images[0]),
                                     discriminate(t2, model.disc, images[1])});
  const double adv =
      t2.bce_with_logits(logits, T::full({2}, 1.0)).item();
  REQUIRE(no_perc.loss_g.item() == Approx(adv));
}

TEST_CASE("train_step with zero learning rate reports but does not move") {
  Rng rng(43);
  DatasetEntry entry;
  entry.mesh = normalize_mesh(shapes::icosahedron());
  entry.colors = structured_colors(entry.mesh);
  const auto ring = make_view_ring(2, 20.0, 2.2, 16, 16);
  const FeatureExtractor<double> fe = FeatureExtractor<double>::make_seeded();
  const TrainingMesh<double> tm =
      prepare_training_mesh(entry, ring, ShadingConfig{}, fe);

  ModelParams<double> model =
      ModelParams<double>::make(GeneratorVariant::ggan, rng, 8, 16, 16, 4, 2);
  AdamConfig cfg;
  cfg.lr = 0.0;
  AdamOptimizer<double> og(cfg), od(cfg);
  model.visit_generator(
      [&](const std::string& n, T& t) { og.register_param(n, &t); });
  model.disc.visit(
      [&](const std::string& n, T& t) { od.register_param(n, &t); });

  TensorMap before;
  model.visit_all([&](const std::string& n, T& t) {
    before.emplace(n, t.detached_copy());
  });
  TrainSettings settings;
  settings.noise_dim = 8;
  const StepMetrics m = train_step(model, og, od, tm, settings, fe, rng);
  REQUIRE(std::isfinite(m.loss_d));
  REQUIRE(std::isfinite(m.loss_g));
  REQUIRE(m.loss_d > 0.0);
  model.visit_all([&](const std::string& n, T& t) {
    REQUIRE(*t.data == *before.at(n).data);
  });
}

TEST_CASE("train_step metrics are bit-reproducible under a fixed seed") {
  auto run = [] {
    Rng rng(44);
    DatasetEntry entry;
    entry.mesh = normalize_mesh(shapes::icosahedron());
    entry.colors = structured_colors(entry.mesh);
    const auto ring = make_view_ring(2, 20.0, 2.2, 16, 16);
    const FeatureExtractor<double> fe =
        FeatureExtractor<double>::make_seeded();
    const TrainingMesh<double> tm =
        prepare_training_mesh(entry, ring, ShadingConfig{}, fe);
    ModelParams<double> model = ModelParams<double>::make(
        GeneratorVariant::ggan, rng, 8, 16, 16, 4, 2);
    AdamOptimizer<double> og, od;
    model.visit_generator(
        [&](const std::string& n, T& t) { og.register_param(n, &t); });
    model.disc.visit(
        [&](const std::string& n, T& t) { od.register_param(n, &t); });
    TrainSettings settings;
    settings.noise_dim = 8;
    std::vector<double> history;
    for (int step = 0; step < 4; ++step) {
      const StepMetrics m = train_step(model, og, od, tm, settings, fe, rng);
      history.push_back(m.loss_d);
      history.push_back(m.loss_g);
      history.push_back(m.perceptual);
    }
    return history;
  };
  REQUIRE(run() == run());
}

TEST_CASE("reconstruction mode descends toward a uniform target") {
  Rng rng(45);
  DatasetEntry entry;
  entry.mesh = normalize_mesh(shapes::tetrahedron());
  entry.colors = T::zeros({4, 3});
  for (int f = 0; f < 4; ++f) {
    entry.colors.at(f, 0) = 0.8;
    entry.colors.at(f, 1) = 0.35;
    entry.colors.at(f, 2) = 0.6;
  }
  const auto ring = make_view_ring(4, 20.0, 2.2, 16, 16);
  const FeatureExtractor<double> fe = FeatureExtractor<double>::make_seeded();
  const TrainingMesh<double> tm =
      prepare_training_mesh(entry, ring, ShadingConfig{}, fe);

  ModelParams<double> model =
      ModelParams<double>::make(GeneratorVariant::ggan, rng, 8, 16, 16, 4, 2);
  AdamConfig cfg;
  cfg.lr = 3e-3;
  AdamOptimizer<double> og(cfg), od(cfg);
  model.visit_generator(
      [&](const std::string& n, T& t) { og.register_param(n, &t); });
  model.disc.visit(
      [&](const std::string& n, T& t) { od.register_param(n, &t); });
  TrainSettings settings;
  settings.noise_dim = 8;
  settings.reconstruction = true;

  double first = 0, last = 0;
  for (int step = 0; step < 120; ++step) {
    const StepMetrics m = train_step(model, og, od, tm, settings, fe, rng);
    if (step == 0) first = m.loss_g;
    last = m.loss_g;
    REQUIRE(m.loss_d == 0.0);  // adversarial path untouched
  }
  REQUIRE(last < 0.25 * first);
}

TEST_CASE("encoder plus generator output is exactly equivariant") {
  Rng rng(46);
  const Mesh base = shapes::jittered(shapes::icosahedron(), rng, 0.05);
  std::vector<int> perm(base.face_count());
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = base.face_count() - 1; i > 0; --i) {
    std::swap(perm[i], perm[rng.next_u64() % (i + 1)]);
  }
  Mesh permuted = base;
  for (int f = 0; f < base.face_count(); ++f) {
    permuted.faces[perm[f]] = base.faces[f];
  }
  permuted = compute_face_geometry(std::move(permuted));

  ModelParams<double> model =
      ModelParams<double>::make(GeneratorVariant::ggan, rng, 16, 64);
  const T z = sample_noise<double>(rng, 16);
  const GraphData ga = graph_of(base);
  const GraphData gb = graph_of(permuted);
  Tape<double> ta, tb;
  const T ca = generate_texture(
      ta, model, encode_parts(ta, model.encoder, ga.adj, ga.feats), z,
      &ga.adj);
  const T cb = generate_texture(
      tb, model, encode_parts(tb, model.encoder, gb.adj, gb.feats), z,
      &gb.adj);
  for (int f = 0; f < base.face_count(); ++f) {
    for (int c = 0; c < 3; ++c) {
      REQUIRE(ca.at(f, c) == cb.at(perm[f], c));  // bitwise
    }
  }
}

TEST_CASE("noise sensitivity is strictly positive across draws") {
  Rng rng(47);
  ModelParams<double> model =
      ModelParams<double>::make(GeneratorVariant::ggan, rng, 16, 64);
  const GraphData g = graph_of(normalize_mesh(shapes::icosahedron()));
  Tape<double> tape;
  const T latent = encode_parts(tape, model.encoder, g.adj, g.feats);
  std::vector<T> textures;
  for (int k = 0; k < 5; ++k) {
    textures.push_back(generate_texture(
        tape, model, latent, sample_noise<double>(rng, 16)));
  }
  double mean_pairwise = 0;
  int pairs = 0;
  for (std::size_t i = 0; i < textures.size(); ++i) {
    for (std::size_t j = i + 1; j < textures.size(); ++j) {
      double d = 0;
      for (std::size_t t = 0; t < textures[i].size(); ++t) {
        d += std::abs((*textures[i].data)[t] - (*textures[j].data)[t]);
      }
      mean_pairwise += d / textures[i].size();
      ++pairs;
    }
  }
  REQUIRE(mean_pairwise / pairs > 0.0);
}
