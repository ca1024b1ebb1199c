// The graph-conditioned texture GAN.
//
// Encoder: 3 graph-convolution layers (6 -> hidden), leaky ReLU, producing
// an unsupervised per-face part representation. The sampled noise vector
// is replicated across faces and concatenated onto the latent rows, which
// is what lets one parameter set run on meshes with any face count.
//
// Two generator variants share that conditioning: "ggan" is a 7-layer MLP
// acting per face with additive skip connections around layers 2-3 and
// 4-5; "gcn" is a 7-layer graph-convolution stack without skips. Both end
// in a sigmoid, one RGB triple per face.
//
// Discriminator: DCGAN-style stack of stride-2 kernel-4 convolutions
// (base, 2x, 4x, 8x channels), leaky ReLU, instance normalization after
// layers 2-4 (single-image batches make batch statistics useless), then a
// dense layer to one logit.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "meshtex/adam.hpp"
#include "meshtex/dataset.hpp"
#include "meshtex/face_graph.hpp"
#include "meshtex/feature_extractor.hpp"
#include "meshtex/nn.hpp"
#include "meshtex/renderer.hpp"
#include "meshtex/rng.hpp"
#include "meshtex/tape.hpp"

namespace meshtex {

enum class GeneratorVariant { ggan, gcn };

inline GeneratorVariant parse_variant(const std::string& s) {
  if (s == "ggan") return GeneratorVariant::ggan;
  if (s == "gcn") return GeneratorVariant::gcn;
  throw ConfigError("unknown generator variant '" + s + "'");
}

inline const char* variant_name(GeneratorVariant v) {
  return v == GeneratorVariant::ggan ? "ggan" : "gcn";
}

// i.i.d. standard normal noise vector.
template <typename S>
Tensor<S> sample_noise(Rng& rng, int dim) {
  Tensor<S> z = Tensor<S>::zeros({dim});
  for (int i = 0; i < dim; ++i) {
    (*z.data)[i] = static_cast<S>(rng.normal());
  }
  return z;
}

template <typename S>
struct Encoder {
  GraphConvLayer<S> l1, l2, l3;

  static Encoder make(Rng& rng, int in = kNodeFeatureDim, int hidden = 64) {
    Encoder e;
    e.l1 = GraphConvLayer<S>::make(in, hidden, rng);
    e.l2 = GraphConvLayer<S>::make(hidden, hidden, rng);
    e.l3 = GraphConvLayer<S>::make(hidden, hidden, rng);
    return e;
  }

  Tensor<S> forward(Tape<S>& tape, const NormalizedAdjacency& adj,
                    const Tensor<S>& feats) const {
    Tensor<S> h = tape.activation(l1.forward(tape, adj, feats),
                                  Act::leaky_relu);
    h = tape.activation(l2.forward(tape, adj, h), Act::leaky_relu);
    return tape.activation(l3.forward(tape, adj, h), Act::leaky_relu);
  }

  void visit(const ParamVisitor<S>& fn) {
    l1.visit("enc.l1", fn);
    l2.visit("enc.l2", fn);
    l3.visit("enc.l3", fn);
  }

  Encoder watched(Tape<S>& tape) const {
    Encoder e = *this;
    e.visit([&tape](const std::string&, Tensor<S>& t) { t = tape.watch(t); });
    return e;
  }
};

// Per-face MLP with additive skips every two layers.
template <typename S>
struct GganGenerator {
  std::array<DenseLayer<S>, 7> layers;

  static GganGenerator make(Rng& rng, int in, int hidden = 64, int out = 3) {
    GganGenerator g;
    g.layers[0] = DenseLayer<S>::make(in, hidden, rng);
    for (int i = 1; i < 6; ++i) {
      g.layers[i] = DenseLayer<S>::make(hidden, hidden, rng);
    }
    g.layers[6] = DenseLayer<S>::make(hidden, out, rng);
    return g;
  }

  Tensor<S> forward(Tape<S>& tape, const Tensor<S>& x) const {
    Tensor<S> h1 =
        tape.activation(layers[0].forward(tape, x), Act::leaky_relu);
    // Residual block over layers 2-3.
    Tensor<S> h = tape.activation(layers[1].forward(tape, h1), Act::leaky_relu);
    h = tape.activation(layers[2].forward(tape, h), Act::leaky_relu);
    Tensor<S> h3 = tape.add(h, h1);
    // Residual block over layers 4-5.
    h = tape.activation(layers[3].forward(tape, h3), Act::leaky_relu);
    h = tape.activation(layers[4].forward(tape, h), Act::leaky_relu);
    Tensor<S> h5 = tape.add(h, h3);
    h = tape.activation(layers[5].forward(tape, h5), Act::leaky_relu);
    return tape.activation(layers[6].forward(tape, h), Act::sigmoid);
  }

  void visit(const ParamVisitor<S>& fn) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].visit("gen.mlp.l" + std::to_string(i + 1), fn);
    }
  }

  GganGenerator watched(Tape<S>& tape) const {
    GganGenerator g = *this;
    g.visit([&tape](const std::string&, Tensor<S>& t) { t = tape.watch(t); });
    return g;
  }
};

// 7-layer graph-convolution generator, no skip connections.
template <typename S>
struct GcnGenerator {
  std::array<GraphConvLayer<S>, 7> layers;

  static GcnGenerator make(Rng& rng, int in, int hidden = 64, int out = 3) {
    GcnGenerator g;
    g.layers[0] = GraphConvLayer<S>::make(in, hidden, rng);
    for (int i = 1; i < 6; ++i) {
      g.layers[i] = GraphConvLayer<S>::make(hidden, hidden, rng);
    }
    g.layers[6] = GraphConvLayer<S>::make(hidden, out, rng);
    return g;
  }

  Tensor<S> forward(Tape<S>& tape, const NormalizedAdjacency& adj,
                    const Tensor<S>& x) const {
    Tensor<S> h = x;
    for (int i = 0; i < 6; ++i) {
      h = tape.activation(layers[i].forward(tape, adj, h), Act::leaky_relu);
    }
    return tape.activation(layers[6].forward(tape, adj, h), Act::sigmoid);
  }

  void visit(const ParamVisitor<S>& fn) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].visit("gen.gcn.l" + std::to_string(i + 1), fn);
    }
  }

  GcnGenerator watched(Tape<S>& tape) const {
    GcnGenerator g = *this;
    g.visit([&tape](const std::string&, Tensor<S>& t) { t = tape.watch(t); });
    return g;
  }
};

template <typename S>
struct Discriminator {
  std::vector<Conv2dLayer<S>> convs;
  std::vector<InstanceNormLayer<S>> norms;  // after conv 2..n
  DenseLayer<S> fc;
  int image_size = 64;

  // base scales the channel widths (default 32 -> 32/64/128/256); layers
  // sets the stride-2 depth so tiny test instances can run on small
  // renders. image_size must be divisible by 2^layers.
  static Discriminator make(Rng& rng, int image_size = 64, int base = 32,
                            int num_layers = 4) {
    if (image_size % (1 << num_layers) != 0 ||
        image_size < (1 << num_layers)) {
      throw ConfigError("discriminator needs image_size divisible by 2^" +
                        std::to_string(num_layers));
    }
    Discriminator d;
    d.image_size = image_size;
    int in = 3;
    int out = base;
    for (int i = 0; i < num_layers; ++i) {
      d.convs.push_back(Conv2dLayer<S>::make(in, out, 4, 2, 1, rng));
      if (i > 0) {
        d.norms.push_back(InstanceNormLayer<S>::make(out));
      }
      in = out;
      out *= 2;
    }
    const int final_side = image_size >> num_layers;
    d.fc = DenseLayer<S>::make(in * final_side * final_side, 1, rng);
    return d;
  }

  Tensor<S> forward(Tape<S>& tape, const Tensor<S>& chw) const {
    if (chw.ndim() != 3 || chw.dim(0) != 3 || chw.dim(1) != image_size ||
        chw.dim(2) != image_size) {
      throw ShapeError("discriminator expects (3," +
                       std::to_string(image_size) + "," +
                       std::to_string(image_size) + "), got " +
                       shape_str(chw.shape));
    }
    Tensor<S> h = chw;
    for (std::size_t i = 0; i < convs.size(); ++i) {
      h = convs[i].forward(tape, h);
      if (i > 0) {
        h = norms[i - 1].forward(tape, h);
      }
      h = tape.activation(h, Act::leaky_relu);
    }
    const int flat = static_cast<int>(h.size());
    h = tape.reshape(h, {1, flat});
    h = fc.forward(tape, h);
    return tape.reshape(h, {1});  // scalar logit
  }

  void visit(const ParamVisitor<S>& fn) {
    for (std::size_t i = 0; i < convs.size(); ++i) {
      convs[i].visit("disc.c" + std::to_string(i + 1), fn);
    }
    for (std::size_t i = 0; i < norms.size(); ++i) {
      norms[i].visit("disc.n" + std::to_string(i + 2), fn);
    }
    fc.visit("disc.fc", fn);
  }

  Discriminator watched(Tape<S>& tape) const {
    Discriminator d = *this;
    d.visit([&tape](const std::string&, Tensor<S>& t) { t = tape.watch(t); });
    return d;
  }
};

template <typename S>
struct ModelParams {
  GeneratorVariant variant = GeneratorVariant::ggan;
  int noise_dim = 16;
  int hidden = 64;
  Encoder<S> encoder;
  GganGenerator<S> mlp;
  GcnGenerator<S> gcn;
  Discriminator<S> disc;

  static ModelParams make(GeneratorVariant variant, Rng& rng,
                          int noise_dim = 16, int image_size = 64,
                          int hidden = 64, int disc_base = 32,
                          int disc_layers = 4) {
    ModelParams m;
    m.variant = variant;
    m.noise_dim = noise_dim;
    m.hidden = hidden;
    m.encoder = Encoder<S>::make(rng, kNodeFeatureDim, hidden);
    if (variant == GeneratorVariant::ggan) {
      m.mlp = GganGenerator<S>::make(rng, hidden + noise_dim, hidden);
    } else {
      m.gcn = GcnGenerator<S>::make(rng, hidden + noise_dim, hidden);
    }
    m.disc = Discriminator<S>::make(rng, image_size, disc_base, disc_layers);
    return m;
  }

  // Encoder plus the active generator: the joint gradient path.
  void visit_generator(const ParamVisitor<S>& fn) {
    encoder.visit(fn);
    if (variant == GeneratorVariant::ggan) {
      mlp.visit(fn);
    } else {
      gcn.visit(fn);
    }
  }

  void visit_all(const ParamVisitor<S>& fn) {
    visit_generator(fn);
    disc.visit(fn);
  }
};

// 3-layer GCN part encoding of the mesh graph.
template <typename S>
Tensor<S> encode_parts(Tape<S>& tape, const Encoder<S>& encoder,
                       const NormalizedAdjacency& adj,
                       const Tensor<S>& node_feats) {
  return encoder.forward(tape, adj, node_feats);
}

// latent (F x hidden) + noise z (d) -> colors (F x 3) in (0,1). The same
// weights work for any F; the gcn variant additionally needs the mesh's
// adjacency.
template <typename S>
Tensor<S> generate_texture(Tape<S>& tape, const ModelParams<S>& model,
                           const Tensor<S>& latent, const Tensor<S>& z,
                           const NormalizedAdjacency* adj = nullptr) {
  const Tensor<S> conditioned = tape.replicate_concat(latent, z);
  if (model.variant == GeneratorVariant::ggan) {
    return model.mlp.forward(tape, conditioned);
  }
  if (adj == nullptr) {
    throw ShapeError("gcn generator variant needs the mesh adjacency");
  }
  return model.gcn.forward(tape, *adj, conditioned);
}

template <typename S>
Tensor<S> discriminate(Tape<S>& tape, const Discriminator<S>& disc,
                       const Tensor<S>& chw) {
  return disc.forward(tape, chw);
}

template <typename S>
struct LossBundle {
  Tensor<S> loss_d;   // bce(D(real),1) + bce(D(fake),0)
  Tensor<S> loss_g;   // bce(D(fake),1) + lambda * perceptual
  double perceptual = 0.0;  // pre-lambda feature MSE, averaged over views
  double d_real = 0.0;      // mean sigmoid(D(real))
  double d_fake = 0.0;
};

// Adversarial losses over paired per-view renders, non-saturating
// generator objective, plus the perceptual feature term. Feature vectors
// are paired per view (same mesh, same camera on both sides).
template <typename S>
LossBundle<S> compute_losses(Tape<S>& tape, const Discriminator<S>& disc,
                             const std::vector<Tensor<S>>& real_chw,
                             const std::vector<Tensor<S>>& fake_chw,
                             const std::vector<Tensor<S>>& feats_real,
                             const std::vector<Tensor<S>>& feats_fake,
                             double lambda) {
  if (real_chw.size() != fake_chw.size() || real_chw.empty()) {
    throw ShapeError("compute_losses: unpaired view counts");
  }
  if (feats_real.size() != feats_fake.size()) {
    throw ShapeError("compute_losses: unpaired feature counts");
  }
  const int views = static_cast<int>(real_chw.size());
  std::vector<Tensor<S>> real_logits, fake_logits;
  for (int v = 0; v < views; ++v) {
    real_logits.push_back(discriminate(tape, disc, real_chw[v]));
    fake_logits.push_back(discriminate(tape, disc, fake_chw[v]));
  }
  const Tensor<S> real_stack = tape.stack_scalars(real_logits);
  const Tensor<S> fake_stack = tape.stack_scalars(fake_logits);
  const Tensor<S> ones = Tensor<S>::full({views}, S(1));
  const Tensor<S> zeros = Tensor<S>::zeros({views});

  LossBundle<S> out;
  out.loss_d = tape.add(tape.bce_with_logits(real_stack, ones),
                        tape.bce_with_logits(fake_stack, zeros));
  Tensor<S> loss_g = tape.bce_with_logits(fake_stack, ones);
  if (!feats_real.empty()) {
    std::vector<Tensor<S>> per_view;
    for (std::size_t v = 0; v < feats_real.size(); ++v) {
      per_view.push_back(tape.mse(feats_fake[v], feats_real[v]));
    }
    const Tensor<S> perc = tape.mean_all(tape.stack_scalars(per_view));
    out.perceptual = static_cast<double>(perc.item());
    if (lambda > 0.0) {
      loss_g = tape.add(loss_g, tape.scale(perc, static_cast<S>(lambda)));
    }
  }
  out.loss_g = loss_g;
  for (int v = 0; v < views; ++v) {
    out.d_real += detail::stable_sigmoid((*real_stack.data)[v]);
    out.d_fake += detail::stable_sigmoid((*fake_stack.data)[v]);
  }
  out.d_real /= views;
  out.d_fake /= views;
  return out;
}

// Everything fixed per mesh across a run: graph, adjacency, per-view
// rasterization buffers, ground-truth renders and their features. Owned by
// the caller and referenced by step tapes, so it must stay alive and
// unmoved while a step is in flight.
template <typename S>
struct TrainingMesh {
  std::string name;
  Mesh mesh;
  FaceGraph graph;
  NormalizedAdjacency adj;
  FaceShading shading;
  Tensor<S> node_feats;                 // F x 6
  Tensor<S> real_colors;                // F x 3
  std::vector<RenderBuffers> buffers;   // one per ring view
  std::vector<Tensor<S>> real_chw;      // ground-truth renders
  std::vector<Tensor<S>> real_feats;    // extractor features of the above
};

template <typename S>
TrainingMesh<S> prepare_training_mesh(const DatasetEntry& entry,
                                      const std::vector<Camera>& ring,
                                      const ShadingConfig& shading_cfg,
                                      const FeatureExtractor<S>& fe) {
  TrainingMesh<S> tm;
  tm.name = entry.name;
  tm.mesh = entry.mesh;
  tm.graph = build_face_adjacency(tm.mesh);
  tm.adj = normalize_adjacency(tm.graph);
  tm.shading = make_face_shading(tm.mesh, shading_cfg);
  Tensor<double> feats64 = Tensor<double>::from(
      {tm.graph.num_nodes, kNodeFeatureDim},
      std::vector<double>(tm.graph.node_features));
  tm.node_feats = feats64.template cast<S>();
  tm.real_colors = entry.colors.template cast<S>();
  for (const Camera& cam : ring) {
    tm.buffers.push_back(rasterize(tm.mesh, cam));
    Tape<S> tape(/*recording=*/false);
    const Tensor<S> img =
        shade_flat(tape, tm.buffers.back(), tm.real_colors, tm.shading);
    tm.real_chw.push_back(tape.hwc_to_chw(img));
    tm.real_feats.push_back(fe.features(tape, tm.real_chw.back()));
  }
  return tm;
}

struct TrainSettings {
  GeneratorVariant variant = GeneratorVariant::ggan;
  int noise_dim = 16;
  double lambda_perc = 0.1;
  bool reconstruction = false;  // adversarial off, pure image L2
};

struct StepMetrics {
  double loss_d = 0.0;
  double loss_g = 0.0;
  double perceptual = 0.0;
  double d_real = 0.0;
  double d_fake = 0.0;
};

// Generator forward without gradient recording (for the discriminator
// phase and for inference).
template <typename S>
Tensor<S> generate_texture_nograd(const ModelParams<S>& model,
                                  const TrainingMesh<S>& tm,
                                  const Tensor<S>& z) {
  Tape<S> tape(/*recording=*/false);
  const Tensor<S> latent =
      encode_parts(tape, model.encoder, tm.adj, tm.node_feats);
  return generate_texture(tape, model, latent, z, &tm.adj);
}

// One discriminator update then one generator(+encoder) update, both over
// every configured view of one mesh. Noise is sampled once per mesh per
// step. In reconstruction mode the discriminator is untouched and the
// generator minimizes the mean per-view image L2 against the ground-truth
// renders.
template <typename S>
StepMetrics train_step(ModelParams<S>& model, AdamOptimizer<S>& opt_g,
                       AdamOptimizer<S>& opt_d, const TrainingMesh<S>& tm,
                       const TrainSettings& settings,
                       const FeatureExtractor<S>& fe, Rng& rng) {
  const int views = static_cast<int>(tm.buffers.size());
  StepMetrics metrics;
  const Tensor<S> z = sample_noise<S>(rng, settings.noise_dim);

  if (!settings.reconstruction) {
    // Discriminator phase: fakes are detached (no-grad generator pass).
    const Tensor<S> fake_colors = generate_texture_nograd(model, tm, z);
    Tape<S> tape;
    Discriminator<S> wdisc = model.disc.watched(tape);
    std::vector<Tensor<S>> fake_chw, fake_feats;
    for (int v = 0; v < views; ++v) {
      const Tensor<S> img =
          shade_flat(tape, tm.buffers[v], fake_colors, tm.shading);
      fake_chw.push_back(tape.hwc_to_chw(img));
      fake_feats.push_back(fe.features(tape, fake_chw.back()));
    }
    const LossBundle<S> losses =
        compute_losses(tape, wdisc, tm.real_chw, fake_chw, tm.real_feats,
                       fake_feats, settings.lambda_perc);
    tape.backward(losses.loss_d);
    std::vector<Tensor<S>> grads;
    wdisc.visit([&](const std::string&, Tensor<S>& t) {
      grads.push_back(tape.grad(t));
    });
    opt_d.step(grads);
    metrics.loss_d = static_cast<double>(losses.loss_d.item());
    metrics.perceptual = losses.perceptual;
    metrics.d_real = losses.d_real;
    metrics.d_fake = losses.d_fake;
  }

  // Generator phase (the discriminator, already updated, stays constant).
  {
    Tape<S> tape;
    ModelParams<S> wmodel = model;
    wmodel.encoder = model.encoder.watched(tape);
    if (model.variant == GeneratorVariant::ggan) {
      wmodel.mlp = model.mlp.watched(tape);
    } else {
      wmodel.gcn = model.gcn.watched(tape);
    }
    const Tensor<S> latent =
        encode_parts(tape, wmodel.encoder, tm.adj, tm.node_feats);
    const Tensor<S> colors =
        generate_texture(tape, wmodel, latent, z, &tm.adj);

    Tensor<S> loss_g;
    if (settings.reconstruction) {
      std::vector<Tensor<S>> per_view;
      for (int v = 0; v < views; ++v) {
        const Tensor<S> img =
            shade_flat(tape, tm.buffers[v], colors, tm.shading);
        per_view.push_back(
            tape.mse(tape.hwc_to_chw(img), tm.real_chw[v]));
      }
      loss_g = tape.mean_all(tape.stack_scalars(per_view));
    } else {
      std::vector<Tensor<S>> logits, per_view_perc;
      for (int v = 0; v < views; ++v) {
        const Tensor<S> img =
            shade_flat(tape, tm.buffers[v], colors, tm.shading);
        const Tensor<S> chw = tape.hwc_to_chw(img);
        logits.push_back(discriminate(tape, model.disc, chw));
        if (settings.lambda_perc > 0.0) {
          per_view_perc.push_back(
              tape.mse(fe.features(tape, chw), tm.real_feats[v]));
        }
      }
      const Tensor<S> fake_stack = tape.stack_scalars(logits);
      loss_g = tape.bce_with_logits(fake_stack,
                                    Tensor<S>::full({views}, S(1)));
      if (!per_view_perc.empty()) {
        const Tensor<S> perc =
            tape.mean_all(tape.stack_scalars(per_view_perc));
        metrics.perceptual = static_cast<double>(perc.item());
        loss_g = tape.add(
            loss_g, tape.scale(perc, static_cast<S>(settings.lambda_perc)));
      }
    }
    tape.backward(loss_g);
    std::vector<Tensor<S>> grads;
    wmodel.visit_generator([&](const std::string&, Tensor<S>& t) {
      grads.push_back(tape.grad(t));
    });
    opt_g.step(grads);
    metrics.loss_g = static_cast<double>(loss_g.item());
  }
  return metrics;
}

}  // namespace meshtex
