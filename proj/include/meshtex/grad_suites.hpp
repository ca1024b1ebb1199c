// The standard finite-difference suites behind `grad-check`: one per
// differentiable operation, the renderer scatter-add at its tighter
// tolerance, and an end-to-end check of the generator gradient on a tiny
// scaled-down instance.
#pragma once

#include <memory>

#include "meshtex/gradcheck.hpp"
#include "meshtex/model.hpp"
#include "meshtex/shapes.hpp"

namespace meshtex {

namespace detail {

inline Tensor<double> suite_tensor(Shape shape, Rng& rng) {
  Tensor<double> t = Tensor<double>::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double mag = rng.uniform(0.2, 1.5);
    (*t.data)[i] = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

}  // namespace detail

inline std::vector<GradSuite> default_grad_suites() {
  using T = Tensor<double>;
  std::vector<GradSuite> suites;

  auto weighted = [](Tape<double>& t, const T& out, const T& g) {
    return t.sum_all(t.mul(out, g));
  };

  suites.push_back({"matmul", 1e-6, [weighted] {
    Rng rng(101);
    const T g = detail::suite_tensor({3, 2}, rng);
    return finite_difference_check(
        [&](Tape<double>& t, const std::vector<T>& in) {
          return weighted(t, t.matmul(in[0], in[1]), g);
        },
        {detail::suite_tensor({3, 4}, rng), detail::suite_tensor({4, 2}, rng)});
  }});

  suites.push_back({"conv2d", 1e-5, [weighted] {
    Rng rng(102);
    const T g = detail::suite_tensor({3, 4, 4}, rng);
    return finite_difference_check(
        [&](Tape<double>& t, const std::vector<T>& in) {
          return weighted(t, t.conv2d(in[0], in[1], 2, 1), g);
        },
        {detail::suite_tensor({2, 8, 8}, rng),
         detail::suite_tensor({3, 2, 3, 3}, rng)});
  }});

  suites.push_back({"activations", 1e-6, [weighted] {
    Rng rng(103);
    GradCheckReport rep;
    for (Act kind :
         {Act::relu, Act::leaky_relu, Act::sigmoid, Act::tanh_}) {
      const T g = detail::suite_tensor({10}, rng);
      rep.merge(finite_difference_check(
          [&](Tape<double>& t, const std::vector<T>& in) {
            return weighted(t, t.activation(in[0], kind), g);
          },
          {detail::suite_tensor({10}, rng)}));
    }
    return rep;
  }});

  suites.push_back({"gcn_conv", 1e-6, [weighted] {
    Rng rng(104);
    const NormalizedAdjacency adj =
        normalize_adjacency(build_face_adjacency(shapes::tetrahedron()));
    const T g = detail::suite_tensor({4, 3}, rng);
    return finite_difference_check(
        [&](Tape<double>& t, const std::vector<T>& in) {
          return weighted(t, gcn_conv(t, adj, in[0], in[1]), g);
        },
        {detail::suite_tensor({4, 5}, rng), detail::suite_tensor({5, 3}, rng)});
  }});

  suites.push_back({"bce_with_logits", 1e-6, [] {
    Rng rng(105);
    T targets = T::zeros({8});
    for (int i = 0; i < 8; ++i) (*targets.data)[i] = i % 2;
    return finite_difference_check(
        [&](Tape<double>& t, const std::vector<T>& in) {
          return t.bce_with_logits(in[0], targets);
        },
        {detail::suite_tensor({8}, rng)});
  }});

  suites.push_back({"instance_norm", 1e-5, [weighted] {
    Rng rng(106);
    const T g = detail::suite_tensor({2, 4, 4}, rng);
    return finite_difference_check(
        [&](Tape<double>& t, const std::vector<T>& in) {
          return weighted(t, t.instance_norm(in[0], in[1], in[2]), g);
        },
        {detail::suite_tensor({2, 4, 4}, rng), detail::suite_tensor({2}, rng),
         detail::suite_tensor({2}, rng)});
  }});

  suites.push_back({"elementwise_and_broadcast", 1e-6, [weighted] {
    Rng rng(107);
    GradCheckReport rep;
    const T g = detail::suite_tensor({3, 4}, rng);
    rep.merge(finite_difference_check(
        [&](Tape<double>& t, const std::vector<T>& in) {
          const T sum = t.add(t.mul(in[0], in[1]), t.scale(in[2], -0.4));
          return weighted(t, t.add_rowvec(sum, in[3]), g);
        },
        {detail::suite_tensor({3, 4}, rng), detail::suite_tensor({3, 4}, rng),
         detail::suite_tensor({3, 4}, rng), detail::suite_tensor({4}, rng)}));
    const T g2 = detail::suite_tensor({2, 3, 3}, rng);
    rep.merge(finite_difference_check(
        [&](Tape<double>& t, const std::vector<T>& in) {
          return weighted(t, t.add_channel_bias(in[0], in[1]), g2);
        },
        {detail::suite_tensor({2, 3, 3}, rng),
         detail::suite_tensor({2}, rng)}));
    const T g3 = detail::suite_tensor({4, 5}, rng);
    rep.merge(finite_difference_check(
        [&](Tape<double>& t, const std::vector<T>& in) {
          return weighted(t, t.replicate_concat(in[0], in[1]), g3);
        },
        {detail::suite_tensor({4, 3}, rng), detail::suite_tensor({2}, rng)}));
    const T g4 = detail::suite_tensor({3}, rng);
    rep.merge(finite_difference_check(
        [&](Tape<double>& t, const std::vector<T>& in) {
          return weighted(t, t.global_avg_pool(in[0]), g4);
        },
        {detail::suite_tensor({3, 4, 4}, rng)}));
    rep.merge(finite_difference_check(
        [&](Tape<double>& t, const std::vector<T>& in) {
          return t.mse(t.hwc_to_chw(in[0]), in[1]);
        },
        {detail::suite_tensor({3, 2, 3}, rng),
         detail::suite_tensor({3, 3, 2}, rng)}));
    return rep;
  }});

  suites.push_back({"renderer_scatter", 1e-10, [] {
    Rng rng(108);
    const Mesh mesh = normalize_mesh(shapes::tetrahedron());
    const auto ring = make_view_ring(2, 20.0, 2.2, 16, 16);
    FaceShading shading;
    shading.scale.assign(mesh.face_count(), 1.0);
    GradCheckReport rep;
    for (const Camera& cam : ring) {
      const RenderBuffers buf = rasterize(mesh, cam);
      T weights = T::zeros({16, 16, 3});
      for (std::size_t i = 0; i < weights.size(); ++i) {
        (*weights.data)[i] = rng.uniform(-1, 1);
      }
      T colors = T::zeros({mesh.face_count(), 3});
      for (std::size_t i = 0; i < colors.size(); ++i) {
        (*colors.data)[i] = rng.uniform(0.1, 0.9);
      }
      rep.merge(finite_difference_check(
          [&](Tape<double>& t, const std::vector<T>& in) {
            return t.sum_all(
                t.mul(shade_flat(t, buf, in[0], shading), weights));
          },
          {colors}, 1e-4, /*atol=*/0.0));
    }
    return rep;
  }});

  suites.push_back({"end_to_end_generator", 1e-4, [] {
    // Tiny instance: one (jittered) tetrahedron, 8x8 renders, 2-wide
    // layers. The jitter plus randomized parameters keep pre-activations
    // away from the leaky-ReLU kink and give every layer a live gradient
    // (a regular tetrahedron's graph-averaged features vanish exactly).
    Rng rng(109);
    const int image = 8, hidden = 2, noise = 2;
    DatasetEntry entry;
    entry.name = "tiny";
    entry.mesh = shapes::jittered(shapes::tetrahedron(), rng);
    entry.colors = structured_colors(entry.mesh);
    const auto ring = make_view_ring(2, 20.0, 2.2, image, image);
    const FeatureExtractor<double> fe =
        FeatureExtractor<double>::make_seeded();
    const TrainingMesh<double> tm =
        prepare_training_mesh(entry, ring, ShadingConfig{}, fe);
    auto base = std::make_shared<ModelParams<double>>(
        ModelParams<double>::make(GeneratorVariant::ggan, rng, noise, image,
                                  hidden, /*disc_base=*/2,
                                  /*disc_layers=*/2));
    const T z = sample_noise<double>(rng, noise);
    const double lambda = 0.1;

    // Flatten the generator-side parameters (re-randomized away from
    // zero), then rebuild the model inside the probe so finite differences
    // see the whole pipeline.
    std::vector<T> inputs;
    base->visit_generator([&inputs, &rng](const std::string&, T& t) {
      T fresh = T::zeros(t.shape);
      for (std::size_t i = 0; i < fresh.size(); ++i) {
        const double mag = rng.uniform(0.05, 0.6);
        (*fresh.data)[i] = rng.uniform() < 0.5 ? -mag : mag;
      }
      inputs.push_back(fresh);
    });
    return finite_difference_check(
        [base, &tm, z, lambda, &fe](Tape<double>& t,
                                    const std::vector<T>& in) {
          ModelParams<double> probe = *base;
          std::size_t idx = 0;
          probe.visit_generator([&](const std::string&, T& p) {
            p = in[idx++];
          });
          const T latent = encode_parts(t, probe.encoder, tm.adj,
                                        tm.node_feats);
          const T colors = generate_texture(t, probe, latent, z, &tm.adj);
          std::vector<T> logits, percs;
          for (std::size_t v = 0; v < tm.buffers.size(); ++v) {
            const T img = shade_flat(t, tm.buffers[v], colors, tm.shading);
            const T chw = t.hwc_to_chw(img);
            logits.push_back(discriminate(t, probe.disc, chw));
            percs.push_back(t.mse(fe.features(t, chw), tm.real_feats[v]));
          }
          const T adv = t.bce_with_logits(
              t.stack_scalars(logits),
              T::full({static_cast<int>(logits.size())}, 1.0));
          const T perc = t.mean_all(t.stack_scalars(percs));
          return t.add(adv, t.scale(perc, lambda));
        },
        // Deep composition: some parameter gradients are legitimately
        // ~1e-8, below central-difference noise, hence the atol floor.
        inputs, 1e-5, /*atol=*/1e-9);
  }});

  return suites;
}

}  // namespace meshtex
