// Batch entry points behind the CLI subcommands. Everything here is
// deterministic given (config, seed): dataset entries are processed in
// sorted name order, all randomness flows from one seeded generator, and
// metrics are printed with round-trippable precision.
#pragma once

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "meshtex/checkpoint.hpp"
#include "meshtex/config.hpp"
#include "meshtex/dataset.hpp"
#include "meshtex/evaluation.hpp"
#include "meshtex/image_io.hpp"
#include "meshtex/model.hpp"

namespace meshtex {

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// ---- model checkpointing ------------------------------------------------

template <typename S>
TensorMap model_to_checkpoint(ModelParams<S>& model, AdamOptimizer<S>& opt_g,
                              AdamOptimizer<S>& opt_d, const Rng& rng,
                              std::uint64_t seed, long step, int image_size) {
  TensorMap map;
  map.emplace("meta.variant",
              Tensor<double>::scalar(
                  model.variant == GeneratorVariant::ggan ? 0.0 : 1.0));
  map.emplace("meta.noise_dim",
              Tensor<double>::scalar(static_cast<double>(model.noise_dim)));
  map.emplace("meta.hidden",
              Tensor<double>::scalar(static_cast<double>(model.hidden)));
  map.emplace("meta.image_size",
              Tensor<double>::scalar(static_cast<double>(image_size)));
  map.emplace("meta.step", Tensor<double>::scalar(static_cast<double>(step)));
  Tensor<double> seed_t = Tensor<double>::zeros({1});
  (*seed_t.data)[0] = std::bit_cast<double>(seed);
  map.emplace("meta.seed", seed_t);
  map.emplace("rng.state", rng_state_tensor(rng));
  model.visit_all([&map](const std::string& name, Tensor<S>& t) {
    map.emplace(name, t.template cast<double>());
  });
  auto put_opt = [&map](AdamOptimizer<S>& opt, const std::string& prefix) {
    map.emplace(prefix + ".t", Tensor<double>::scalar(
                                   static_cast<double>(opt.step_count())));
    for (std::size_t i = 0; i < opt.param_count(); ++i) {
      map.emplace(prefix + "." + opt.name(i) + ".m",
                  opt.slot(i).m.template cast<double>());
      map.emplace(prefix + "." + opt.name(i) + ".v",
                  opt.slot(i).v.template cast<double>());
    }
  };
  put_opt(opt_g, "adam.g");
  put_opt(opt_d, "adam.d");
  return map;
}

struct CheckpointMeta {
  GeneratorVariant variant = GeneratorVariant::ggan;
  int noise_dim = 16;
  int hidden = 64;
  int image_size = 64;
  long step = 0;
  std::uint64_t seed = 0;
};

inline CheckpointMeta read_checkpoint_meta(const TensorMap& map) {
  CheckpointMeta meta;
  meta.variant = checkpoint_get(map, "meta.variant").item() == 0.0
                     ? GeneratorVariant::ggan
                     : GeneratorVariant::gcn;
  meta.noise_dim =
      static_cast<int>(checkpoint_get(map, "meta.noise_dim").item());
  meta.hidden = static_cast<int>(checkpoint_get(map, "meta.hidden").item());
  meta.image_size =
      static_cast<int>(checkpoint_get(map, "meta.image_size").item());
  meta.step = static_cast<long>(checkpoint_get(map, "meta.step").item());
  meta.seed =
      std::bit_cast<std::uint64_t>((*checkpoint_get(map, "meta.seed").data)[0]);
  return meta;
}

template <typename S>
void assign_params_from_checkpoint(const TensorMap& map,
                                   ModelParams<S>& model) {
  model.visit_all([&map](const std::string& name, Tensor<S>& t) {
    const Tensor<double>& src = checkpoint_get(map, name);
    if (src.shape != t.shape) {
      throw DataError("checkpoint tensor '" + name + "' has shape " +
                      shape_str(src.shape) + ", expected " +
                      shape_str(t.shape));
    }
    t = src.template cast<S>();
  });
}

template <typename S>
ModelParams<S> model_from_checkpoint(const TensorMap& map) {
  const CheckpointMeta meta = read_checkpoint_meta(map);
  Rng scratch(0);  // weights are overwritten below
  ModelParams<S> model =
      ModelParams<S>::make(meta.variant, scratch, meta.noise_dim,
                           meta.image_size, meta.hidden);
  assign_params_from_checkpoint(map, model);
  return model;
}

template <typename S>
void restore_optimizer(const TensorMap& map, const std::string& prefix,
                       AdamOptimizer<S>& opt) {
  opt.set_step_count(
      static_cast<long>(checkpoint_get(map, prefix + ".t").item()));
  for (std::size_t i = 0; i < opt.param_count(); ++i) {
    opt.slot(i).m =
        checkpoint_get(map, prefix + "." + opt.name(i) + ".m")
            .template cast<S>();
    opt.slot(i).v =
        checkpoint_get(map, prefix + "." + opt.name(i) + ".v")
            .template cast<S>();
  }
}

// ---- shared run wiring ---------------------------------------------------

inline std::vector<Camera> ring_from_config(const RunConfig& cfg) {
  return make_view_ring(cfg.views, cfg.elevation_deg, cfg.distance,
                        cfg.image_size, cfg.image_size, cfg.vfov_deg);
}

inline ShadingConfig shading_from_config(const RunConfig& cfg) {
  ShadingConfig sc;
  sc.mode = cfg.shading == "lambert" ? ShadeMode::lambert : ShadeMode::unlit;
  sc.background = parse_background(cfg.background);
  return sc;
}

// ---- train ----------------------------------------------------------------

template <typename S>
void run_train_impl(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  const std::vector<DatasetEntry> entries = load_dataset(cfg.dataset);
  const std::vector<Camera> ring = ring_from_config(cfg);
  const ShadingConfig shading_cfg = shading_from_config(cfg);
  const FeatureExtractor<S> fe = FeatureExtractor<S>::make_seeded();

  std::vector<TrainingMesh<S>> meshes;
  meshes.reserve(entries.size());
  for (const DatasetEntry& e : entries) {
    meshes.push_back(prepare_training_mesh(e, ring, shading_cfg, fe));
  }

  Rng rng(cfg.seed);
  ModelParams<S> model = ModelParams<S>::make(
      parse_variant(cfg.generator), rng, cfg.noise_dim, cfg.image_size);
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  AdamOptimizer<S> opt_g(adam_cfg), opt_d(adam_cfg);
  model.visit_generator([&](const std::string& name, Tensor<S>& t) {
    opt_g.register_param(name, &t);
  });
  model.disc.visit([&](const std::string& name, Tensor<S>& t) {
    opt_d.register_param(name, &t);
  });

  TrainSettings settings;
  settings.variant = model.variant;
  settings.noise_dim = cfg.noise_dim;
  settings.lambda_perc = cfg.lambda_perc;
  settings.reconstruction = cfg.mode == "reconstruction";

  fs::create_directories(cfg.out_dir);
  {
    std::ofstream cfg_out(fs::path(cfg.out_dir) / "config.resolved");
    cfg_out << serialize_config(cfg);
  }
  std::ofstream csv(fs::path(cfg.out_dir) / "metrics.csv");
  csv << "step,loss_d,loss_g,perc,d_real,d_fake\n";

  auto save = [&](const std::string& name, long step) {
    save_checkpoint((fs::path(cfg.out_dir) / name).string(),
                    model_to_checkpoint(model, opt_g, opt_d, rng, cfg.seed,
                                        step, cfg.image_size));
  };

  try {
    for (long step = 0; step < cfg.steps; ++step) {
      const TrainingMesh<S>& tm = meshes[step % meshes.size()];
      const StepMetrics m =
          train_step(model, opt_g, opt_d, tm, settings, fe, rng);
      csv << step << "," << detail::fmt_double(m.loss_d) << ","
          << detail::fmt_double(m.loss_g) << ","
          << detail::fmt_double(m.perceptual) << ","
          << detail::fmt_double(m.d_real) << ","
          << detail::fmt_double(m.d_fake) << "\n";
      if (cfg.checkpoint_interval > 0 &&
          (step + 1) % cfg.checkpoint_interval == 0 &&
          step + 1 < cfg.steps) {
        save("ckpt_" + std::to_string(step + 1) + ".ckpt", step + 1);
      }
    }
  } catch (const NumericalError&) {
    // Keep the evidence: partial metrics plus the state that blew up.
    csv.flush();
    save("crash.ckpt", -1);
    throw;
  }
  csv.flush();
  save("final.ckpt", cfg.steps);
}

inline void run_train(const RunConfig& cfg) {
  validate_config(cfg);
  if (cfg.dataset.empty()) {
    throw ConfigError("train requires a dataset directory");
  }
  if (cfg.numeric == "f32") {
    run_train_impl<float>(cfg);
  } else {
    run_train_impl<double>(cfg);
  }
}

// ---- generate ---------------------------------------------------------------

// Loads a checkpoint, generates one texture for the mesh with the given
// seed and writes it in facecolors format. Optionally renders the textured
// mesh from the ring views as PPM files.
inline void run_generate(const std::string& checkpoint_path,
                         const std::string& mesh_path, std::uint64_t seed,
                         const std::string& out_path,
                         const std::string& render_dir, const RunConfig& cfg) {
  const TensorMap map = load_checkpoint(checkpoint_path);
  const ModelParams<double> model = model_from_checkpoint<double>(map);

  std::ifstream is(mesh_path);
  if (!is) {
    throw DataError("cannot open mesh '" + mesh_path + "'");
  }
  std::ostringstream text;
  text << is.rdbuf();
  const Mesh mesh = load_obj(text.str());
  const FaceGraph graph = build_face_adjacency(mesh);
  const NormalizedAdjacency adj = normalize_adjacency(graph);
  const Tensor<double> feats = Tensor<double>::from(
      {graph.num_nodes, kNodeFeatureDim},
      std::vector<double>(graph.node_features));

  Rng rng(seed);
  const Tensor<double> z = sample_noise<double>(rng, model.noise_dim);
  Tape<double> tape(/*recording=*/false);
  const Tensor<double> latent = encode_parts(tape, model.encoder, adj, feats);
  const Tensor<double> colors = generate_texture(tape, model, latent, z, &adj);
  write_facecolors(out_path, colors);

  if (!render_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(render_dir);
    const std::vector<Camera> ring = ring_from_config(cfg);
    const FaceShading shading =
        make_face_shading(mesh, shading_from_config(cfg));
    for (std::size_t v = 0; v < ring.size(); ++v) {
      const RenderBuffers buf = render(mesh, ring[v], colors, shading);
      char name[32];
      std::snprintf(name, sizeof(name), "view_%02zu.ppm", v);
      write_ppm((fs::path(render_dir) / name).string(), buf.width,
                buf.height, buf.image.data());
    }
  }
}

// ---- render -----------------------------------------------------------------

// Renders a mesh with a facecolors file from the ring views.
inline void run_render(const std::string& mesh_path,
                       const std::string& colors_path,
                       const std::string& out_dir, bool dump_index,
                       const RunConfig& cfg) {
  std::ifstream is(mesh_path);
  if (!is) {
    throw DataError("cannot open mesh '" + mesh_path + "'");
  }
  std::ostringstream text;
  text << is.rdbuf();
  const Mesh mesh = load_obj(text.str());
  const Tensor<double> colors = read_facecolors(colors_path);
  if (colors.rows() != mesh.face_count()) {
    throw DataError("facecolors has " + std::to_string(colors.rows()) +
                    " rows but the mesh has " +
                    std::to_string(mesh.face_count()) + " faces");
  }
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::vector<Camera> ring = ring_from_config(cfg);
  const FaceShading shading =
      make_face_shading(mesh, shading_from_config(cfg));
  for (std::size_t v = 0; v < ring.size(); ++v) {
    const RenderBuffers buf = render(mesh, ring[v], colors, shading);
    char name[32];
    std::snprintf(name, sizeof(name), "view_%02zu.ppm", v);
    write_ppm((fs::path(out_dir) / name).string(), buf.width, buf.height,
              buf.image.data());
    if (dump_index) {
      std::snprintf(name, sizeof(name), "view_%02zu.idx", v);
      write_index_dump((fs::path(out_dir) / name).string(), buf);
    }
  }
}

// ---- eval-fid ---------------------------------------------------------------

// Generates one texture per dataset mesh from the checkpoint and prints
// `FID <value>` for the pooled comparison against the ground-truth
// textures (plus a per-mesh CSV breakdown when requested).
inline double run_eval(const std::string& checkpoint_path,
                       const RunConfig& cfg, std::ostream& os) {
  validate_config(cfg);
  if (cfg.dataset.empty()) {
    throw ConfigError("eval-fid requires a dataset directory");
  }
  const TensorMap map = load_checkpoint(checkpoint_path);
  const ModelParams<double> model = model_from_checkpoint<double>(map);
  const std::vector<DatasetEntry> entries = load_dataset(cfg.dataset);
  const std::vector<Camera> ring = ring_from_config(cfg);
  const ShadingConfig shading_cfg = shading_from_config(cfg);
  const FeatureExtractor<double> fe = FeatureExtractor<double>::make_seeded();

  Rng rng(cfg.seed);
  std::vector<FidEntry<double>> fid_entries;
  for (const DatasetEntry& e : entries) {
    const FaceGraph graph = build_face_adjacency(e.mesh);
    const NormalizedAdjacency adj = normalize_adjacency(graph);
    const Tensor<double> feats = Tensor<double>::from(
        {graph.num_nodes, kNodeFeatureDim},
        std::vector<double>(graph.node_features));
    const Tensor<double> z = sample_noise<double>(rng, model.noise_dim);
    Tape<double> tape(/*recording=*/false);
    const Tensor<double> latent =
        encode_parts(tape, model.encoder, adj, feats);
    FidEntry<double> fid;
    fid.mesh = &e.mesh;
    fid.real_colors = e.colors;
    fid.generated_colors = generate_texture(tape, model, latent, z, &adj);
    fid_entries.push_back(std::move(fid));
  }
  const double fid = multiview_fid(fid_entries, ring, fe, shading_cfg);
  os << "FID " << detail::fmt_double(fid) << "\n";
  if (cfg.per_mesh) {
    const std::vector<double> per_mesh =
        per_mesh_fid(fid_entries, ring, fe, shading_cfg);
    os << "mesh,fid\n";
    for (std::size_t i = 0; i < entries.size(); ++i) {
      os << entries[i].name << "," << detail::fmt_double(per_mesh[i]) << "\n";
    }
  }
  return fid;
}

// ---- graph-stats --------------------------------------------------------------

inline void run_graph_stats(const std::string& mesh_path, std::ostream& os) {
  std::ifstream is(mesh_path);
  if (!is) {
    throw DataError("cannot open mesh '" + mesh_path + "'");
  }
  std::ostringstream text;
  text << is.rdbuf();
  const Mesh mesh = load_obj(text.str());
  print_graph_stats(compute_graph_stats(build_face_adjacency(mesh)), os);
}

}  // namespace meshtex
