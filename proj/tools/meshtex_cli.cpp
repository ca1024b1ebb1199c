// Command-line front end. Subcommands: train, generate, render, eval-fid,
// graph-stats, grad-check. Config file keys and command-line flags carry
// the same names; flags win. Exit codes: 0 ok, 1 usage, 2 data, 3
// numerical failure.
#include <CLI11.hpp>
#include <iostream>
#include <map>
#include <string>

#include "meshtex/grad_suites.hpp"
#include "meshtex/harness.hpp"

namespace {

using meshtex::RunConfig;

// Flags mirror config keys; collected as strings and applied through the
// same parser as the file so behavior cannot diverge.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (key = value lines)");
    for (const char* key :
         {"dataset", "out_dir", "steps", "seed", "lr", "lambda_perc",
          "noise_dim", "views", "image_size", "elevation_deg", "distance",
          "vfov_deg", "shading", "numeric", "checkpoint_interval",
          "generator", "mode", "background", "per_mesh"}) {
      cmd->add_option_function<std::string>(
          std::string("--") + key,
          [this, key](const std::string& v) { values[key] = v; },
          std::string("override config key ") + key);
    }
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_path.empty()) {
      cfg = meshtex::load_config(config_path);
    }
    for (const auto& [key, value] : values) {
      meshtex::apply_config_value(cfg, key, value);
    }
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-conditioned per-face texture synthesis"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  CLI::App* train = app.add_subcommand("train", "train a model on a dataset");
  train_flags.attach(train);

  ConfigFlags gen_flags;
  std::string gen_checkpoint, gen_mesh, gen_out = "facecolors.bin";
  std::string gen_render_dir;
  CLI::App* generate =
      app.add_subcommand("generate", "generate a texture for a mesh");
  generate->add_option("checkpoint", gen_checkpoint)->required();
  generate->add_option("mesh", gen_mesh)->required();
  generate->add_option("--out", gen_out, "output facecolors path");
  generate->add_option("--render-dir", gen_render_dir,
                       "also render ring views as PPM files here");
  gen_flags.attach(generate);  // --seed selects the noise draw

  ConfigFlags render_flags;
  std::string render_mesh, render_colors, render_out = "renders";
  bool render_dump_index = false;
  CLI::App* render =
      app.add_subcommand("render", "render a mesh with a facecolors file");
  render->add_option("mesh", render_mesh)->required();
  render->add_option("facecolors", render_colors)->required();
  render->add_option("--out-dir", render_out);
  render->add_flag("--dump-index", render_dump_index,
                   "also write face-index buffer dumps");
  render_flags.attach(render);

  ConfigFlags eval_flags;
  std::string eval_checkpoint;
  CLI::App* eval =
      app.add_subcommand("eval-fid", "score a checkpoint against a dataset");
  eval->add_option("checkpoint", eval_checkpoint)->required();
  eval_flags.attach(eval);

  std::string stats_mesh;
  CLI::App* stats =
      app.add_subcommand("graph-stats", "print face-graph statistics");
  stats->add_option("mesh", stats_mesh)->required();

  CLI::App* gradcheck =
      app.add_subcommand("grad-check", "run the finite-difference suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? meshtex::kExitOk : meshtex::kExitUsage;
  }

  try {
    if (train->parsed()) {
      meshtex::run_train(train_flags.resolve());
    } else if (generate->parsed()) {
      const RunConfig cfg = gen_flags.resolve();
      meshtex::run_generate(gen_checkpoint, gen_mesh, cfg.seed, gen_out,
                            gen_render_dir, cfg);
    } else if (render->parsed()) {
      meshtex::run_render(render_mesh, render_colors, render_out,
                          render_dump_index, render_flags.resolve());
    } else if (eval->parsed()) {
      meshtex::run_eval(eval_checkpoint, eval_flags.resolve(), std::cout);
    } else if (stats->parsed()) {
      meshtex::run_graph_stats(stats_mesh, std::cout);
    } else if (gradcheck->parsed()) {
      if (!meshtex::run_grad_suites(meshtex::default_grad_suites(),
                                    std::cout)) {
        return meshtex::kExitNumerical;
      }
    }
  } catch (const meshtex::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return meshtex::kExitUsage;
  } catch (const meshtex::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return meshtex::kExitNumerical;
  } catch (const meshtex::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return meshtex::kExitData;
  }
  return meshtex::kExitOk;
}
