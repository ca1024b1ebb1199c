// Run configuration: plain `key = value` text, one pair per line, `#`
// comments allowed. Unknown keys are rejected. Every field has a default;
// command-line flags override file values. Writing the resolved config
// back out and re-reading it reproduces the identical run.
#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include "meshtex/common.hpp"
#include "meshtex/geometry.hpp"

namespace meshtex {

struct RunConfig {
  std::string dataset;              // dataset directory (train/eval)
  std::string out_dir = "out";      // artifacts directory
  long steps = 2000;                // training steps
  std::uint64_t seed = 1;           // master RNG seed
  double lr = 1e-4;                 // Adam learning rate, both networks
  double lambda_perc = 0.1;         // perceptual loss weight
  int noise_dim = 16;               // z dimension
  int views = 8;                    // cameras per step
  int image_size = 64;              // render width = height
  double elevation_deg = 20.0;      // view ring elevation
  double distance = 2.2;            // view ring camera distance
  double vfov_deg = 40.0;           // vertical field of view
  std::string shading = "unlit";    // unlit | lambert
  std::string numeric = "f64";      // f64 | f32
  long checkpoint_interval = 500;   // steps between checkpoints (0 = final only)
  std::string generator = "ggan";   // ggan | gcn
  std::string mode = "gan";         // gan | reconstruction
  std::string background = "0,0,0"; // background color r,g,b in [0,1]
  bool per_mesh = false;            // eval-fid per-mesh breakdown
};

namespace detail {

inline long parse_long(const std::string& v, const std::string& key) {
  long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected integer, got '" +
                      v + "'");
  }
  return out;
}

inline std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config key '" + key +
                      "': expected unsigned integer, got '" + v + "'");
  }
  return out;
}

inline double parse_config_double(const std::string& v,
                                  const std::string& key) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected number, got '" + v +
                      "'");
  }
  return out;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" +
                    v + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline void apply_config_value(RunConfig& cfg, const std::string& key,
                               const std::string& value) {
  using namespace detail;
  if (key == "dataset") cfg.dataset = value;
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "steps") cfg.steps = parse_long(value, key);
  else if (key == "seed") cfg.seed = parse_u64(value, key);
  else if (key == "lr") cfg.lr = parse_config_double(value, key);
  else if (key == "lambda_perc") cfg.lambda_perc = parse_config_double(value, key);
  else if (key == "noise_dim") cfg.noise_dim = static_cast<int>(parse_long(value, key));
  else if (key == "views") cfg.views = static_cast<int>(parse_long(value, key));
  else if (key == "image_size") cfg.image_size = static_cast<int>(parse_long(value, key));
  else if (key == "elevation_deg") cfg.elevation_deg = parse_config_double(value, key);
  else if (key == "distance") cfg.distance = parse_config_double(value, key);
  else if (key == "vfov_deg") cfg.vfov_deg = parse_config_double(value, key);
  else if (key == "shading") cfg.shading = value;
  else if (key == "numeric") cfg.numeric = value;
  else if (key == "checkpoint_interval") cfg.checkpoint_interval = parse_long(value, key);
  else if (key == "generator") cfg.generator = value;
  else if (key == "mode") cfg.mode = value;
  else if (key == "background") cfg.background = value;
  else if (key == "per_mesh") cfg.per_mesh = parse_bool(value, key);
  else throw ConfigError("unknown config key '" + key + "'");
}

inline RunConfig parse_config(const std::string& text,
                              RunConfig cfg = RunConfig{}) {
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    apply_config_value(cfg, detail::trim(line.substr(0, eq)),
                       detail::trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path,
                             RunConfig cfg = RunConfig{}) {
  std::ifstream is(path);
  if (!is) {
    throw ConfigError("cannot open config file '" + path + "'");
  }
  std::ostringstream text;
  text << is.rdbuf();
  return parse_config(text.str(), cfg);
}

inline std::string serialize_config(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "dataset = " << c.dataset << "\n";
  os << "out_dir = " << c.out_dir << "\n";
  os << "steps = " << c.steps << "\n";
  os << "seed = " << c.seed << "\n";
  os << "lr = " << c.lr << "\n";
  os << "lambda_perc = " << c.lambda_perc << "\n";
  os << "noise_dim = " << c.noise_dim << "\n";
  os << "views = " << c.views << "\n";
  os << "image_size = " << c.image_size << "\n";
  os << "elevation_deg = " << c.elevation_deg << "\n";
  os << "distance = " << c.distance << "\n";
  os << "vfov_deg = " << c.vfov_deg << "\n";
  os << "shading = " << c.shading << "\n";
  os << "numeric = " << c.numeric << "\n";
  os << "checkpoint_interval = " << c.checkpoint_interval << "\n";
  os << "generator = " << c.generator << "\n";
  os << "mode = " << c.mode << "\n";
  os << "background = " << c.background << "\n";
  os << "per_mesh = " << (c.per_mesh ? "true" : "false") << "\n";
  return os.str();
}

inline Vec3 parse_background(const std::string& s) {
  Vec3 bg;
  double* chan[3] = {&bg.x, &bg.y, &bg.z};
  std::istringstream is(s);
  std::string tok;
  for (int i = 0; i < 3; ++i) {
    if (!std::getline(is, tok, ',')) {
      throw ConfigError("background must be 'r,g,b', got '" + s + "'");
    }
    *chan[i] = detail::parse_config_double(detail::trim(tok), "background");
  }
  return bg;
}

inline void validate_config(const RunConfig& c) {
  if (c.noise_dim < 1) throw ConfigError("noise_dim must be >= 1");
  if (c.views < 1) throw ConfigError("views must be >= 1");
  if (c.lambda_perc < 0) throw ConfigError("lambda_perc must be >= 0");
  if (c.steps < 0) throw ConfigError("steps must be >= 0");
  if (c.image_size < 8) throw ConfigError("image_size must be >= 8");
  if (c.shading != "unlit" && c.shading != "lambert") {
    throw ConfigError("shading must be 'unlit' or 'lambert'");
  }
  if (c.numeric != "f64" && c.numeric != "f32") {
    throw ConfigError("numeric must be 'f64' or 'f32'");
  }
  if (c.generator != "ggan" && c.generator != "gcn") {
    throw ConfigError("generator must be 'ggan' or 'gcn'");
  }
  if (c.mode != "gan" && c.mode != "reconstruction") {
    throw ConfigError("mode must be 'gan' or 'reconstruction'");
  }
  parse_background(c.background);
}

}  // namespace meshtex
