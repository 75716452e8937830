#pragma once

// Run configuration: a flat `key = value` text file. Blank lines and lines
// starting with '#' are ignored; unknown or repeated keys are errors.

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "pcae/model.hpp"
#include "pcae/optimizer.hpp"

namespace pcae {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string preset = "desk";
  std::uint64_t seed = 1;
  std::size_t iterations = 2000;
  std::size_t batch_size = 4;
  std::size_t n_in = 500;
  std::size_t n_out = 500;
  AmsGradHyper optimizer;
  LossWeights weights;
  LossToggles losses;
  bool adain = true;
  std::string affine_sites = "preset";  // preset | all | <count>
  std::string uv_mode = "lloyd";        // inference 2D samples: lloyd | random
  std::string sampling = "fps";         // input subsampling from the dense reference: fps | random
  std::string dataset = "synthetic";    // synthetic | <directory of .ply/.xyz clouds>
  std::string synthetic_kind = "mixed";
  std::size_t synthetic_count = 8;
  std::size_t dense_points = 16000;
  std::size_t validation_every = 250;
  std::size_t validation_count = 0;  // 0: validate on the training shapes
  std::size_t eval_points = 2500;
};

namespace detail {

struct ConfigField {
  const char* key;
  const char* doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& key, const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ConfigError("config: '" + key + "' expects a number, got '" + s + "'");
  return v;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& s) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    if (!s.empty() && s[0] == '-') throw std::invalid_argument("negative");
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty())
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "on") return true;
  if (s == "false" || s == "0" || s == "off") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got '" + s + "'");
}

inline void check_choice(const std::string& key, const std::string& v, std::initializer_list<const char*> choices) {
  for (const char* c : choices)
    if (v == c) return;
  std::string all;
  for (const char* c : choices) all += std::string(all.empty() ? "" : ", ") + c;
  throw ConfigError("config: '" + key + "' must be one of {" + all + "}, got '" + v + "'");
}

#define PCAE_DOUBLE(KEY, DOC, M)                                                                       \
  ConfigField {                                                                                        \
    KEY, DOC, [](RunConfig& c, const std::string& s) { c.M = parse_double(KEY, s); },                  \
        [](const RunConfig& c) { return format_double(c.M); }                                          \
  }
#define PCAE_UINT(KEY, DOC, M)                                                                         \
  ConfigField {                                                                                        \
    KEY, DOC, [](RunConfig& c, const std::string& s) { c.M = static_cast<decltype(c.M)>(parse_uint(KEY, s)); }, \
        [](const RunConfig& c) { return std::to_string(c.M); }                                         \
  }
#define PCAE_BOOL(KEY, DOC, M)                                                                         \
  ConfigField {                                                                                        \
    KEY, DOC, [](RunConfig& c, const std::string& s) { c.M = parse_bool(KEY, s); },                    \
        [](const RunConfig& c) { return std::string(c.M ? "true" : "false"); }                         \
  }
#define PCAE_CHOICE(KEY, DOC, M, ...)                                                                  \
  ConfigField {                                                                                        \
    KEY, DOC,                                                                                          \
        [](RunConfig& c, const std::string& s) {                                                       \
          check_choice(KEY, s, {__VA_ARGS__});                                                         \
          c.M = s;                                                                                     \
        },                                                                                             \
        [](const RunConfig& c) { return c.M; }                                                         \
  }

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = {
      PCAE_CHOICE("preset", "architecture preset", preset, "paper", "desk"),
      PCAE_UINT("seed", "seed for initialization, data and batches", seed),
      PCAE_UINT("iterations", "training iterations", iterations),
      PCAE_UINT("batch_size", "shapes per iteration", batch_size),
      PCAE_UINT("n_in", "encoder input points per shape", n_in),
      PCAE_UINT("n_out", "decoded points per shape during training", n_out),
      PCAE_DOUBLE("lr", "AMSGrad step size", optimizer.lr),
      PCAE_DOUBLE("beta1", "AMSGrad first-moment decay", optimizer.beta1),
      PCAE_DOUBLE("beta2", "AMSGrad second-moment decay", optimizer.beta2),
      PCAE_DOUBLE("eps", "AMSGrad denominator offset", optimizer.eps),
      PCAE_DOUBLE("lambda_chamfer", "weight of the Chamfer term", weights.chamfer),
      PCAE_DOUBLE("lambda_p_chamfer", "weight of the p-norm Chamfer term", weights.p_chamfer),
      PCAE_DOUBLE("lambda_density", "weight of the density term", weights.density),
      PCAE_DOUBLE("lambda_occupancy", "weight of the occupancy term", weights.occupancy),
      PCAE_DOUBLE("lambda_offset", "weight of the offset penalty", weights.offset),
      PCAE_DOUBLE("p", "exponent of the p-norm Chamfer term", weights.p),
      PCAE_DOUBLE("offset_margin", "offset penalty margin in cell widths", weights.offset_margin),
      PCAE_BOOL("loss_chamfer", "enable the Chamfer term", losses.chamfer),
      PCAE_BOOL("loss_p_chamfer", "enable the p-norm Chamfer term", losses.p_chamfer),
      PCAE_BOOL("loss_density", "enable the density term", losses.density),
      PCAE_BOOL("loss_occupancy", "enable the occupancy term", losses.occupancy),
      PCAE_BOOL("loss_offset", "enable the offset penalty", losses.offset),
      PCAE_BOOL("adain", "false: latent reshaped into the decoder seed block, no affine sites", adain),
      ConfigField{"affine_sites", "affine normalization sites: preset, all, or a count",
                  [](RunConfig& c, const std::string& s) {
                    if (s != "preset" && s != "all") parse_uint("affine_sites", s);
                    c.affine_sites = s;
                  },
                  [](const RunConfig& c) { return c.affine_sites; }},
      PCAE_CHOICE("uv_mode", "inference 2D samples", uv_mode, "lloyd", "random"),
      PCAE_CHOICE("sampling", "subsampling of inputs from the dense reference", sampling, "fps", "random"),
      ConfigField{"dataset", "synthetic, or a directory of .ply/.xyz clouds",
                  [](RunConfig& c, const std::string& s) {
                    if (s.empty()) throw ConfigError("config: 'dataset' must not be empty");
                    c.dataset = s;
                  },
                  [](const RunConfig& c) { return c.dataset; }},
      PCAE_CHOICE("synthetic_kind", "synthetic shape family", synthetic_kind, "sphere", "cube", "torus", "cylinder",
                  "mixed"),
      PCAE_UINT("synthetic_count", "number of synthetic training shapes", synthetic_count),
      PCAE_UINT("dense_points", "dense reference points per shape", dense_points),
      PCAE_UINT("validation_every", "iterations between validation passes", validation_every),
      PCAE_UINT("validation_count", "validation shapes (0: reuse the training shapes)", validation_count),
      PCAE_UINT("eval_points", "decoded points per shape for validation and eval", eval_points),
  };
  return fields;
}

#undef PCAE_DOUBLE
#undef PCAE_UINT
#undef PCAE_BOOL
#undef PCAE_CHOICE

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline void validate(const RunConfig& c) {
  if (c.batch_size == 0) throw ConfigError("config: batch_size must be >= 1");
  if (c.n_in == 0 || c.n_out == 0 || c.eval_points == 0) throw ConfigError("config: point counts must be >= 1");
  if (c.n_in > c.dense_points) throw ConfigError("config: n_in exceeds dense_points");
  if (!(c.optimizer.lr > 0) || !(c.optimizer.eps > 0)) throw ConfigError("config: lr and eps must be positive");
  if (!(c.optimizer.beta1 >= 0 && c.optimizer.beta1 < 1 && c.optimizer.beta2 >= 0 && c.optimizer.beta2 < 1))
    throw ConfigError("config: betas must lie in [0, 1)");
  if (!(c.weights.p >= 1)) throw ConfigError("config: p must be >= 1");
  if (c.dataset == "synthetic" && c.synthetic_count == 0) throw ConfigError("config: synthetic_count must be >= 1");
  if (c.validation_every == 0) throw ConfigError("config: validation_every must be >= 1");
}

/// Applies one `key = value` assignment.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : detail::config_fields())
    if (key == f.key) {
      f.set(c, value);
      return;
    }
  throw ConfigError("config: unknown key '" + key + "'");
}

inline RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> seen;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = detail::trim(t.substr(0, eq)), value = detail::trim(t.substr(eq + 1));
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    seen.push_back(key);
    try {
      set_config_value(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  validate(c);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

/// Canonical serialization: every key, in a fixed order.
inline std::string serialize_config(const RunConfig& c) {
  std::string out;
  for (const auto& f : detail::config_fields()) out += std::string(f.key) + " = " + f.get(c) + "\n";
  return out;
}

/// Documented key listing with current values as comments.
inline std::string documented_config(const RunConfig& c = {}) {
  std::string out;
  for (const auto& f : detail::config_fields())
    out += "# " + std::string(f.doc) + "\n" + std::string(f.key) + " = " + f.get(c) + "\n";
  return out;
}

/// Architecture implied by the preset and the ablation switches.
inline ModelConfig model_config(const RunConfig& c) {
  ModelConfig m = preset_config(parse_preset(c.preset));
  m.decoder.adain = c.adain;
  if (c.affine_sites == "all")
    m.decoder.affine_sites = m.decoder.site_count();
  else if (c.affine_sites != "preset")
    m.decoder.affine_sites = static_cast<std::size_t>(detail::parse_uint("affine_sites", c.affine_sites));
  m.decoder.uv_mode = c.uv_mode == "random" ? UVMode::random : UVMode::lloyd;
  m.decoder.validate();
  return m;
}

}  // namespace pcae
