#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "morphopt/error.hpp"
#include "morphopt/ommgp.hpp"
#include "morphopt/optimizer.hpp"

namespace morphopt {

/// Flat run configuration consumed by the CLI: optimizer and surrogate
/// parameters plus paths, seed, and worker count. Parsed from a single JSON
/// document; unknown keys are rejected by name.
struct RunConfig {
  OptimizerConfig optimizer;
  int n_geo_cap = 12;
  int n_opt_cap = 32;
  double energy_threshold = 0.999;
  unsigned seed = 0;
  std::string dataset_dir;
  std::string output_dir;

  // Toy-dataset generation parameters.
  int toy_n = 30;
  int toy_nx = 48;
  int toy_ny = 60;
  double beta_min = -0.38;
  double beta_max = 0.38;

  OmmgpConfig ommgp() const {
    OmmgpConfig c;
    c.r = optimizer.r;
    c.n_geo_cap = n_geo_cap;
    c.n_opt_cap = n_opt_cap;
    c.energy_threshold = energy_threshold;
    c.optimizer = optimizer;
    c.seed = seed;
    return c;
  }
};

inline RunConfig parse_run_config(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "r", "step", "c1", "penalty", "young_modulus", "poisson_ratio", "penalty_alpha",
      "mu", "lambda", "max_iters", "rel_tol", "continuation_c1", "c1_trigger", "c1_floor",
      "continuation_c2", "c2_start", "c2_growth", "c2_off", "polytopal_fast_path",
      "enforce_bijectivity", "max_backtracks", "checkpoint_interval", "workers",
      "n_geo_cap", "n_opt_cap", "energy_threshold", "seed", "dataset_dir", "output_dir",
      "toy_n", "toy_nx", "toy_ny", "beta_min", "beta_max"};
  if (!j.is_object()) throw ConfigError("config document must be a JSON object");
  for (const auto& item : j.items())
    if (!known.count(item.key()))
      throw ConfigError("unknown config key '" + item.key() + "'");

  RunConfig c;
  OptimizerConfig& o = c.optimizer;
  auto get = [&](const char* key, auto& slot) {
    if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
  };
  get("r", o.r);
  get("step", o.step);
  get("c1", o.c1);
  if (j.contains("penalty")) {
    const std::string p = j.at("penalty").get<std::string>();
    if (p == "none")
      o.penalty = PenaltyKind::kNone;
    else if (p == "linear")
      o.penalty = PenaltyKind::kLinear;
    else if (p == "neo_hookean")
      o.penalty = PenaltyKind::kNeoHookean;
    else
      throw ConfigError("unknown penalty '" + p + "' (expected none, linear, neo_hookean)");
  }
  get("young_modulus", o.elastic.young_modulus);
  get("poisson_ratio", o.elastic.poisson_ratio);
  get("penalty_alpha", o.elastic.penalty_alpha);
  get("mu", o.neo_hookean.mu);
  get("lambda", o.neo_hookean.lambda);
  get("max_iters", o.max_iters);
  get("rel_tol", o.rel_tol);
  get("continuation_c1", o.continuation_c1);
  get("c1_trigger", o.c1_trigger);
  get("c1_floor", o.c1_floor);
  get("continuation_c2", o.continuation_c2);
  get("c2_start", o.c2_start);
  get("c2_growth", o.c2_growth);
  get("c2_off", o.c2_off);
  get("polytopal_fast_path", o.polytopal_fast_path);
  get("enforce_bijectivity", o.enforce_bijectivity);
  get("max_backtracks", o.max_backtracks);
  get("checkpoint_interval", o.checkpoint_interval);
  get("workers", o.workers);
  get("n_geo_cap", c.n_geo_cap);
  get("n_opt_cap", c.n_opt_cap);
  get("energy_threshold", c.energy_threshold);
  get("seed", c.seed);
  get("dataset_dir", c.dataset_dir);
  get("output_dir", c.output_dir);
  get("toy_n", c.toy_n);
  get("toy_nx", c.toy_nx);
  get("toy_ny", c.toy_ny);
  get("beta_min", c.beta_min);
  get("beta_max", c.beta_max);
  o.validate();
  if (c.toy_n < 1) throw ConfigError("toy_n must be >= 1");
  if (c.toy_nx < 1 || c.toy_ny < 1) throw ConfigError("toy mesh resolution must be >= 1");
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid JSON in '" + path + "': " + e.what());
  }
  return parse_run_config(j);
}

/// FNV-1a hash of the canonical JSON dump; identifies a config in manifests.
inline std::string config_hash(const nlohmann::json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace morphopt
