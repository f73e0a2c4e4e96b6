#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "morphopt/error.hpp"
#include "morphopt/io.hpp"
#include "morphopt/mesh.hpp"
#include "morphopt/ommgp.hpp"
#include "morphopt/toy.hpp"

namespace morphopt {

/// On-disk dataset layout: a directory holding `manifest.json`, the
/// reference mesh, and per-sample field (and optionally mesh) files.
///
///   manifest.json:
///     { "schema_version": 1,
///       "reference_mesh": "reference.mesh",
///       "samples": [ { "field": "field_000.field",
///                      "mesh": null | "mesh_000.mesh",
///                      "mu": [ ... ] }, ... ],
///       "beta": [ ... ] }            // optional, written by gen-toy
inline void save_dataset(const std::string& dir, const Dataset& dataset,
                         const std::vector<double>* beta = nullptr) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_mesh(dir + "/reference.mesh", *dataset.reference);
  nlohmann::json manifest;
  manifest["schema_version"] = 1;
  manifest["reference_mesh"] = "reference.mesh";
  manifest["samples"] = nlohmann::json::array();
  for (int i = 0; i < dataset.size(); ++i) {
    const Sample& s = dataset.samples[i];
    char field_name[64], mesh_name[64];
    std::snprintf(field_name, sizeof(field_name), "field_%03d.field", i);
    nlohmann::json entry;
    entry["field"] = field_name;
    if (s.domain && s.domain.get() != dataset.reference.get()) {
      std::snprintf(mesh_name, sizeof(mesh_name), "mesh_%03d.mesh", i);
      write_mesh(dir + "/" + mesh_name, *s.domain);
      entry["mesh"] = mesh_name;
    } else {
      entry["mesh"] = nullptr;
    }
    entry["mu"] = std::vector<double>(s.mu.data(), s.mu.data() + s.mu.size());
    manifest["samples"].push_back(entry);
    write_field(dir + "/" + field_name, s.field);
  }
  if (beta) manifest["beta"] = *beta;
  auto out = detail::open_out(dir + "/manifest.json");
  out << manifest.dump(1) << "\n";
}

inline Dataset load_dataset(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw Error("no dataset manifest found at '" + dir + "/manifest.json'");
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(dir + "/manifest.json: " + e.what());
  }
  if (manifest.at("schema_version").get<int>() != 1)
    throw Error("unsupported dataset schema version");
  Dataset dataset;
  dataset.reference =
      read_mesh(dir + "/" + manifest.at("reference_mesh").get<std::string>());
  for (const auto& entry : manifest.at("samples")) {
    Sample s;
    if (!entry.at("mesh").is_null()) {
      s.domain = read_mesh(dir + "/" + entry.at("mesh").get<std::string>());
    }
    const auto& mesh = s.domain ? *s.domain : *dataset.reference;
    s.field = read_field(dir + "/" + entry.at("field").get<std::string>(), mesh);
    const auto& mu = entry.at("mu");
    s.mu.resize(mu.size());
    for (std::size_t d = 0; d < mu.size(); ++d) s.mu[d] = mu[d].get<double>();
    dataset.samples.push_back(std::move(s));
  }
  return dataset;
}

/// Writes the analytic advection-bump dataset: a structured reference mesh
/// and n fields on a deterministic, endpoint-inclusive β grid, with the β
/// values recorded both in the manifest and as each sample's scalar μ.
inline Dataset generate_toy_dataset(const std::string& dir, int n, int nx, int ny,
                                    double beta_lo, double beta_hi) {
  Dataset dataset;
  dataset.reference = toy_mesh(nx, ny);
  const std::vector<double> betas = toy_betas(n, beta_lo, beta_hi);
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.field = toy_snapshot(*dataset.reference, betas[i]);
    s.mu.resize(1);
    s.mu[0] = betas[i];
    dataset.samples.push_back(std::move(s));
  }
  if (!dir.empty()) save_dataset(dir, dataset, &betas);
  return dataset;
}

}  // namespace morphopt
