#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "morphopt/error.hpp"
#include "morphopt/gp.hpp"
#include "morphopt/io.hpp"
#include "morphopt/locate.hpp"
#include "morphopt/log.hpp"
#include "morphopt/mesh.hpp"
#include "morphopt/optimizer.hpp"
#include "morphopt/pod.hpp"
#include "morphopt/rbf.hpp"

namespace morphopt {

/// One training/test sample: a field on its own domain (which may be the
/// shared reference), scalar parameters, and optionally a precomputed
/// geometric morphing.
struct Sample {
  std::shared_ptr<const TriangleMesh> domain;  // null means the reference domain
  NodalField field;
  Eigen::VectorXd mu;  // may be empty
  GeometricMorphing geo;  // optional; computed by RBF when absent
};

struct Dataset {
  std::shared_ptr<const TriangleMesh> reference;
  std::vector<Sample> samples;

  int size() const { return static_cast<int>(samples.size()); }
};

struct OmmgpConfig {
  int r = 1;
  int n_geo_cap = 12;
  int n_opt_cap = 32;
  double energy_threshold = 0.999;
  OptimizerConfig optimizer;
  unsigned seed = 0;

  void validate() const {
    if (r < 1) throw ConfigError("r must be >= 1");
    if (n_geo_cap < 0) throw ConfigError("n_geo_cap must be >= 0");
    if (n_opt_cap < 1) throw ConfigError("n_opt_cap must be >= 1");
    if (!(energy_threshold > 0.0 && energy_threshold <= 1.0))
      throw ConfigError("energy_threshold must lie in (0, 1]");
    optimizer.validate();
  }
};

/// Trained surrogate: three POD bases (geometric morphings, optimal
/// morphings, fields in the aligned configuration) plus the two families of
/// per-coordinate GP regressors.
struct SurrogateBundle {
  std::shared_ptr<const TriangleMesh> reference;
  int p = 0;  // μ dimension
  std::vector<NodalField> geo_modes;    // vector fields; empty for a shared domain
  std::vector<NodalField> opt_modes;    // vector fields
  std::vector<NodalField> field_modes;  // scalar fields, r of them
  std::vector<GpModel> model_r;         // (μ, α) → β, one per coordinate
  std::vector<GpModel> model_o;         // (μ, α) → γ, one per coordinate

  // Training record, kept for reports and validation.
  Eigen::MatrixXd inputs;  // n × (p + n_geo)
  Eigen::MatrixXd beta;    // n × n_opt
  Eigen::MatrixXd gamma;   // n × r

  int n_geo() const { return static_cast<int>(geo_modes.size()); }
  int n_opt() const { return static_cast<int>(opt_modes.size()); }
  int r() const { return static_cast<int>(field_modes.size()); }
};

/// Smallest basis size reaching the energy threshold, capped. Returns 0 only
/// for a zero-trace (all-zero) family.
inline int truncate_count(const PodResult& p, double threshold, int cap) {
  if (!(p.trace > 0.0)) return 0;
  const int available = static_cast<int>(p.modes.size());
  const int limit = std::min(cap, available);
  double acc = 0.0;
  for (int k = 0; k < limit; ++k) {
    acc += p.eigenvalues[k];
    if (acc / p.trace >= threshold) return k + 1;
  }
  if (limit < available)
    log_info("POD truncated at cap " + std::to_string(limit) + " below the energy threshold");
  return std::max(limit, 0);
}

/// Everything the training pipeline computes before any POD truncation or
/// GP fit: geometric morphings, their pullbacks, the optimizer's morphings,
/// and the doubly-aligned fields. Computed once; bundles (including
/// leave-one-out folds) are assembled from subsets of it.
struct TrainingCore {
  std::shared_ptr<const TriangleMesh> reference;
  std::vector<GeometricMorphing> geo;
  std::vector<NodalField> geo_displacements;  // φ_geo − Id on the reference
  std::vector<NodalField> v;                  // u_i ∘ φ_geo on the reference
  std::vector<NodalField> opt_displacements;  // φ_opt − Id
  std::vector<NodalField> w;                  // u_i ∘ φ_geo ∘ φ_opt
  bool has_geometry = false;                  // any non-identity φ_geo
  OptimizeResult optimize_result;
};

inline TrainingCore train_core(const Dataset& dataset, const OmmgpConfig& config,
                               const Optimizer::CheckpointSink& sink = nullptr) {
  config.validate();
  if (!dataset.reference) throw Error("dataset has no reference mesh");
  const int n = dataset.size();
  if (n < 2) throw Error("training needs at least two samples");
  const auto& ref = *dataset.reference;

  TrainingCore core;
  core.reference = dataset.reference;
  auto ref_locator = std::make_shared<MeshLocator>(ref);

  for (int i = 0; i < n; ++i) {
    const Sample& s = dataset.samples[i];
    GeometricMorphing geo;
    if (s.geo.displacement.values.size() > 0) {
      geo = s.geo;
      check_field(ref, geo.displacement);
    } else if (!s.domain || s.domain.get() == dataset.reference.get()) {
      geo = identity_morphing(dataset.reference);
    } else {
      geo = rbf_geometric_morphing(dataset.reference, s.domain);
    }
    if (geo.method != "identity") core.has_geometry = true;

    // Pull the sample's field back through φ_geo onto the reference.
    NodalField v;
    const auto& domain = s.domain ? *s.domain : ref;
    check_field(domain, s.field);
    if (geo.method == "identity" && (&domain == &ref)) {
      v = s.field;
    } else {
      const MeshLocator domain_locator(domain);
      v = pullback_field(ref, domain_locator, s.field,
                         deformed_positions(ref, geo.displacement));
    }
    core.geo.push_back(std::move(geo));
    core.geo_displacements.push_back(core.geo.back().displacement);
    core.v.push_back(std::move(v));
  }

  // The optimal morphings: align the geometry-normalized fields on Ω_0.
  MorphingProblem problem;
  problem.reference = dataset.reference;
  for (int i = 0; i < n; ++i) {
    SnapshotSource src;
    src.mesh = dataset.reference;
    src.field = core.v[i];
    src.locator = ref_locator;
    problem.sources.push_back(std::move(src));
  }
  Optimizer opt(std::move(problem), config.optimizer);
  core.optimize_result = opt.run("", sink);
  core.opt_displacements = core.optimize_result.displacements;

  for (int i = 0; i < n; ++i)
    core.w.push_back(pullback_field(ref, *ref_locator, core.v[i],
                                    deformed_positions(ref, core.opt_displacements[i])));
  return core;
}

/// Builds the PODs and GP models from a subset of the training core (the
/// full set for train(); n−1 subsets for leave-one-out folds).
inline SurrogateBundle assemble_bundle(const TrainingCore& core, const Dataset& dataset,
                                       const OmmgpConfig& config,
                                       const std::vector<int>& subset) {
  const int m = static_cast<int>(subset.size());
  if (m < 2) throw Error("bundle assembly needs at least two samples");
  const int p = static_cast<int>(dataset.samples[subset[0]].mu.size());
  for (int i : subset)
    if (dataset.samples[i].mu.size() != p) throw Error("inconsistent mu dimensions");

  SurrogateBundle bundle;
  bundle.reference = core.reference;
  bundle.p = p;

  // Geometric-morphing POD (skipped entirely for shared-domain datasets).
  Eigen::MatrixXd alpha(m, 0);
  if (core.has_geometry) {
    SnapshotFamily geo_family;
    geo_family.reference = core.reference;
    for (int i : subset) geo_family.snapshots.push_back(core.geo_displacements[i]);
    PodResult geo_pod = pod(correlation_matrix(geo_family), 1);
    attach_modes(geo_pod, geo_family);
    const int n_geo = truncate_count(geo_pod, config.energy_threshold, config.n_geo_cap);
    bundle.geo_modes.assign(geo_pod.modes.begin(), geo_pod.modes.begin() + n_geo);
    alpha = coordinates(geo_family, bundle.geo_modes);
  }

  // Optimal-morphing POD. A zero family (e.g. snapshots already aligned at
  // the start) leaves the basis empty and the optimal morphing at the
  // identity.
  SnapshotFamily opt_family;
  opt_family.reference = core.reference;
  for (int i : subset) opt_family.snapshots.push_back(core.opt_displacements[i]);
  PodResult opt_pod = pod(correlation_matrix(opt_family), 1);
  attach_modes(opt_pod, opt_family);
  const int n_opt = truncate_count(opt_pod, config.energy_threshold, config.n_opt_cap);
  if (n_opt == 0) log_info("optimal-morphing family is identically zero");
  bundle.opt_modes.assign(opt_pod.modes.begin(), opt_pod.modes.begin() + n_opt);
  bundle.beta = coordinates(opt_family, bundle.opt_modes);

  // Field POD in the aligned configuration.
  SnapshotFamily field_family;
  field_family.reference = core.reference;
  for (int i : subset) field_family.snapshots.push_back(core.w[i]);
  PodResult field_pod = pod(correlation_matrix(field_family), std::min(config.r, m));
  attach_modes(field_pod, field_family);
  if (static_cast<int>(field_pod.modes.size()) < config.r)
    throw Error("aligned-field family has rank below r");
  bundle.field_modes.assign(field_pod.modes.begin(), field_pod.modes.begin() + config.r);
  bundle.gamma = coordinates(field_family, bundle.field_modes);

  // GP inputs (μ, α) and the two per-coordinate model families.
  bundle.inputs.resize(m, p + alpha.cols());
  for (int row = 0; row < m; ++row) {
    bundle.inputs.row(row).head(p) = dataset.samples[subset[row]].mu.transpose();
    bundle.inputs.row(row).tail(alpha.cols()) = alpha.row(row);
  }
  if (bundle.inputs.cols() == 0)
    throw Error("GP models need at least one input (mu or geometry coordinates)");
  for (int j = 0; j < bundle.beta.cols(); ++j)
    bundle.model_r.push_back(
        GpModel::train(bundle.inputs, bundle.beta.col(j), config.seed + 17 * j));
  for (int j = 0; j < bundle.gamma.cols(); ++j)
    bundle.model_o.push_back(
        GpModel::train(bundle.inputs, bundle.gamma.col(j), config.seed + 10007 + 17 * j));
  return bundle;
}

inline SurrogateBundle train_surrogate(const Dataset& dataset, const OmmgpConfig& config,
                                       const Optimizer::CheckpointSink& sink = nullptr,
                                       TrainingCore* core_out = nullptr) {
  TrainingCore core = train_core(dataset, config, sink);
  std::vector<int> all(dataset.size());
  for (int i = 0; i < dataset.size(); ++i) all[i] = i;
  SurrogateBundle bundle = assemble_bundle(core, dataset, config, all);
  if (core_out) *core_out = std::move(core);
  return bundle;
}

/// Inference: α̃ from the geometric morphing, GP regressions for β̃ and γ̃,
/// reconstruction of φ̃_opt and ũ_opt, then evaluation at the query mesh
/// nodes by locating them in the doubly-deformed reference mesh (this
/// realizes ũ_opt ∘ (φ̃_opt)⁻¹ ∘ (φ̃_geo)⁻¹ without explicit inversion).
inline NodalField predict_field(const SurrogateBundle& bundle, const GeometricMorphing& geo,
                                const Eigen::VectorXd& mu, const TriangleMesh& query_mesh) {
  const auto& ref = *bundle.reference;
  if (mu.size() != bundle.p) throw Error("mu dimension does not match the trained bundle");

  Eigen::VectorXd alpha(bundle.n_geo());
  if (bundle.n_geo() > 0) {
    check_field(ref, geo.displacement);
    const SparseMat mass2 = expand_to_vector(assemble_mass(ref));
    const Eigen::VectorXd md = mass2 * geo.displacement.values;
    for (int j = 0; j < bundle.n_geo(); ++j)
      alpha[j] = bundle.geo_modes[j].values.dot(md);
  }

  Eigen::VectorXd z(bundle.p + bundle.n_geo());
  z.head(bundle.p) = mu;
  z.tail(bundle.n_geo()) = alpha;

  NodalField opt_disp = make_field(ref, 2);
  for (int j = 0; j < bundle.n_opt(); ++j)
    opt_disp.values += bundle.model_r[j].predict(z) * bundle.opt_modes[j].values;
  NodalField u_opt = make_field(ref, 1);
  for (int j = 0; j < bundle.r(); ++j)
    u_opt.values += bundle.model_o[j].predict(z) * bundle.field_modes[j].values;

  // Composed deformation x ↦ φ_geo(φ_opt(x)) at every reference node.
  std::vector<Vec2> composed = deformed_positions(ref, opt_disp);
  if (geo.displacement.values.size() > 0 && geo.method != "identity") {
    const MeshLocator ref_locator(ref);
    for (auto& pos : composed) {
      const LocateHit hit = ref_locator.locate(pos);
      pos += ref_locator.interpolate2(geo.displacement, hit);
    }
  }
  int folded = 0;
  for (const auto& tri : ref.triangles)
    if (signed_area(composed, tri) <= 0.0) ++folded;
  if (folded > 0)
    log_warn("reconstructed morphing folds " + std::to_string(folded) +
             " elements; evaluation falls back to clamping");

  const MeshLocator deformed(ref, std::move(composed));
  NodalField out = make_field(query_mesh, 1);
  int seed = -1;
  for (int a = 0; a < query_mesh.node_count(); ++a) {
    const LocateHit hit = deformed.locate(query_mesh.nodes[a], seed);
    seed = hit.tri;
    out.values[a] = deformed.interpolate(u_opt, hit);
  }
  return out;
}

/// Convenience for a brand-new geometry: build φ̃_geo by RBF first.
inline NodalField predict_field(const SurrogateBundle& bundle,
                                std::shared_ptr<const TriangleMesh> new_domain,
                                const Eigen::VectorXd& mu) {
  GeometricMorphing geo =
      (!new_domain || new_domain.get() == bundle.reference.get())
          ? identity_morphing(bundle.reference)
          : rbf_geometric_morphing(bundle.reference, new_domain);
  const TriangleMesh& query = new_domain ? *new_domain : *bundle.reference;
  return predict_field(bundle, geo, mu, query);
}

/// Relative L² error of a prediction against the truth on one mesh.
inline double relative_l2_error(const TriangleMesh& mesh, const NodalField& prediction,
                                const NodalField& truth) {
  NodalField diff = truth;
  diff.values = prediction.values - truth.values;
  const double denom = l2_norm(mesh, truth);
  if (denom <= 0.0) throw Error("truth field has zero norm");
  return l2_norm(mesh, diff) / denom;
}

struct RmseReport {
  std::vector<double> per_sample;  // sqrt(mean over that sample's nodes)
  double overall = 0.0;            // sqrt(mean over all samples and nodes)
};

/// Nodal root-mean-square errors of bundle predictions on held-out samples,
/// each evaluated on its own mesh.
inline RmseReport rmse_report(const SurrogateBundle& bundle, const Dataset& dataset,
                              const std::vector<int>& test_indices) {
  RmseReport report;
  double total_sq = 0.0;
  long long total_nodes = 0;
  for (int i : test_indices) {
    const Sample& s = dataset.samples[i];
    const NodalField pred = predict_field(bundle, s.domain, s.mu);
    const auto& mesh = s.domain ? *s.domain : *bundle.reference;
    check_field(mesh, s.field);
    const double sq = (pred.values - s.field.values).squaredNorm();
    report.per_sample.push_back(std::sqrt(sq / mesh.node_count()));
    total_sq += sq;
    total_nodes += mesh.node_count();
  }
  report.overall = total_nodes > 0 ? std::sqrt(total_sq / total_nodes) : 0.0;
  return report;
}

struct LooReport {
  std::vector<double> rel_l2;  // one per fold
  double mean_rel_l2 = 0.0;
};

/// Leave-one-out validation. The geometric morphings and the optimal-
/// morphing run are computed once on the full set (they are treated as
/// preprocessing); PODs and GP models are rebuilt per fold on the remaining
/// n−1 samples before predicting the held-out one.
inline LooReport leave_one_out(const Dataset& dataset, const OmmgpConfig& config) {
  TrainingCore core = train_core(dataset, config);
  const int n = dataset.size();
  LooReport report;
  for (int fold = 0; fold < n; ++fold) {
    std::vector<int> subset;
    subset.reserve(n - 1);
    for (int i = 0; i < n; ++i)
      if (i != fold) subset.push_back(i);
    const SurrogateBundle bundle = assemble_bundle(core, dataset, config, subset);
    const Sample& s = dataset.samples[fold];
    const NodalField pred = predict_field(bundle, s.domain, s.mu);
    const auto& mesh = s.domain ? *s.domain : *dataset.reference;
    report.rel_l2.push_back(relative_l2_error(mesh, pred, s.field));
  }
  for (double e : report.rel_l2) report.mean_rel_l2 += e;
  report.mean_rel_l2 /= std::max<std::size_t>(report.rel_l2.size(), 1);
  return report;
}

// ---------------------------------------------------------------------------
// Bundle persistence: a directory of native-format meshes/fields plus a JSON
// document for GP hyperparameters and normalization.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json gp_to_json(const GpModel& gp) {
  const GpModel::Raw r = gp.raw();
  nlohmann::json j;
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  j["x"] = nlohmann::json::array();
  for (int i = 0; i < r.x.rows(); ++i) {
    std::vector<double> row(r.x.cols());
    for (int d = 0; d < r.x.cols(); ++d) row[d] = r.x(i, d);
    j["x"].push_back(row);
  }
  j["alpha"] = vec(r.alpha);
  j["x_mean"] = vec(r.x_mean);
  j["x_std"] = vec(r.x_std);
  j["y_mean"] = r.y_mean;
  j["y_std"] = r.y_std;
  j["length_scales"] = vec(r.length_scales);
  j["signal_var"] = r.signal_var;
  j["noise_var"] = r.noise_var;
  j["lml"] = r.lml;
  return j;
}

inline GpModel gp_from_json(const nlohmann::json& j) {
  GpModel::Raw r;
  auto vec = [](const nlohmann::json& a) {
    Eigen::VectorXd v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
    return v;
  };
  const auto& x = j.at("x");
  const int rows = static_cast<int>(x.size());
  const int cols = rows > 0 ? static_cast<int>(x[0].size()) : 0;
  r.x.resize(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int d = 0; d < cols; ++d) r.x(i, d) = x[i][d].get<double>();
  r.alpha = vec(j.at("alpha"));
  r.x_mean = vec(j.at("x_mean"));
  r.x_std = vec(j.at("x_std"));
  r.y_mean = j.at("y_mean").get<double>();
  r.y_std = j.at("y_std").get<double>();
  r.length_scales = vec(j.at("length_scales"));
  r.signal_var = j.at("signal_var").get<double>();
  r.noise_var = j.at("noise_var").get<double>();
  r.lml = j.at("lml").get<double>();
  return GpModel::restore(r);
}

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json j = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    std::vector<double> row(m.cols());
    for (int c = 0; c < m.cols(); ++c) row[c] = m(i, c);
    j.push_back(row);
  }
  return j;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, int expect_cols = -1) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows > 0 ? static_cast<int>(j[0].size()) : std::max(expect_cols, 0);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  return m;
}

}  // namespace detail

inline void save_bundle(const std::string& dir, const SurrogateBundle& bundle) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_mesh(dir + "/reference.mesh", *bundle.reference);
  auto dump_modes = [&](const std::string& stem, const std::vector<NodalField>& modes) {
    for (std::size_t k = 0; k < modes.size(); ++k) {
      char name[64];
      std::snprintf(name, sizeof(name), "/%s_%03zu.field", stem.c_str(), k);
      write_field(dir + name, modes[k]);
    }
  };
  dump_modes("geo_mode", bundle.geo_modes);
  dump_modes("opt_mode", bundle.opt_modes);
  dump_modes("field_mode", bundle.field_modes);

  nlohmann::json j;
  j["schema_version"] = 1;
  j["p"] = bundle.p;
  j["n_geo"] = bundle.n_geo();
  j["n_opt"] = bundle.n_opt();
  j["r"] = bundle.r();
  j["inputs"] = detail::matrix_to_json(bundle.inputs);
  j["beta"] = detail::matrix_to_json(bundle.beta);
  j["gamma"] = detail::matrix_to_json(bundle.gamma);
  j["models_r"] = nlohmann::json::array();
  for (const auto& gp : bundle.model_r) j["models_r"].push_back(detail::gp_to_json(gp));
  j["models_o"] = nlohmann::json::array();
  for (const auto& gp : bundle.model_o) j["models_o"].push_back(detail::gp_to_json(gp));
  auto out = detail::open_out(dir + "/gp.json");
  out << j.dump(1) << "\n";
}

inline SurrogateBundle load_bundle(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir + "/gp.json"))
    throw Error("no trained bundle found at '" + dir + "'");
  SurrogateBundle bundle;
  bundle.reference = read_mesh(dir + "/reference.mesh");

  std::ifstream in(dir + "/gp.json");
  nlohmann::json j;
  in >> j;
  if (j.at("schema_version").get<int>() != 1)
    throw Error("unsupported bundle schema version");
  bundle.p = j.at("p").get<int>();
  const int n_geo = j.at("n_geo").get<int>();
  const int n_opt = j.at("n_opt").get<int>();
  const int r = j.at("r").get<int>();
  bundle.inputs = detail::matrix_from_json(j.at("inputs"), bundle.p + n_geo);
  bundle.beta = detail::matrix_from_json(j.at("beta"), n_opt);
  bundle.gamma = detail::matrix_from_json(j.at("gamma"), r);
  for (const auto& gj : j.at("models_r")) bundle.model_r.push_back(detail::gp_from_json(gj));
  for (const auto& gj : j.at("models_o")) bundle.model_o.push_back(detail::gp_from_json(gj));

  auto load_modes = [&](const std::string& stem, int count, std::vector<NodalField>& out) {
    for (int k = 0; k < count; ++k) {
      char name[64];
      std::snprintf(name, sizeof(name), "/%s_%03d.field", stem.c_str(), k);
      out.push_back(read_field(dir + name, *bundle.reference));
    }
  };
  load_modes("geo_mode", n_geo, bundle.geo_modes);
  load_modes("opt_mode", n_opt, bundle.opt_modes);
  load_modes("field_mode", r, bundle.field_modes);
  return bundle;
}

}  // namespace morphopt
