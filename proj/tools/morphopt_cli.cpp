// Command-line front end: dataset generation, morphing optimization, POD
// analysis, surrogate training/prediction, and evaluation reports.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <morphopt/morphopt.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_dir = "morphopt_out";
  std::string resume_path;
  std::string bundle_dir = "bundle";
  std::string mesh_path;
  std::string morphings_dir;
  int workers = 0;
  long long seed = -1;
  std::vector<double> mu_values;
  std::vector<int> split;
  // gen-toy overrides (negative / NaN means "take from config")
  int toy_n = -1, toy_nx = -1, toy_ny = -1;
  double beta_min = std::numeric_limits<double>::quiet_NaN();
  double beta_max = std::numeric_limits<double>::quiet_NaN();
};

struct Context {
  morphopt::RunConfig config;
  json effective;  // effective config document, for hashing
};

Context load_context(const CliOptions& opt) {
  Context ctx;
  json doc = json::object();
  if (!opt.config_path.empty()) {
    std::ifstream in(opt.config_path);
    if (!in) throw morphopt::ConfigError("cannot open config file '" + opt.config_path + "'");
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw morphopt::ConfigError("invalid JSON in '" + opt.config_path + "': " + e.what());
    }
  }
  if (opt.workers > 0) doc["workers"] = opt.workers;
  if (opt.seed >= 0) doc["seed"] = static_cast<unsigned>(opt.seed);
  ctx.config = morphopt::parse_run_config(doc);
  ctx.effective = doc;
  return ctx;
}

void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const json& effective, double wall_seconds) {
  try {
    fs::create_directories(out_dir);
    json m;
    m["command"] = command;
    m["config_hash"] = morphopt::config_hash(effective);
    m["config"] = effective;
    m["versions"]["morphopt"] = morphopt::kVersion;
    m["versions"]["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." +
                             std::to_string(EIGEN_MAJOR_VERSION) + "." +
                             std::to_string(EIGEN_MINOR_VERSION);
    m["versions"]["json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                            std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                            std::to_string(NLOHMANN_JSON_VERSION_PATCH);
    m["versions"]["cli11"] = CLI11_VERSION;
    m["wall_time_seconds"] = wall_seconds;
    std::ofstream out(out_dir + "/run_manifest.json");
    out << m.dump(1) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "warning: could not write run manifest: " << e.what() << "\n";
  }
}

morphopt::Dataset load_dataset_checked(const morphopt::RunConfig& cfg) {
  if (cfg.dataset_dir.empty())
    throw morphopt::ConfigError("config key 'dataset_dir' is required for this command");
  return morphopt::load_dataset(cfg.dataset_dir);
}

/// Snapshot sources for the optimizer; samples on their own domains keep
/// them as targets, reference-domain samples share one locator.
morphopt::MorphingProblem build_problem(const morphopt::Dataset& ds) {
  morphopt::MorphingProblem problem;
  problem.reference = ds.reference;
  auto ref_locator = std::make_shared<morphopt::MeshLocator>(*ds.reference);
  for (const auto& s : ds.samples) {
    morphopt::SnapshotSource src;
    if (s.domain && s.domain.get() != ds.reference.get()) {
      src.mesh = s.domain;
      src.locator = std::make_shared<morphopt::MeshLocator>(*s.domain);
      problem.targets.push_back(s.domain);
    } else {
      src.mesh = ds.reference;
      src.locator = ref_locator;
      problem.targets.push_back(nullptr);
    }
    src.field = s.field;
    problem.sources.push_back(std::move(src));
  }
  return problem;
}

/// Fields pulled back onto the reference domain (identity for
/// reference-domain samples, RBF geometric morphing otherwise).
std::vector<morphopt::NodalField> reference_fields(const morphopt::Dataset& ds) {
  std::vector<morphopt::NodalField> out;
  for (const auto& s : ds.samples) {
    if (!s.domain || s.domain.get() == ds.reference.get()) {
      out.push_back(s.field);
      continue;
    }
    const auto geo = morphopt::rbf_geometric_morphing(ds.reference, s.domain);
    const morphopt::MeshLocator locator(*s.domain);
    out.push_back(morphopt::pullback_field(
        *ds.reference, locator, s.field,
        morphopt::deformed_positions(*ds.reference, geo.displacement)));
  }
  return out;
}

morphopt::Optimizer::CheckpointSink make_sink(const std::string& out_dir) {
  const std::string dir = out_dir + "/checkpoints";
  fs::create_directories(dir);
  return [dir](const morphopt::CheckpointData& ck) {
    char name[64];
    std::snprintf(name, sizeof(name), "checkpoint_%06d.chk", ck.iteration);
    morphopt::write_checkpoint(dir + "/" + name, ck);
    morphopt::write_checkpoint(dir + "/latest.chk", ck);
  };
}

int cmd_gen_toy(const Context& ctx, const CliOptions& opt) {
  const auto& cfg = ctx.config;
  const int n = opt.toy_n > 0 ? opt.toy_n : cfg.toy_n;
  const int nx = opt.toy_nx > 0 ? opt.toy_nx : cfg.toy_nx;
  const int ny = opt.toy_ny > 0 ? opt.toy_ny : cfg.toy_ny;
  const double lo = std::isnan(opt.beta_min) ? cfg.beta_min : opt.beta_min;
  const double hi = std::isnan(opt.beta_max) ? cfg.beta_max : opt.beta_max;
  if (n < 1) throw morphopt::ConfigError("gen-toy needs n >= 1");
  const auto ds = morphopt::generate_toy_dataset(opt.out_dir, n, nx, ny, lo, hi);
  std::cout << "wrote " << n << " snapshots on a " << nx << "x" << ny << " mesh ("
            << ds.reference->node_count() << " nodes) to " << opt.out_dir << "\n";
  return 0;
}

int cmd_optimize(const Context& ctx, const CliOptions& opt, bool require_resume) {
  const auto ds = load_dataset_checked(ctx.config);
  if (require_resume && opt.resume_path.empty())
    throw morphopt::ConfigError("checkpoint-resume requires --resume PATH");

  morphopt::Optimizer optimizer(build_problem(ds), ctx.config.optimizer);
  if (!opt.resume_path.empty()) {
    const auto ck = morphopt::read_checkpoint(opt.resume_path, *ds.reference);
    optimizer.restore(ck);
    std::cout << "resumed from iteration " << ck.iteration << "\n";
  }

  fs::create_directories(opt.out_dir);
  morphopt::OptimizeResult result;
  try {
    result = optimizer.run(ctx.effective.dump(), make_sink(opt.out_dir));
  } catch (const morphopt::NumericalError&) {
    optimizer.trace().write_csv(opt.out_dir + "/trace.csv");
    std::cerr << "numerical failure; partial trace written to " << opt.out_dir
              << "/trace.csv\n";
    throw;
  }

  result.trace.write_csv(opt.out_dir + "/trace.csv");
  for (std::size_t i = 0; i < result.displacements.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "/morphing_%03zu.field", i);
    morphopt::write_field(opt.out_dir + name, result.displacements[i]);
  }

  const auto& pod = optimizer.derivatives().pod;
  json report;
  report["final_j"] = result.final_j;
  report["one_minus_j"] = 1.0 - result.final_j;
  report["iterations"] = result.iterations;
  report["converged"] = result.converged;
  report["reason"] = result.reason;
  report["r"] = ctx.config.optimizer.r;
  json fractions = json::array();
  for (int k = 0; k < pod.eigenvalues.size(); ++k)
    fractions.push_back(pod.eigenvalues[k] / pod.trace);
  report["eigenvalue_fractions"] = fractions;
  int non_bijective = 0;
  for (const auto& d : result.displacements)
    if (!morphopt::detect_inverted(*ds.reference, d).empty()) ++non_bijective;
  report["non_bijective_morphings"] = non_bijective;
  std::ofstream(opt.out_dir + "/report.json") << report.dump(1) << "\n";

  std::cout << "J_" << ctx.config.optimizer.r << " = " << result.final_j
            << "  (1 - J = " << 1.0 - result.final_j << ") after " << result.iterations
            << " iterations; " << result.reason << "\n";
  return 0;
}

int cmd_pod(const Context& ctx, const CliOptions& opt) {
  const auto ds = load_dataset_checked(ctx.config);
  const int n = ds.size();
  const int r = ctx.config.optimizer.r;
  if (r > n)
    throw morphopt::ConfigError("r = " + std::to_string(r) + " exceeds the snapshot count " +
                                std::to_string(n));

  const auto raw_fields = reference_fields(ds);
  morphopt::SnapshotFamily raw;
  raw.reference = ds.reference;
  raw.snapshots = raw_fields;

  morphopt::SnapshotFamily morphed;
  morphed.reference = ds.reference;
  if (!opt.morphings_dir.empty()) {
    const morphopt::MeshLocator ref_locator(*ds.reference);
    for (int i = 0; i < n; ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "/morphing_%03d.field", i);
      const auto d = morphopt::read_field(opt.morphings_dir + name, *ds.reference);
      morphed.snapshots.push_back(morphopt::pullback_field(
          *ds.reference, ref_locator, raw_fields[i],
          morphopt::deformed_positions(*ds.reference, d)));
    }
  } else {
    morphed.snapshots = raw_fields;
  }

  const auto raw_pod = morphopt::pod(morphopt::correlation_matrix(raw), r);
  const auto morphed_pod = morphopt::pod(morphopt::correlation_matrix(morphed), r);

  fs::create_directories(opt.out_dir);
  std::ofstream csv(opt.out_dir + "/decay.csv");
  csv.precision(17);
  csv << "k,raw_fraction,raw_cumulative,morphed_fraction,morphed_cumulative\n";
  double raw_cum = 0.0, morphed_cum = 0.0;
  for (int k = 0; k < n; ++k) {
    raw_cum += raw_pod.eigenvalues[k] / raw_pod.trace;
    morphed_cum += morphed_pod.eigenvalues[k] / morphed_pod.trace;
    csv << (k + 1) << "," << raw_pod.eigenvalues[k] / raw_pod.trace << "," << raw_cum << ","
        << morphed_pod.eigenvalues[k] / morphed_pod.trace << "," << morphed_cum << "\n";
  }
  json report;
  report["r"] = r;
  report["raw_efficiency"] = morphopt::efficiency(raw_pod, r);
  report["morphed_efficiency"] = morphopt::efficiency(morphed_pod, r);
  std::ofstream(opt.out_dir + "/report.json") << report.dump(1) << "\n";
  std::cout << "J_" << r << ": raw = " << morphopt::efficiency(raw_pod, r)
            << ", morphed = " << morphopt::efficiency(morphed_pod, r) << "\n";
  return 0;
}

int cmd_train(const Context& ctx, const CliOptions& opt) {
  const auto ds = load_dataset_checked(ctx.config);
  fs::create_directories(opt.out_dir);
  morphopt::TrainingCore core;
  const auto bundle = morphopt::train_surrogate(ds, ctx.config.ommgp(),
                                                make_sink(opt.out_dir), &core);
  morphopt::save_bundle(opt.out_dir + "/bundle", bundle);
  core.optimize_result.trace.write_csv(opt.out_dir + "/trace.csv");
  json report;
  report["final_j"] = core.optimize_result.final_j;
  report["n_geo"] = bundle.n_geo();
  report["n_opt"] = bundle.n_opt();
  report["r"] = bundle.r();
  report["samples"] = ds.size();
  std::ofstream(opt.out_dir + "/report.json") << report.dump(1) << "\n";
  std::cout << "trained surrogate (n_geo = " << bundle.n_geo() << ", n_opt = " << bundle.n_opt()
            << ", r = " << bundle.r() << ") -> " << opt.out_dir << "/bundle\n";
  return 0;
}

int cmd_predict(const Context& ctx, const CliOptions& opt) {
  (void)ctx;
  const auto bundle = morphopt::load_bundle(opt.bundle_dir);
  Eigen::VectorXd mu(static_cast<int>(opt.mu_values.size()));
  for (std::size_t i = 0; i < opt.mu_values.size(); ++i) mu[i] = opt.mu_values[i];

  std::shared_ptr<const morphopt::TriangleMesh> domain;
  if (!opt.mesh_path.empty()) domain = morphopt::read_mesh(opt.mesh_path);
  const auto geo = domain ? morphopt::rbf_geometric_morphing(bundle.reference, domain)
                          : morphopt::identity_morphing(bundle.reference);
  const auto& query = domain ? *domain : *bundle.reference;
  const auto prediction = morphopt::predict_field(bundle, geo, mu, query);

  fs::create_directories(opt.out_dir);
  morphopt::write_field(opt.out_dir + "/prediction.field", prediction);
  std::cout << "wrote prediction for mu = [";
  for (std::size_t i = 0; i < opt.mu_values.size(); ++i)
    std::cout << (i ? ", " : "") << opt.mu_values[i];
  std::cout << "] to " << opt.out_dir << "/prediction.field\n";
  return 0;
}

int cmd_eval(const Context& ctx, const CliOptions& opt) {
  const auto ds = load_dataset_checked(ctx.config);
  const auto oc = ctx.config.ommgp();
  fs::create_directories(opt.out_dir);
  json report;
  if (opt.split.empty()) {
    const auto loo = morphopt::leave_one_out(ds, oc);
    report["mode"] = "leave_one_out";
    report["rel_l2"] = loo.rel_l2;
    report["mean_rel_l2"] = loo.mean_rel_l2;
    std::cout << "leave-one-out mean relative L2 error = " << loo.mean_rel_l2 << "\n";
  } else {
    for (int i : opt.split)
      if (i < 0 || i >= ds.size())
        throw morphopt::ConfigError("test index " + std::to_string(i) + " out of range");
    morphopt::Dataset train_ds;
    train_ds.reference = ds.reference;
    std::vector<bool> is_test(ds.samples.size(), false);
    for (int i : opt.split) is_test[i] = true;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
      if (!is_test[i]) train_ds.samples.push_back(ds.samples[i]);
    const auto bundle = morphopt::train_surrogate(train_ds, oc);

    std::vector<double> rel, rmse;
    for (int i : opt.split) {
      const auto& s = ds.samples[i];
      const auto pred = morphopt::predict_field(bundle, s.domain, s.mu);
      const auto& mesh = s.domain ? *s.domain : *ds.reference;
      rel.push_back(morphopt::relative_l2_error(mesh, pred, s.field));
      rmse.push_back(std::sqrt((pred.values - s.field.values).squaredNorm() /
                               mesh.node_count()));
    }
    double mean = 0.0;
    for (double e : rel) mean += e;
    mean /= rel.empty() ? 1 : rel.size();
    report["mode"] = "split";
    report["test_indices"] = opt.split;
    report["rel_l2"] = rel;
    report["rmse"] = rmse;
    report["mean_rel_l2"] = mean;
    std::cout << "test-split mean relative L2 error = " << mean << "\n";
  }
  std::ofstream(opt.out_dir + "/eval.json") << report.dump(1) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mesh-morphing model reduction toolkit"};
  app.fallthrough();
  app.require_subcommand(1);

  CliOptions opt;
  app.add_option("--config", opt.config_path, "JSON run configuration");
  auto* out_flag = app.add_option("--out", opt.out_dir, "output directory");
  app.add_option("--workers", opt.workers, "worker thread count (overrides config)");
  app.add_option("--seed", opt.seed, "random seed (overrides config)");
  app.add_option("--resume", opt.resume_path, "checkpoint file to resume from");

  auto* gen = app.add_subcommand("gen-toy", "generate the analytic advection-bump dataset");
  gen->add_option("--n", opt.toy_n, "number of snapshots");
  gen->add_option("--nx", opt.toy_nx, "mesh cells in x");
  gen->add_option("--ny", opt.toy_ny, "mesh cells in y");
  gen->add_option("--beta-min", opt.beta_min, "lower end of the parameter grid");
  gen->add_option("--beta-max", opt.beta_max, "upper end of the parameter grid");

  auto* optimize = app.add_subcommand("optimize", "run the morphing optimization");
  auto* podcmd = app.add_subcommand("pod", "eigenvalue decay of raw vs morphed snapshots");
  podcmd->add_option("--morphings", opt.morphings_dir,
                     "directory with morphing_NNN.field files");
  auto* train = app.add_subcommand("train", "train the morphing-aware GP surrogate");
  auto* predict = app.add_subcommand("predict", "evaluate the surrogate at a new parameter");
  predict->add_option("--bundle", opt.bundle_dir, "trained bundle directory");
  predict->add_option("--mu", opt.mu_values, "parameter values");
  predict->add_option("--mesh", opt.mesh_path, "mesh of a new geometry (optional)");
  auto* eval = app.add_subcommand("eval", "leave-one-out or split evaluation");
  eval->add_option("--split", opt.split, "held-out sample indices (default: leave-one-out)");
  auto* resume = app.add_subcommand("checkpoint-resume", "resume an optimization run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::string command = "?";
  int code = 0;
  json effective = json::object();
  try {
    Context ctx = load_context(opt);
    effective = ctx.effective;
    // Precedence for the output directory: explicit --out flag, then the
    // config document, then the built-in default.
    if (out_flag->count() == 0 && !ctx.config.output_dir.empty())
      opt.out_dir = ctx.config.output_dir;
    if (app.got_subcommand(gen)) {
      command = "gen-toy";
      code = cmd_gen_toy(ctx, opt);
    } else if (app.got_subcommand(optimize)) {
      command = "optimize";
      code = cmd_optimize(ctx, opt, false);
    } else if (app.got_subcommand(resume)) {
      command = "checkpoint-resume";
      code = cmd_optimize(ctx, opt, true);
    } else if (app.got_subcommand(podcmd)) {
      command = "pod";
      code = cmd_pod(ctx, opt);
    } else if (app.got_subcommand(train)) {
      command = "train";
      code = cmd_train(ctx, opt);
    } else if (app.got_subcommand(predict)) {
      command = "predict";
      code = cmd_predict(ctx, opt);
    } else if (app.got_subcommand(eval)) {
      command = "eval";
      code = cmd_eval(ctx, opt);
    }
  } catch (const morphopt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    code = 2;
  } catch (const morphopt::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    code = 2;
  } catch (const morphopt::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    code = 3;
  } catch (const morphopt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    code = 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    code = 3;
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_run_manifest(opt.out_dir, command, effective, wall);
  return code;
}
