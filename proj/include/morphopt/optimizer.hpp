#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "morphopt/elasticity.hpp"
#include "morphopt/energy.hpp"
#include "morphopt/error.hpp"
#include "morphopt/fem.hpp"
#include "morphopt/io.hpp"
#include "morphopt/log.hpp"
#include "morphopt/mesh.hpp"
#include "morphopt/sensitivity.hpp"

namespace morphopt {

enum class PenaltyKind { kNone, kLinear, kNeoHookean };

inline std::string to_string(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::kNone: return "none";
    case PenaltyKind::kLinear: return "linear";
    case PenaltyKind::kNeoHookean: return "neo-hookean";
  }
  return "?";
}

struct OptimizerConfig {
  int r = 1;
  double step = 2.5;
  double c1 = 0.0;
  PenaltyKind penalty = PenaltyKind::kLinear;
  NeoHookeanParams neo_hookean;
  ElasticParams elastic;
  int max_iters = 500;
  double rel_tol = 1e-4;  // converged when 1 - J_r < rel_tol with stable c1

  bool continuation_c1 = false;
  double c1_trigger = 1e-4;  // relative ΔJ below which a continuation event fires
  double c1_floor = 1e-8;    // outer loop terminates once c1 drops below this

  bool continuation_c2 = false;
  double c2_start = 1.0;
  double c2_growth = 10.0;
  double c2_off = 1e8;  // smoothing considered off at or above this value

  bool polytopal_fast_path = false;
  // When false, accepted iterations may carry inverted elements (the linear
  // penalty cannot prevent them); the Neo-Hookean barrier still rejects
  // inversion through the objective regardless of this flag.
  bool enforce_bijectivity = true;
  int max_backtracks = 20;
  int checkpoint_interval = 50;
  int workers = 1;

  void validate() const {
    if (r < 1) throw ConfigError("r must be >= 1");
    if (!(step > 0.0)) throw ConfigError("step must be > 0");
    if (!(c1 >= 0.0)) throw ConfigError("c1 must be >= 0");
    if (max_iters < 0) throw ConfigError("max_iters must be >= 0");
    if (!(rel_tol >= 0.0)) throw ConfigError("rel_tol must be >= 0");
    if (!(c1_trigger > 0.0)) throw ConfigError("c1_trigger must be > 0");
    if (!(c1_floor > 0.0)) throw ConfigError("c1_floor must be > 0");
    if (continuation_c2 && !(c2_start > 0.0)) throw ConfigError("c2_start must be > 0");
    if (continuation_c2 && !(c2_growth > 1.0)) throw ConfigError("c2_growth must be > 1");
    if (max_backtracks < 0) throw ConfigError("max_backtracks must be >= 0");
    if (checkpoint_interval < 1) throw ConfigError("checkpoint_interval must be >= 1");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (penalty == PenaltyKind::kNeoHookean) neo_hookean.validate();
    elastic.validate();
    if (polytopal_fast_path && penalty != PenaltyKind::kLinear)
      throw ConfigError("polytopal_fast_path requires the linear penalty");
  }
};

struct TraceRecord {
  int iter = 0;
  double j = 0.0;
  double i_obj = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;  // 0 when smoothing is off
  double min_area = 0.0;
  double max_normal_violation = 0.0;
  double step = 0.0;
};

struct OptimizerTrace {
  std::vector<TraceRecord> records;

  void write_csv(const std::string& path) const {
    auto out = detail::open_out(path);
    out << "iter,J,I,c1,c2,min_area,max_normal_violation,step\n";
    for (const auto& rec : records)
      out << rec.iter << "," << fmt_float(rec.j) << "," << fmt_float(rec.i_obj) << ","
          << fmt_float(rec.c1) << "," << fmt_float(rec.c2) << "," << fmt_float(rec.min_area)
          << "," << fmt_float(rec.max_normal_violation) << "," << fmt_float(rec.step) << "\n";
  }
};

/// A family of snapshots to align: fields u_i on their own domains Ω_i,
/// morphed onto the common reference Ω_0. `targets` lists the domain of each
/// snapshot for boundary correspondence; empty means Ω_i = Ω_0 for all i.
struct MorphingProblem {
  std::shared_ptr<const TriangleMesh> reference;
  std::vector<SnapshotSource> sources;
  std::vector<std::shared_ptr<const TriangleMesh>> targets;

  bool shared_domain() const {
    for (const auto& t : targets)
      if (t && t.get() != reference.get()) return false;
    return true;
  }
};

struct OptimizeResult {
  std::vector<NodalField> displacements;
  OptimizerTrace trace;
  double final_j = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string reason;
};

/// Riesz-preconditioned gradient ascent on I_r = J_r − c1 Σ_i E[φ_i] with
/// backtracking, bijectivity safeguards, and the c1/c2 continuation drivers.
class Optimizer {
 public:
  enum class StepOutcome { kAccepted, kStationary, kC1Floor, kTolReached };
  using CheckpointSink = std::function<void(const CheckpointData&)>;

  Optimizer(MorphingProblem problem, OptimizerConfig config)
      : problem_(std::move(problem)), cfg_(std::move(config)) {
    cfg_.validate();
    if (!problem_.reference) throw Error("missing reference mesh");
    const int n = static_cast<int>(problem_.sources.size());
    if (n < 1) throw Error("empty snapshot set");
    if (!problem_.targets.empty() && static_cast<int>(problem_.targets.size()) != n)
      throw Error("targets must be empty or match snapshot count");
    if (cfg_.r > n) throw ConfigError("r exceeds the number of snapshots");

    fixed_operator_ = problem_.shared_domain();
    if (cfg_.polytopal_fast_path && !fixed_operator_)
      throw ConfigError(
          "polytopal_fast_path requires all snapshot domains equal to the reference");

    const auto& ref = *problem_.reference;
    mass_ = assemble_mass(ref);
    if (fixed_operator_) {
      form_ = assemble_elasticity_fixed(ref, cfg_.elastic);
      riesz_ = std::make_unique<RieszSolver>(ref, form_);
      ++assembly_count_;
    }
    reference_entries_ = boundary_penalty_entries(ref);

    displacements_.assign(n, make_field(ref, 2));
    seeds_.assign(n, std::vector<int>(ref.node_count(), -1));
    c1_ = cfg_.c1;
    c2_ = cfg_.continuation_c2 ? cfg_.c2_start : 0.0;
    if (cfg_.continuation_c1 && !(cfg_.c1 > 0.0))
      log_warn(
          "continuation_c1 is enabled but c1 is 0: the schedule starts below its "
          "floor and ends at the first stagnation; set c1 to the intended "
          "starting value (conventionally 1)");
  }

  /// Overrides the zero initial morphings (geometric-morphing warm start or
  /// checkpoint resume). The initial family must be bijective.
  void set_displacements(std::vector<NodalField> displacements) {
    const int n = static_cast<int>(problem_.sources.size());
    if (static_cast<int>(displacements.size()) != n)
      throw Error("one displacement field required per snapshot");
    for (const auto& d : displacements) {
      check_field(*problem_.reference, d);
      if (d.components != 2) throw Error("displacements must be vector fields");
    }
    displacements_ = std::move(displacements);
    state_.reset();
  }

  /// Restores the full continuation state of a checkpoint.
  void restore(const CheckpointData& ck) {
    set_displacements(ck.displacements);
    iter_ = ck.iteration;
    c1_ = ck.c1;
    c2_ = ck.c2;
    prev_j_ = ck.prev_j;
    events_ = ck.events;
    const std::size_t nodes = problem_.reference->nodes.size();
    const bool shaped = ck.seeds.size() == displacements_.size() &&
                        std::all_of(ck.seeds.begin(), ck.seeds.end(),
                                    [&](const auto& row) { return row.size() == nodes; });
    if (shaped)
      seeds_ = ck.seeds;
    else
      seeds_.assign(displacements_.size(), std::vector<int>(nodes, -1));
  }

  CheckpointData checkpoint(const std::string& config_json = "") const {
    CheckpointData ck;
    ck.iteration = iter_;
    ck.c1 = c1_;
    ck.c2 = c2_;
    ck.prev_j = prev_j_;
    ck.events = events_;
    ck.config_json = config_json.empty() ? "{}" : config_json;
    ck.displacements = displacements_;
    ck.seeds = seeds_;
    return ck;
  }

  /// Runs until convergence, the iteration budget, or a structured failure.
  /// The trace stays accessible through trace() even when this throws.
  OptimizeResult run(const std::string& config_json = "",
                     const CheckpointSink& sink = nullptr) {
    ensure_state();
    if (iter_ == 0 && trace_.records.empty()) record_trace(0.0, 0.0);
    std::string reason;
    bool converged = false;
    while (true) {
      if (iter_ >= cfg_.max_iters) {
        reason = "iteration budget reached";
        break;
      }
      const StepOutcome outcome = step();
      if (outcome == StepOutcome::kStationary) {
        converged = true;
        reason = "stationary point (all sensitivities below tolerance)";
        break;
      }
      if (sink && iter_ % cfg_.checkpoint_interval == 0) sink(checkpoint(config_json));
      if (outcome == StepOutcome::kC1Floor) {
        converged = true;
        reason = "c1 continuation reached its floor";
        break;
      }
      if (outcome == StepOutcome::kTolReached) {
        converged = true;
        reason = "1 - J_r below rel_tol";
        break;
      }
    }
    OptimizeResult result;
    result.displacements = displacements_;
    result.trace = trace_;
    result.final_j = state_->fd.j;
    result.iterations = iter_;
    result.converged = converged;
    result.reason = reason;
    log_info("optimizer stopped after " + std::to_string(iter_) + " iterations: " + reason +
             " (J = " + std::to_string(state_->fd.j) + ")");
    return result;
  }

  /// One ascent iteration: directions from the current state, backtracking
  /// on ε until I_r does not decrease (and, when enforced, no element
  /// inverts), then the continuation bookkeeping.
  StepOutcome step() {
    ensure_state();
    const int n = static_cast<int>(problem_.sources.size());
    const auto& ref = *problem_.reference;

    double max_load = 0.0;
    for (int i = 0; i < n; ++i)
      max_load = std::max(max_load, state_->fd.loads[i].lpNorm<Eigen::Infinity>());
    if (max_load <= 1e-12) return StepOutcome::kStationary;

    // Ascent directions from the Riesz problem a(w, v) = DI_r[Φ][v].
    std::vector<NodalField> directions(n, make_field(ref, 2));
    for (int i = 0; i < n; ++i) {
      const RieszSolver& solver = fixed_operator_ ? *riesz_ : per_snapshot_solver(i);
      Eigen::VectorXd rhs = state_->fd.loads[i];
      if (c1_ > 0.0 && cfg_.penalty == PenaltyKind::kNeoHookean)
        rhs -= c1_ * energy_neohookean_gradient(ref, displacements_[i], cfg_.neo_hookean);
      else if (c1_ > 0.0 && cfg_.penalty == PenaltyKind::kLinear && !cfg_.polytopal_fast_path)
        rhs -= c1_ * Eigen::VectorXd(snapshot_form(i) * displacements_[i].values);
      NodalField w = solver.solve(ref, rhs);
      if (c1_ == 0.0 || cfg_.penalty == PenaltyKind::kNone) {
        // Ascent property: a(w, w) = b·w must be nonnegative for SPD a.
        if (state_->fd.loads[i].dot(w.values) < -1e-12 * std::max(1.0, max_load))
          log_warn("snapshot " + std::to_string(i) + ": update lost the ascent property");
      }
      if (c1_ > 0.0 && cfg_.penalty == PenaltyKind::kLinear && cfg_.polytopal_fast_path) {
        // Fixed-operator shortcut, applied literally: w = A⁻¹b − c1(φ − Id).
        // For the quadratic penalty this equals A⁻¹(b − c1·A(φ−Id)).
        w.values -= c1_ * displacements_[i].values;
      }
      directions[i] = std::move(w);
    }

    const double normal_violation = max_normal_violation(directions);

    // Backtracking on the step size; ε resets to its configured value at
    // every iteration.
    double eps = cfg_.step;
    bool accepted = false;
    for (int bt = 0; bt <= cfg_.max_backtracks; ++bt, eps *= 0.5) {
      std::vector<NodalField> trial_d = displacements_;
      for (int i = 0; i < n; ++i) trial_d[i].values += eps * directions[i].values;
      auto trial = evaluate(trial_d, /*cheap_reject=*/true);
      if (!trial || !(trial->i_obj >= state_->i_obj)) continue;
      displacements_ = std::move(trial_d);
      state_ = std::move(trial);
      accepted = true;
      break;
    }
    if (!accepted)
      throw NumericalError("backtracking exhausted after " +
                           std::to_string(cfg_.max_backtracks + 1) +
                           " step attempts at iteration " + std::to_string(iter_ + 1));
    ++iter_;

    maybe_project_boundary();
    record_trace(normal_violation, eps);

    // Continuation bookkeeping on the accepted J.
    const double j = state_->fd.j;
    const bool stagnated = prev_j_ >= 0.0 &&
                           std::abs(j - prev_j_) < cfg_.c1_trigger * std::max(std::abs(j), 1e-300);
    prev_j_ = j;
    if (stagnated && (cfg_.continuation_c1 || cfg_.continuation_c2)) {
      const bool move_c1 = cfg_.continuation_c1 && (!cfg_.continuation_c2 || events_ % 2 == 0);
      ++events_;
      if (move_c1) {
        c1_ *= 0.5;
        log_debug("continuation: c1 halved to " + std::to_string(c1_) + " at iteration " +
                  std::to_string(iter_));
        if (c1_ < cfg_.c1_floor) return StepOutcome::kC1Floor;
        state_->i_obj = state_->fd.j - c1_ * state_->penalty_total;
        // A new penalized problem begins here: stagnation must be observed
        // between consecutive iterations under the same c1, so re-arm the
        // detector instead of letting one long stall cascade to the floor.
        prev_j_ = -1.0;
      } else {
        c2_ *= cfg_.c2_growth;
        log_debug("continuation: c2 raised to " + std::to_string(c2_) + " at iteration " +
                  std::to_string(iter_));
        // The objective changed: re-evaluate J under the new smoothing and
        // restart the stagnation detector.
        state_ = evaluate(displacements_, /*cheap_reject=*/false);
        prev_j_ = -1.0;
      }
    }
    const bool c1_stable = !cfg_.continuation_c1 || c1_ < cfg_.c1_floor;
    const bool c2_done = !cfg_.continuation_c2 || c2_ >= cfg_.c2_off;
    if (1.0 - state_->fd.j < cfg_.rel_tol && c1_stable && c2_done)
      return StepOutcome::kTolReached;
    return StepOutcome::kAccepted;
  }

  const OptimizerTrace& trace() const { return trace_; }
  const std::vector<NodalField>& displacements() const { return displacements_; }
  double current_j() { ensure_state(); return state_->fd.j; }
  double current_c1() const { return c1_; }
  double current_c2() const { return c2_; }
  int iteration() const { return iter_; }
  int assembly_count() const { return assembly_count_; }
  const FamilyDerivatives& derivatives() { ensure_state(); return state_->fd; }
  const SparseMat& fixed_form() const {
    if (!fixed_operator_) throw Error("no fixed operator on the general path");
    return form_;
  }

 private:
  struct State {
    FamilyDerivatives fd;
    std::vector<double> energies;
    double penalty_total = 0.0;
    double i_obj = 0.0;
    double min_area = 0.0;
  };

  void ensure_state() {
    if (state_) return;
    int inverted = 0;
    for (const auto& d : displacements_) inverted += static_cast<int>(detect_inverted(*problem_.reference, d).size());
    if (inverted > 0 && (cfg_.enforce_bijectivity || cfg_.penalty == PenaltyKind::kNeoHookean))
      throw Error("initial morphings are not bijective");
    state_ = evaluate(displacements_, /*cheap_reject=*/false);
  }

  /// Full objective evaluation at the given displacements. Returns nothing
  /// when the configuration is rejected outright: inverted elements under
  /// enforce_bijectivity or under the Neo-Hookean barrier.
  std::optional<State> evaluate(const std::vector<NodalField>& displacements,
                                bool cheap_reject) {
    const auto& ref = *problem_.reference;
    const int n = static_cast<int>(problem_.sources.size());

    std::vector<std::vector<Vec2>> positions(n);
    double min_area = std::numeric_limits<double>::infinity();
    int inverted = 0;
    for (int i = 0; i < n; ++i) {
      positions[i] = deformed_positions(ref, displacements[i]);
      for (const auto& tri : ref.triangles) {
        const double a = signed_area(positions[i], tri);
        min_area = std::min(min_area, a);
        if (a <= 0.0) ++inverted;
      }
    }
    if (inverted > 0 && cheap_reject &&
        (cfg_.enforce_bijectivity || cfg_.penalty == PenaltyKind::kNeoHookean))
      return std::nullopt;

    State s;
    s.min_area = min_area;
    s.fd = evaluate_family(ref, mass_, smoothed_sources(), positions, cfg_.r, &seeds_,
                           cfg_.workers);
    s.energies.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
      switch (cfg_.penalty) {
        case PenaltyKind::kNone:
          break;
        case PenaltyKind::kLinear: {
          const SparseMat& a = fixed_operator_ ? form_ : snapshot_form(i);
          s.energies[i] = energy_linear(a, displacements[i].values);
          break;
        }
        case PenaltyKind::kNeoHookean:
          s.energies[i] = energy_neohookean(ref, displacements[i], cfg_.neo_hookean);
          break;
      }
      s.penalty_total += s.energies[i];
    }
    s.i_obj = s.fd.j - c1_ * s.penalty_total;
    return s;
  }

  /// Smoothing of the snapshot fields on their own domains, cached per c2.
  /// Active only while 0 < c2 < c2_off.
  const std::vector<SnapshotSource>& smoothed_sources() {
    if (!(c2_ > 0.0) || c2_ >= cfg_.c2_off) return problem_.sources;
    auto it = smoothed_cache_.find(c2_);
    if (it != smoothed_cache_.end()) return it->second;
    std::vector<SnapshotSource> smoothed = problem_.sources;
    std::map<std::uint64_t, std::unique_ptr<Smoother>> smoothers;
    for (auto& src : smoothed) {
      auto& sm = smoothers[src.mesh->id()];
      if (!sm) sm = std::make_unique<Smoother>(*src.mesh, c2_);
      src.field = sm->apply(src.field);
    }
    return smoothed_cache_.emplace(c2_, std::move(smoothed)).first->second;
  }

  /// Per-snapshot penalized form on the general path: the boundary penalty
  /// follows the current deformed boundary of snapshot i. On the fixed path
  /// (all domains equal the reference) the single cached form is reused.
  const SparseMat& snapshot_form(int i) {
    if (fixed_operator_) return form_;
    rebuild_snapshot_operator(i);
    return snapshot_forms_[i];
  }

  const RieszSolver& per_snapshot_solver(int i) {
    rebuild_snapshot_operator(i);
    return *snapshot_solvers_[i];
  }

  void rebuild_snapshot_operator(int i) {
    const int n = static_cast<int>(problem_.sources.size());
    if (snapshot_forms_.empty()) {
      snapshot_forms_.resize(n);
      snapshot_solvers_.resize(n);
      snapshot_form_iter_.assign(n, -1);
    }
    if (snapshot_form_iter_[i] == iter_) return;
    const auto& ref = *problem_.reference;
    const auto positions = deformed_positions(ref, displacements_[i]);
    snapshot_forms_[i] =
        assemble_elasticity(ref, cfg_.elastic, boundary_penalty_entries(ref, positions));
    snapshot_solvers_[i] = std::make_unique<RieszSolver>(ref, snapshot_forms_[i]);
    snapshot_form_iter_[i] = iter_;
    ++assembly_count_;
  }

  /// Largest boundary-normal component of the directions relative to the
  /// largest nodal direction magnitude across the family.
  double max_normal_violation(const std::vector<NodalField>& directions) const {
    const auto& ref = *problem_.reference;
    double max_mag = 0.0;
    for (const auto& d : directions)
      for (int a = 0; a < ref.node_count(); ++a)
        max_mag = std::max(max_mag, d.vector2(a).norm());
    if (max_mag <= 0.0) return 0.0;
    double worst = 0.0;
    if (fixed_operator_) {
      for (const auto& d : directions)
        for (const auto& entry : reference_entries_)
          worst = std::max(worst, std::abs(d.vector2(entry.node).dot(entry.normal)));
    } else {
      for (std::size_t i = 0; i < directions.size(); ++i) {
        const auto positions = deformed_positions(ref, displacements_[i]);
        for (const auto& entry : boundary_penalty_entries(ref, positions))
          worst = std::max(worst,
                           std::abs(directions[i].vector2(entry.node).dot(entry.normal)));
      }
    }
    return worst / max_mag;
  }

  /// Safeguard: when a deformed boundary node drifts off the target
  /// boundary, snap it back by nearest-point projection. A cheap normal-
  /// offset proxy gates the exact polyline test on the shared-domain path.
  void maybe_project_boundary() {
    const auto& ref = *problem_.reference;
    const double limit = 1e-3 * ref.diameter();
    bool any_projected = false;
    for (std::size_t i = 0; i < displacements_.size(); ++i) {
      const TriangleMesh& target = (problem_.targets.empty() || !problem_.targets[i])
                                       ? ref
                                       : *problem_.targets[i];
      if (&target == &ref) {
        double proxy = 0.0;
        for (const auto& entry : reference_entries_)
          proxy = std::max(proxy, std::abs(displacements_[i].vector2(entry.node).dot(entry.normal)));
        if (proxy <= 0.5 * limit) continue;
      }
      const auto positions = deformed_positions(ref, displacements_[i]);
      for (int a = 0; a < ref.node_count(); ++a) {
        if (!ref.is_boundary_node(a)) continue;
        if (distance_to_boundary(target, positions[a]) > limit) {
          displacements_[i].set_vector2(a, project_to_boundary(target, positions[a]) -
                                               ref.nodes[a]);
          any_projected = true;
        }
      }
    }
    if (any_projected) {
      log_info("boundary safeguard projected drifted nodes at iteration " +
               std::to_string(iter_));
      state_ = evaluate(displacements_, /*cheap_reject=*/false);
      if (!state_) throw NumericalError("boundary projection produced inverted elements");
    }
  }

  static Vec2 closest_on_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 d = b - a;
    const double len2 = d.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
    return a + t * d;
  }

  static double distance_to_boundary(const TriangleMesh& mesh, const Vec2& p) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : mesh.boundary_edges)
      best = std::min(best,
                      (closest_on_segment(p, mesh.nodes[e.a], mesh.nodes[e.b]) - p).norm());
    return best;
  }

  static Vec2 project_to_boundary(const TriangleMesh& mesh, const Vec2& p) {
    double best = std::numeric_limits<double>::infinity();
    Vec2 out = p;
    for (const auto& e : mesh.boundary_edges) {
      const Vec2 q = closest_on_segment(p, mesh.nodes[e.a], mesh.nodes[e.b]);
      const double d = (q - p).norm();
      if (d < best) {
        best = d;
        out = q;
      }
    }
    return out;
  }

  void record_trace(double normal_violation, double eps) {
    TraceRecord rec;
    rec.iter = iter_;
    rec.j = state_->fd.j;
    rec.i_obj = state_->i_obj;
    rec.c1 = c1_;
    rec.c2 = (c2_ > 0.0 && c2_ < cfg_.c2_off) ? c2_ : 0.0;
    rec.min_area = state_->min_area;
    rec.max_normal_violation = normal_violation;
    rec.step = eps;
    trace_.records.push_back(rec);
  }

  MorphingProblem problem_;
  OptimizerConfig cfg_;
  bool fixed_operator_ = false;
  SparseMat mass_;
  SparseMat form_;  // fixed-path penalized operator, assembled once
  std::unique_ptr<RieszSolver> riesz_;
  std::vector<PenaltyEntry> reference_entries_;
  int assembly_count_ = 0;

  std::vector<SparseMat> snapshot_forms_;  // general path, rebuilt per iteration
  std::vector<std::unique_ptr<RieszSolver>> snapshot_solvers_;
  std::vector<int> snapshot_form_iter_;

  std::vector<NodalField> displacements_;
  std::vector<std::vector<int>> seeds_;
  std::optional<State> state_;
  OptimizerTrace trace_;
  std::map<double, std::vector<SnapshotSource>> smoothed_cache_;

  int iter_ = 0;
  double c1_ = 0.0;
  double c2_ = 0.0;
  double prev_j_ = -1.0;
  int events_ = 0;
};

/// Objective J_r evaluated on smoothed snapshot fields (one smoothing pass
/// per c2 on each snapshot's own domain) composed with the given morphings.
inline double multiscale_objective(const TriangleMesh& reference, const SparseMat& mass,
                                   const std::vector<SnapshotSource>& sources,
                                   const std::vector<NodalField>& displacements, int r,
                                   double c2) {
  if (!(c2 > 0.0)) throw ConfigError("smoothing parameter c2 must be > 0");
  std::vector<SnapshotSource> smoothed = sources;
  std::map<std::uint64_t, std::unique_ptr<Smoother>> smoothers;
  for (auto& src : smoothed) {
    auto& sm = smoothers[src.mesh->id()];
    if (!sm) sm = std::make_unique<Smoother>(*src.mesh, c2);
    src.field = sm->apply(src.field);
  }
  std::vector<std::vector<Vec2>> positions;
  positions.reserve(displacements.size());
  for (const auto& d : displacements) positions.push_back(deformed_positions(reference, d));
  return evaluate_family(reference, mass, smoothed, positions, r).j;
}

}  // namespace morphopt
