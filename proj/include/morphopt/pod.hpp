#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "morphopt/error.hpp"
#include "morphopt/fem.hpp"
#include "morphopt/io.hpp"
#include "morphopt/locate.hpp"
#include "morphopt/log.hpp"
#include "morphopt/mesh.hpp"

namespace morphopt {

/// Snapshots already pulled back to the reference mesh: u_i^ref = u_i ∘ φ_i.
/// Vector-valued families (morphing displacements) are supported with the
/// componentwise L² inner product.
struct SnapshotFamily {
  std::shared_ptr<const TriangleMesh> reference;
  std::vector<NodalField> snapshots;

  int size() const { return static_cast<int>(snapshots.size()); }
  int components() const { return snapshots.empty() ? 1 : snapshots.front().components; }

  void validate() const {
    if (!reference || snapshots.empty()) throw Error("empty snapshot family");
    for (const auto& s : snapshots) {
      check_field(*reference, s);
      if (s.components != components())
        throw Error("snapshots must share one component count");
    }
  }
};

/// Value and piecewise-constant gradient of a source-mesh field at one
/// query point of the source domain.
struct PullbackSample {
  double value = 0.0;
  Vec2 gradient = Vec2::Zero();
  bool clamped = false;
};

/// Samples u_source ∘ φ at the reference nodes: query points are the
/// deformed positions φ(x_a), located in the source mesh (the snapshot's own
/// domain). seeds, when given, carries one seed triangle per node and is
/// updated in place for walk locality across optimizer iterations.
inline std::vector<PullbackSample> pullback_samples(const MeshLocator& source,
                                                    const NodalField& u_source,
                                                    const std::vector<Vec2>& query_points,
                                                    std::vector<int>* seeds = nullptr) {
  std::vector<PullbackSample> out(query_points.size());
  for (std::size_t a = 0; a < query_points.size(); ++a) {
    const int seed = (seeds && !seeds->empty()) ? (*seeds)[a] : -1;
    const LocateHit hit = source.locate(query_points[a], seed);
    if (seeds && !seeds->empty()) (*seeds)[a] = hit.tri;
    out[a].value = source.interpolate(u_source, hit);
    out[a].clamped = hit.clamped;
    out[a].gradient = source.element_gradient_at(u_source, hit.tri);
  }
  return out;
}

/// u ∘ φ as a scalar field on the reference mesh.
inline NodalField pullback_field(const TriangleMesh& reference, const MeshLocator& source,
                                 const NodalField& u_source,
                                 const std::vector<Vec2>& deformed_positions,
                                 std::vector<int>* seeds = nullptr) {
  NodalField f = make_field(reference, 1);
  const auto samples = pullback_samples(source, u_source, deformed_positions, seeds);
  for (int a = 0; a < reference.node_count(); ++a) f.values[a] = samples[a].value;
  return f;
}

/// Eigenpairs of the snapshot correlation matrix plus derived POD data.
struct PodResult {
  Eigen::VectorXd eigenvalues;   // nonincreasing, negatives zeroed
  Eigen::MatrixXd eigenvectors;  // column k = ζ_k, orthonormal, sign-fixed
  double trace = 0.0;
  int r = 0;
  std::vector<NodalField> modes;  // ψ_k for λ_k above rank tolerance (may be < n)
};

/// The inner-product matrix matching a family's component count.
inline SparseMat family_mass(const SnapshotFamily& family) {
  const SparseMat m = assemble_mass(*family.reference);
  return family.components() == 1 ? m : expand_to_vector(m);
}

/// C_ij = ⟨u_i^ref, u_j^ref⟩ on the reference mesh (mass-matrix inner
/// products, assembled as Uᵀ M U).
inline Eigen::MatrixXd correlation_matrix(const SnapshotFamily& family) {
  family.validate();
  const int n = family.size();
  Eigen::MatrixXd u(family.snapshots.front().values.size(), n);
  for (int i = 0; i < n; ++i) u.col(i) = family.snapshots[i].values;
  const SparseMat m = family_mass(family);
  Eigen::MatrixXd c = u.transpose() * (m * u);
  c = 0.5 * (c + c.transpose()).eval();  // enforce exact symmetry
  return c;
}

namespace detail {
/// Deterministic sign convention: first entry with magnitude above tolerance
/// is made positive.
inline void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > 1e-12) {
      if (v[i] < 0.0) v = -v;
      return;
    }
  }
}
}  // namespace detail

/// Full symmetric eigendecomposition, eigenvalues sorted nonincreasing.
/// Small negative eigenvalues (roundoff) are zeroed; genuinely negative ones
/// are a numerical failure.
inline PodResult pod(const Eigen::MatrixXd& c, int r) {
  const int n = static_cast<int>(c.rows());
  if (c.cols() != n || n < 1) throw Error("correlation matrix must be square and nonempty");
  if (r < 1 || r > n) throw Error("r must satisfy 1 <= r <= n");
  if (!c.isApprox(c.transpose(), 1e-10)) throw Error("correlation matrix is not symmetric");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");

  PodResult out;
  out.r = r;
  out.trace = c.trace();
  out.eigenvalues.resize(n);
  out.eigenvectors.resize(n, n);
  const double scale = std::max(out.trace, 1.0);
  for (int k = 0; k < n; ++k) {
    double lam = eig.eigenvalues()[n - 1 - k];  // Eigen sorts ascending
    if (lam < -1e-10 * scale)
      throw NumericalError("correlation matrix has a significantly negative eigenvalue");
    out.eigenvalues[k] = std::max(lam, 0.0);
    out.eigenvectors.col(k) = eig.eigenvectors().col(n - 1 - k);
    detail::fix_sign(out.eigenvectors.col(k));
  }
  if (r < n && std::abs(out.eigenvalues[r - 1] - out.eigenvalues[r]) <= 1e-10 * scale)
    log_warn("eigenvalues " + std::to_string(r) + " and " + std::to_string(r + 1) +
             " are clustered; J_" + std::to_string(r) + " may be non-differentiable");
  return out;
}

/// J_r = (sum of the r largest eigenvalues) / trace.
inline double efficiency(const PodResult& pod_result, int r) {
  if (r < 1 || r > pod_result.eigenvalues.size()) throw Error("r out of range");
  if (!(pod_result.trace > 0.0))
    throw NumericalError("correlation matrix has zero trace (all-zero snapshots)");
  return pod_result.eigenvalues.head(r).sum() / pod_result.trace;
}

inline double efficiency(const Eigen::MatrixXd& c, int r) { return efficiency(pod(c, r), r); }

/// Rank tolerance below which modes are not normalized (1/sqrt(lambda)).
inline double rank_tolerance(const PodResult& p) { return 1e-12 * std::max(p.trace, 0.0); }

/// POD modes ψ_k = (Σ_i ζ_{k,i} u_i^ref)/√λ_k for eigenvalues above the rank
/// tolerance. Modes are stored in eigenvalue order and truncated at the
/// first rank-deficient eigenvalue.
inline void attach_modes(PodResult& p, const SnapshotFamily& family) {
  family.validate();
  const int n = family.size();
  if (p.eigenvalues.size() != n) throw Error("POD size does not match family");
  p.modes.clear();
  const double tol = rank_tolerance(p);
  for (int k = 0; k < n; ++k) {
    if (p.eigenvalues[k] <= tol) break;
    NodalField mode = make_field(*family.reference, family.components());
    for (int i = 0; i < n; ++i)
      mode.values += p.eigenvectors(i, k) * family.snapshots[i].values;
    mode.values /= std::sqrt(p.eigenvalues[k]);
    p.modes.push_back(std::move(mode));
  }
}

/// Generalized coordinates: row i holds ⟨ψ_j, u_i^ref⟩ for j = 1..m.
inline Eigen::MatrixXd coordinates(const SnapshotFamily& family,
                                   const std::vector<NodalField>& modes) {
  family.validate();
  const int n = family.size();
  const int m = static_cast<int>(modes.size());
  const SparseMat mass = family_mass(family);
  Eigen::MatrixXd gamma(n, m);
  for (int j = 0; j < m; ++j) {
    check_field(*family.reference, modes[j]);
    if (modes[j].components != family.components())
      throw Error("mode/snapshot component mismatch");
    const Eigen::VectorXd mv = mass * modes[j].values;
    for (int i = 0; i < n; ++i) gamma(i, j) = family.snapshots[i].values.dot(mv);
  }
  return gamma;
}

// ---------------------------------------------------------------------------
// Serialization (native text format)
// ---------------------------------------------------------------------------

inline void write_pod(const std::string& path, const PodResult& p) {
  auto out = detail::open_out(path);
  const int n = static_cast<int>(p.eigenvalues.size());
  out << "MORPHPOD v1\n";
  out << "n " << n << "\n";
  out << "r " << p.r << "\n";
  out << "trace " << fmt_float(p.trace) << "\n";
  out << "eigenvalues\n";
  for (int k = 0; k < n; ++k) out << fmt_float(p.eigenvalues[k]) << "\n";
  out << "eigenvectors\n";
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) out << (k ? " " : "") << fmt_float(p.eigenvectors(i, k));
    out << "\n";
  }
  out << "modes " << p.modes.size() << "\n";
  for (const auto& m : p.modes) write_field(out, m);
}

inline PodResult read_pod(const std::string& path, const TriangleMesh& mesh) {
  detail::LineReader rd(path);
  rd.expect("MORPHPOD v1");
  PodResult p;
  const int n = static_cast<int>(rd.numbers(1, "n", "n")[0]);
  if (n < 1) rd.fail("n must be positive");
  p.r = static_cast<int>(rd.numbers(1, "r", "r")[0]);
  p.trace = rd.numbers(1, "trace", "trace")[0];
  rd.expect("eigenvalues");
  p.eigenvalues.resize(n);
  for (int k = 0; k < n; ++k) p.eigenvalues[k] = rd.numbers(1, "eigenvalue")[0];
  rd.expect("eigenvectors");
  p.eigenvectors.resize(n, n);
  for (int i = 0; i < n; ++i) {
    const auto row = rd.numbers(n, "eigenvector row");
    for (int k = 0; k < n; ++k) p.eigenvectors(i, k) = row[k];
  }
  const int m = static_cast<int>(rd.numbers(1, "mode count", "modes")[0]);
  p.modes.reserve(m);
  for (int j = 0; j < m; ++j) p.modes.push_back(read_field(rd, mesh));
  return p;
}

}  // namespace morphopt
