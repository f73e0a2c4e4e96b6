#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "morphopt/error.hpp"
#include "morphopt/fem.hpp"
#include "morphopt/locate.hpp"
#include "morphopt/mesh.hpp"
#include "morphopt/parallel.hpp"
#include "morphopt/pod.hpp"

namespace morphopt {

/// One snapshot of the optimization problem: the field u_i on its own domain
/// mesh plus a point locator over that mesh. The locator owns the source
/// coordinates; `field` lives on the source mesh.
struct SnapshotSource {
  std::shared_ptr<const TriangleMesh> mesh;
  NodalField field;  // scalar
  std::shared_ptr<const MeshLocator> locator;

  static SnapshotSource make(std::shared_ptr<const TriangleMesh> mesh, NodalField field) {
    SnapshotSource s;
    check_field(*mesh, field);
    s.locator = std::make_shared<MeshLocator>(*mesh);
    s.mesh = std::move(mesh);
    s.field = std::move(field);
    return s;
  }
};

/// Everything the ascent step needs about the current morphing family:
/// pulled-back snapshots, their correlation POD, the efficiency J_r, and the
/// load vectors b_i of the differential DJ_r (one per snapshot; the pairing
/// DJ_r[Ψ] = Σ_i b_i·ψ_i is exact for the discrete functional).
struct FamilyDerivatives {
  Eigen::MatrixXd u;                         // node x snapshot pulled-back values
  std::vector<std::vector<Vec2>> gradients;  // [snapshot][node] of ∇u_i ∘ φ_i
  Eigen::MatrixXd mu;                        // mass * u
  Eigen::MatrixXd c;                         // correlation matrix
  PodResult pod;
  double j = 0.0;
  std::vector<Eigen::VectorXd> loads;  // b_i, interleaved 2-component vectors
  int clamped_points = 0;              // deformed nodes that left the source domain
};

/// Coefficient matrix of Lemma-style sensitivities:
///   Q = (2/tr) Σ_{k≤r} ζ_k ζ_kᵀ − (2 Σ_{k≤r} λ_k / tr²) I.
inline Eigen::MatrixXd sensitivity_coefficients(const PodResult& p, int r) {
  const int n = static_cast<int>(p.eigenvalues.size());
  if (r < 1 || r > n) throw Error("r out of range");
  const double tr = p.trace;
  if (!(tr > 0.0)) throw NumericalError("zero-trace correlation matrix");
  const Eigen::MatrixXd zr = p.eigenvectors.leftCols(r);
  Eigen::MatrixXd q = (2.0 / tr) * (zr * zr.transpose());
  q.diagonal().array() -= 2.0 * p.eigenvalues.head(r).sum() / (tr * tr);
  return q;
}

/// Evaluates the family at the given deformed node positions: pulls back
/// every snapshot, forms the correlation POD, and assembles the DJ_r loads
///   b_i(node a) = [Σ_j Q_ij (M u_j^ref)(a)] · ∇u_i(φ_i(a)).
/// `seeds`, when non-null, caches one source triangle per (snapshot, node)
/// across calls for walk locality.
inline FamilyDerivatives evaluate_family(const TriangleMesh& reference,
                                         const SparseMat& mass,
                                         const std::vector<SnapshotSource>& sources,
                                         const std::vector<std::vector<Vec2>>& deformed_pos,
                                         int r,
                                         std::vector<std::vector<int>>* seeds = nullptr,
                                         int workers = 1) {
  const int n = static_cast<int>(sources.size());
  if (n < 1) throw Error("empty snapshot set");
  if (static_cast<int>(deformed_pos.size()) != n)
    throw Error("one deformed configuration required per snapshot");
  const int nn = reference.node_count();

  FamilyDerivatives fd;
  fd.u.resize(nn, n);
  fd.gradients.assign(n, {});
  std::vector<int> clamped(n, 0);
  // Per-snapshot work writes disjoint slots, so results are bit-identical
  // for any worker count.
  parallel_for(n, workers, [&](int i) {
    std::vector<int>* seed_row = seeds ? &(*seeds)[i] : nullptr;
    const auto samples =
        pullback_samples(*sources[i].locator, sources[i].field, deformed_pos[i], seed_row);
    fd.gradients[i].resize(nn);
    for (int a = 0; a < nn; ++a) {
      fd.u(a, i) = samples[a].value;
      fd.gradients[i][a] = samples[a].gradient;
      clamped[i] += samples[a].clamped ? 1 : 0;
    }
  });
  for (int i = 0; i < n; ++i) fd.clamped_points += clamped[i];

  fd.mu = mass * fd.u;
  fd.c = fd.u.transpose() * fd.mu;
  fd.c = 0.5 * (fd.c + fd.c.transpose()).eval();
  fd.pod = pod(fd.c, r);
  fd.j = efficiency(fd.pod, r);

  const Eigen::MatrixXd q = sensitivity_coefficients(fd.pod, r);
  const Eigen::MatrixXd s = fd.mu * q;  // column i = Σ_j Q_ij M u_j^ref
  fd.loads.assign(n, Eigen::VectorXd(2 * nn));
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < nn; ++a) {
      const Vec2 v = s(a, i) * fd.gradients[i][a];
      fd.loads[i][2 * a] = v.x();
      fd.loads[i][2 * a + 1] = v.y();
    }
  }
  return fd;
}

/// DJ_r[Φ][Ψ] through the load-vector pairing (Eq.-(9)-style route).
inline double differential_j(const FamilyDerivatives& fd,
                             const std::vector<NodalField>& directions) {
  if (directions.size() != fd.loads.size())
    throw Error("one direction required per snapshot");
  double sum = 0.0;
  for (std::size_t i = 0; i < fd.loads.size(); ++i) {
    if (directions[i].components != 2) throw Error("directions must be vector fields");
    sum += fd.loads[i].dot(directions[i].values);
  }
  return sum;
}

/// DJ_r[Φ][Ψ] through the eigenvalue-perturbation double sum (Lemma-style
/// route): DC_ij = ⟨Du_i^ref, u_j^ref⟩ + ⟨u_i^ref, Du_j^ref⟩ with
/// Du_i^ref(a) = ∇u_i(φ_i(a))·ψ_i(a), then
/// DJ = Σ_{k≤r} ζ_kᵀ DC ζ_k / tr − Σ_{k≤r} λ_k tr(DC) / tr².
/// Kept as an independent implementation; must agree with differential_j.
inline double differential_j_lemma(const FamilyDerivatives& fd,
                                   const std::vector<NodalField>& directions) {
  const int n = static_cast<int>(fd.loads.size());
  if (static_cast<int>(directions.size()) != n)
    throw Error("one direction required per snapshot");
  const int nn = static_cast<int>(fd.u.rows());
  Eigen::MatrixXd h(nn, n);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < nn; ++a)
      h(a, i) = fd.gradients[i][a].dot(directions[i].vector2(a));
  const Eigen::MatrixXd half = h.transpose() * fd.mu;  // ⟨Du_i, u_j⟩
  const Eigen::MatrixXd dc = half + half.transpose();
  const int r = fd.pod.r;
  const double tr = fd.pod.trace;
  double sum = 0.0;
  for (int k = 0; k < r; ++k) {
    const Eigen::VectorXd zk = fd.pod.eigenvectors.col(k);
    sum += zk.dot(dc * zk) / tr;
  }
  sum -= fd.pod.eigenvalues.head(r).sum() * dc.trace() / (tr * tr);
  return sum;
}

/// Nodal sensitivity fields f_i = M⁻¹ b_i, the L² Riesz representatives of
/// the DJ_r load functionals (⟨f_i, ψ⟩_{Ω_0} recovers b_i·ψ exactly).
/// `scalar_mass` must hold a factorization of the scalar mass matrix.
inline std::vector<NodalField> sensitivity_fields(const TriangleMesh& reference,
                                                  const SpdSolver& scalar_mass,
                                                  const FamilyDerivatives& fd) {
  const int nn = reference.node_count();
  std::vector<NodalField> out;
  out.reserve(fd.loads.size());
  for (const auto& b : fd.loads) {
    Eigen::VectorXd bx(nn), by(nn);
    for (int a = 0; a < nn; ++a) {
      bx[a] = b[2 * a];
      by[a] = b[2 * a + 1];
    }
    const Eigen::VectorXd fx = scalar_mass.solve(bx);
    const Eigen::VectorXd fy = scalar_mass.solve(by);
    NodalField f = make_field(reference, 2);
    for (int a = 0; a < nn; ++a) f.set_vector2(a, Vec2(fx[a], fy[a]));
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace morphopt
