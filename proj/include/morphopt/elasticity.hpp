#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "morphopt/error.hpp"
#include "morphopt/fem.hpp"
#include "morphopt/mesh.hpp"

namespace morphopt {

struct ElasticParams {
  double young_modulus = 1.0;
  double poisson_ratio = 0.3;
  double penalty_alpha = 1e12;

  void validate() const {
    if (!(young_modulus > 0.0)) throw ConfigError("young_modulus must be > 0");
    if (!(poisson_ratio > -1.0 && poisson_ratio < 0.5))
      throw ConfigError("poisson_ratio must lie in (-1, 1/2)");
    if (!(penalty_alpha >= 0.0)) throw ConfigError("penalty_alpha must be >= 0");
  }
};

/// One lumped contribution of the boundary-normal penalty: alpha * weight *
/// (u(node)·normal)(v(node)·normal). Each boundary edge produces an entry at
/// both of its end nodes, so corner nodes collect the normals of both
/// incident facets.
struct PenaltyEntry {
  int node;
  Vec2 normal;
  double weight;
};

/// Penalty entries of the boundary in the configuration given by
/// `positions` (deformed edge lengths and normals, reference node indices).
inline std::vector<PenaltyEntry> boundary_penalty_entries(
    const TriangleMesh& mesh, const std::vector<Vec2>& positions) {
  std::vector<PenaltyEntry> entries;
  entries.reserve(mesh.boundary_edges.size() * 2);
  for (const auto& e : mesh.boundary_edges) {
    const Vec2 t = positions[e.b] - positions[e.a];
    const double len = t.norm();
    if (len <= 0.0) throw NumericalError("degenerate deformed boundary edge");
    const Vec2 n(t.y() / len, -t.x() / len);
    entries.push_back({e.a, n, 0.5 * len});
    entries.push_back({e.b, n, 0.5 * len});
  }
  return entries;
}

inline std::vector<PenaltyEntry> boundary_penalty_entries(const TriangleMesh& mesh) {
  return boundary_penalty_entries(mesh, mesh.nodes);
}

/// Plane-stress elasticity form with lumped boundary-normal penalty:
///   a(u,v) = ∫ sigma(u):eps(v) + alpha * sum_entries w (u·n)(v·n),
/// sigma = E/(1+nu) eps + E nu/((1+nu)(1-nu)) tr(eps) I.
/// Vector dofs are interleaved: dof(node a, component c) = 2a + c.
inline SparseMat assemble_elasticity(const TriangleMesh& mesh, const ElasticParams& params,
                                     const std::vector<PenaltyEntry>& penalty) {
  params.validate();
  const double e = params.young_modulus, nu = params.poisson_ratio;
  const double mu = e / (2.0 * (1.0 + nu));
  const double lambda = e * nu / ((1.0 + nu) * (1.0 - nu));
  Eigen::Matrix3d d;
  d << lambda + 2.0 * mu, lambda, 0.0,
       lambda, lambda + 2.0 * mu, 0.0,
       0.0, 0.0, mu;

  std::vector<Triplet> trip;
  trip.reserve(mesh.triangles.size() * 36 + penalty.size() * 4);
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double area = signed_area(mesh, t);
    const auto g = barycentric_gradients(mesh.nodes[tri[0]], mesh.nodes[tri[1]],
                                         mesh.nodes[tri[2]], area);
    Eigen::Matrix<double, 3, 6> b = Eigen::Matrix<double, 3, 6>::Zero();
    for (int a = 0; a < 3; ++a) {
      b(0, 2 * a) = g[a].x();
      b(1, 2 * a + 1) = g[a].y();
      b(2, 2 * a) = g[a].y();
      b(2, 2 * a + 1) = g[a].x();
    }
    const Eigen::Matrix<double, 6, 6> ke = area * b.transpose() * d * b;
    for (int a = 0; a < 6; ++a)
      for (int c = 0; c < 6; ++c)
        trip.emplace_back(2 * tri[a / 2] + a % 2, 2 * tri[c / 2] + c % 2, ke(a, c));
  }
  for (const auto& p : penalty) {
    const double s = params.penalty_alpha * p.weight;
    for (int a = 0; a < 2; ++a)
      for (int c = 0; c < 2; ++c)
        trip.emplace_back(2 * p.node + a, 2 * p.node + c, s * p.normal[a] * p.normal[c]);
  }
  SparseMat k(2 * mesh.node_count(), 2 * mesh.node_count());
  k.setFromTriplets(trip.begin(), trip.end());
  return k;
}

/// Polytopal fast path (target domain equal to the reference and facets
/// mapping onto themselves): the penalty uses the reference facet normals,
/// so the operator can be assembled once and reused every iteration.
inline SparseMat assemble_elasticity_fixed(const TriangleMesh& mesh,
                                           const ElasticParams& params) {
  return assemble_elasticity(mesh, params, boundary_penalty_entries(mesh));
}

/// Riesz-representative solver for the penalized elasticity form. A tiny
/// mass regularization (1e-10 x the elastic diagonal scale) removes the
/// tangential rigid-motion nullspace that the normal penalty cannot see
/// (e.g. sliding along a straight boundary); it is added at solve setup so
/// the assembled form itself stays exact. The scale is a low quantile of
/// the diagonal: interior rows carry only elastic terms, so the quantile
/// ignores the huge penalty-inflated boundary rows that would otherwise
/// make the regularization visible at solver accuracy.
class RieszSolver {
 public:
  RieszSolver(const TriangleMesh& mesh, const SparseMat& form) {
    Eigen::VectorXd diag = form.diagonal();
    const auto q = diag.size() / 4;
    std::nth_element(diag.data(), diag.data() + q, diag.data() + diag.size());
    const double scale = std::abs(diag[q]);
    const SparseMat mass2 = expand_to_vector(assemble_mass(mesh));
    solver_.factorize(form + (1e-10 * scale) * mass2);
  }

  /// Solves a(u, v) = rhs^T v for all nodal directions v; rhs is the load
  /// vector of the functional (already integrated against test functions).
  NodalField solve(const TriangleMesh& mesh, const Eigen::VectorXd& rhs) const {
    if (rhs.size() != 2 * mesh.node_count())
      throw Error("riesz rhs size mismatch");
    NodalField u = make_field(mesh, 2);
    u.values = solver_.solve(rhs);
    return u;
  }

 private:
  SpdSolver solver_;
};

/// Low-pass filter (K + c2 M) u = c2 M u_ref with natural boundary
/// conditions; constants are fixed points and the mean of u_ref is
/// preserved. The factorization is reused across fields for one c2.
class Smoother {
 public:
  Smoother(const TriangleMesh& mesh, double c2) : mesh_(&mesh), c2_(c2) {
    if (!(c2 > 0.0)) throw ConfigError("smoothing parameter c2 must be > 0");
    mass_ = assemble_mass(mesh);
    // Scale-balanced assembly: K/c2 + M keeps the matrix well conditioned
    // for very large c2 (the 1e8 no-smoothing limit).
    solver_.factorize(SparseMat((1.0 / c2) * assemble_laplacian(mesh)) + mass_);
  }

  NodalField apply(const NodalField& u_ref) const {
    check_field(*mesh_, u_ref);
    if (u_ref.components != 1) throw Error("smoother expects a scalar field");
    NodalField out = make_field(*mesh_, 1);
    out.values = solver_.solve(mass_ * u_ref.values);
    return out;
  }

  double c2() const { return c2_; }

 private:
  const TriangleMesh* mesh_;
  double c2_;
  SparseMat mass_;
  SpdSolver solver_;
};

inline NodalField smooth_field(const TriangleMesh& mesh, const NodalField& u_ref,
                               double c2) {
  return Smoother(mesh, c2).apply(u_ref);
}

}  // namespace morphopt
