#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "morphopt/error.hpp"
#include "morphopt/mesh.hpp"

namespace morphopt {

/// A geometric morphing φ_geo = Id + displacement from the reference domain
/// onto a sample's domain.
struct GeometricMorphing {
  std::shared_ptr<const TriangleMesh> reference;
  std::shared_ptr<const TriangleMesh> target;  // may be null (identity case)
  NodalField displacement;
  std::string method;  // "rbf" or "identity"
};

inline GeometricMorphing identity_morphing(std::shared_ptr<const TriangleMesh> reference) {
  GeometricMorphing g;
  g.displacement = make_field(*reference, 2);
  g.reference = std::move(reference);
  g.method = "identity";
  return g;
}

namespace detail {
/// Thin-plate-spline radial basis r² log r (zero at r = 0).
inline double tps(double r) { return r > 0.0 ? r * r * std::log(r) : 0.0; }
}  // namespace detail

/// Interpolates prescribed boundary displacements to all mesh nodes with a
/// thin-plate-spline RBF plus an affine polynomial (which the TPS system
/// reproduces exactly). `boundary_nodes` are reference node indices with
/// prescribed deformed positions `target_positions`; all listed nodes land
/// exactly on their targets, interior nodes follow smoothly.
inline GeometricMorphing rbf_geometric_morphing(
    std::shared_ptr<const TriangleMesh> reference, const std::vector<int>& boundary_nodes,
    const std::vector<Vec2>& target_positions,
    std::shared_ptr<const TriangleMesh> target = nullptr) {
  const auto& mesh = *reference;
  const int m = static_cast<int>(boundary_nodes.size());
  if (m != static_cast<int>(target_positions.size()))
    throw Error("boundary correspondence size mismatch");
  if (m < 3) throw Error("RBF morphing needs at least 3 correspondence points");
  for (int k : boundary_nodes)
    if (k < 0 || k >= mesh.node_count()) throw Error("correspondence node index out of range");

  bool moved = false;
  for (int k = 0; k < m; ++k)
    if ((target_positions[k] - mesh.nodes[boundary_nodes[k]]).norm() >
        1e-14 * mesh.diameter())
      moved = true;
  if (!moved) {
    GeometricMorphing g = identity_morphing(reference);
    g.target = std::move(target);
    return g;
  }

  // TPS system with affine side conditions:
  //   [Φ P; Pᵀ 0] [w; a] = [d; 0],  P_k = (1, x_k, y_k).
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m + 3, m + 3);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m + 3, 2);
  for (int i = 0; i < m; ++i) {
    const Vec2& pi = mesh.nodes[boundary_nodes[i]];
    for (int j = 0; j < m; ++j)
      a(i, j) = detail::tps((pi - mesh.nodes[boundary_nodes[j]]).norm());
    a(i, m) = a(m, i) = 1.0;
    a(i, m + 1) = a(m + 1, i) = pi.x();
    a(i, m + 2) = a(m + 2, i) = pi.y();
    const Vec2 d = target_positions[i] - pi;
    rhs(i, 0) = d.x();
    rhs(i, 1) = d.y();
  }
  const Eigen::MatrixXd sol = Eigen::PartialPivLU<Eigen::MatrixXd>(a).solve(rhs);
  if (!sol.allFinite()) throw NumericalError("singular TPS interpolation system");

  GeometricMorphing g;
  g.reference = reference;
  g.target = std::move(target);
  g.method = "rbf";
  g.displacement = make_field(mesh, 2);
  for (int node = 0; node < mesh.node_count(); ++node) {
    const Vec2& p = mesh.nodes[node];
    Vec2 d(sol(m, 0) + sol(m + 1, 0) * p.x() + sol(m + 2, 0) * p.y(),
           sol(m, 1) + sol(m + 1, 1) * p.x() + sol(m + 2, 1) * p.y());
    for (int j = 0; j < m; ++j) {
      const double phi = detail::tps((p - mesh.nodes[boundary_nodes[j]]).norm());
      d += phi * Vec2(sol(j, 0), sol(j, 1));
    }
    g.displacement.set_vector2(node, d);
  }

  const auto inverted = detect_inverted(mesh, g.displacement);
  if (!inverted.empty())
    throw NumericalError("RBF geometric morphing inverted " +
                         std::to_string(inverted.size()) + " elements");
  return g;
}

/// Correspondence by shared topology: every boundary node of the reference
/// maps to the same node index in the target mesh.
inline GeometricMorphing rbf_geometric_morphing(
    std::shared_ptr<const TriangleMesh> reference,
    std::shared_ptr<const TriangleMesh> target) {
  const auto& mesh = *reference;
  if (!target) throw Error("missing target mesh");
  if (target->node_count() != mesh.node_count())
    throw Error("target mesh topology does not match the reference");
  std::vector<int> nodes;
  std::vector<Vec2> positions;
  for (int a = 0; a < mesh.node_count(); ++a) {
    if (!mesh.is_boundary_node(a)) continue;
    nodes.push_back(a);
    positions.push_back(target->nodes[a]);
  }
  return rbf_geometric_morphing(std::move(reference), nodes, positions, std::move(target));
}

}  // namespace morphopt
