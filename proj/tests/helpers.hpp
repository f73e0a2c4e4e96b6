#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <morphopt/morphopt.hpp>

namespace testutil {

using morphopt::NodalField;
using morphopt::TriangleMesh;
using morphopt::Vec2;

inline std::shared_ptr<TriangleMesh> unit_square(int k) {
  return morphopt::build_rectangle_mesh(k, k, 0.0, 1.0, 0.0, 1.0);
}

/// Mesh from explicit nodes/triangles (finalize builds boundary data).
inline std::shared_ptr<TriangleMesh> make_mesh(std::vector<Vec2> nodes,
                                               std::vector<std::array<int, 3>> tris) {
  auto mesh = std::make_shared<TriangleMesh>();
  mesh->nodes = std::move(nodes);
  mesh->triangles = std::move(tris);
  mesh->finalize();
  return mesh;
}

inline NodalField eval_scalar(const TriangleMesh& mesh, const auto& fn) {
  NodalField f = morphopt::make_field(mesh, 1);
  for (int a = 0; a < mesh.node_count(); ++a) f.values[a] = fn(mesh.nodes[a]);
  return f;
}

inline NodalField eval_vector(const TriangleMesh& mesh, const auto& fn) {
  NodalField f = morphopt::make_field(mesh, 2);
  for (int a = 0; a < mesh.node_count(); ++a) f.set_vector2(a, fn(mesh.nodes[a]));
  return f;
}

inline NodalField random_scalar_field(const TriangleMesh& mesh, std::mt19937& rng,
                                      double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  NodalField f = morphopt::make_field(mesh, 1);
  for (auto& v : f.values) v = dist(rng);
  return f;
}

inline NodalField random_vector_field(const TriangleMesh& mesh, std::mt19937& rng,
                                      double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  NodalField f = morphopt::make_field(mesh, 2);
  for (auto& v : f.values) v = dist(rng);
  return f;
}

/// Smooth pseudo-random field: a few Gaussian bumps with random centers.
inline NodalField random_smooth_field(const TriangleMesh& mesh, std::mt19937& rng,
                                      int bumps = 3) {
  const Vec2 lo = mesh.bbox_min(), hi = mesh.bbox_max();
  std::uniform_real_distribution<double> ux(lo.x(), hi.x()), uy(lo.y(), hi.y());
  std::uniform_real_distribution<double> amp(-1.0, 1.0);
  const double width = 0.08 * (hi - lo).squaredNorm();
  std::vector<double> cx(bumps), cy(bumps), ca(bumps);
  for (int b = 0; b < bumps; ++b) {
    cx[b] = ux(rng);
    cy[b] = uy(rng);
    ca[b] = amp(rng);
  }
  return eval_scalar(mesh, [&](const Vec2& p) {
    double s = 0.0;
    for (int b = 0; b < bumps; ++b)
      s += ca[b] * std::exp(-((p.x() - cx[b]) * (p.x() - cx[b]) +
                              (p.y() - cy[b]) * (p.y() - cy[b])) / width);
    return s;
  });
}

/// Smooth pseudo-random displacement that vanishes nowhere in particular but
/// stays small enough to keep elements positively oriented.
inline NodalField random_smooth_displacement(const TriangleMesh& mesh, std::mt19937& rng,
                                             double magnitude) {
  const Vec2 lo = mesh.bbox_min(), hi = mesh.bbox_max();
  std::uniform_real_distribution<double> phase(0.0, 6.28318);
  const double px = phase(rng), py = phase(rng), qx = phase(rng), qy = phase(rng);
  const Vec2 span = hi - lo;
  return eval_vector(mesh, [&](const Vec2& p) {
    const double sx = (p.x() - lo.x()) / span.x(), sy = (p.y() - lo.y()) / span.y();
    return Vec2(magnitude * std::sin(3.1 * sx + px) * std::cos(2.3 * sy + py),
                magnitude * std::cos(2.7 * sx + qx) * std::sin(3.7 * sy + qy));
  });
}

/// Smooth displacement that vanishes on the bounding box of the mesh, i.e. on
/// the whole boundary for rectangle meshes. Morphing perturbations live in
/// this space: boundary points must stay on the boundary, and the composed
/// snapshot is only differentiable when deformed nodes remain inside the
/// domain.
inline NodalField random_interior_displacement(const TriangleMesh& mesh, std::mt19937& rng,
                                               double magnitude) {
  NodalField d = random_smooth_displacement(mesh, rng, magnitude);
  const Vec2 lo = mesh.bbox_min(), hi = mesh.bbox_max();
  const Vec2 span = hi - lo;
  for (int a = 0; a < mesh.node_count(); ++a) {
    const double sx = (mesh.nodes[a].x() - lo.x()) / span.x();
    const double sy = (mesh.nodes[a].y() - lo.y()) / span.y();
    d.set_vector2(a, 16.0 * sx * (1.0 - sx) * sy * (1.0 - sy) * d.vector2(a));
  }
  return d;
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

}  // namespace testutil
