#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "morphopt/mesh.hpp"
#include "morphopt/optimizer.hpp"
#include "morphopt/sensitivity.hpp"

namespace morphopt {

/// Rectangle (−1,1) × (−1.25,1.25) triangulated structurally; the default
/// resolution gives 2989 nodes.
inline std::shared_ptr<TriangleMesh> toy_mesh(int nx = 48, int ny = 60) {
  return build_rectangle_mesh(nx, ny, -1.0, 1.0, -1.25, 1.25);
}

/// Uniform endpoint-inclusive grid of slope parameters.
inline std::vector<double> toy_betas(int n, double lo = -0.38, double hi = 0.38) {
  if (n < 1) throw Error("toy family needs n >= 1");
  std::vector<double> betas(n);
  for (int i = 0; i < n; ++i)
    betas[i] = n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (n - 1);
  return betas;
}

/// Gaussian ridge along the line y = β(x+1):
///   u(x, y) = exp(−(β(x+1) − y)² / 0.05).
inline NodalField toy_snapshot(const TriangleMesh& mesh, double beta) {
  return make_scalar_field(mesh, [beta](const Vec2& p) {
    const double d = beta * (p.x() + 1.0) - p.y();
    return std::exp(-d * d / 0.05);
  });
}

/// The full toy alignment problem: n Gaussian-ridge snapshots on one shared
/// domain (so the optimizer's fixed-operator path applies).
inline MorphingProblem toy_problem(std::shared_ptr<const TriangleMesh> mesh, int n) {
  MorphingProblem prob;
  prob.reference = mesh;
  const auto betas = toy_betas(n);
  prob.sources.reserve(n);
  auto locator = std::make_shared<MeshLocator>(*mesh);
  for (double beta : betas) {
    SnapshotSource src;
    src.mesh = mesh;
    src.field = toy_snapshot(*mesh, beta);
    src.locator = locator;  // shared: all snapshots live on the same mesh
    prob.sources.push_back(std::move(src));
  }
  return prob;
}

}  // namespace morphopt
