#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "morphopt/error.hpp"
#include "morphopt/mesh.hpp"

namespace morphopt {

/// Point-location result. When the query falls outside the triangulation,
/// clamped is set and (tri, bary) describe the nearest point of the mesh.
struct LocateHit {
  int tri = -1;
  std::array<double, 3> bary{0.0, 0.0, 0.0};
  bool clamped = false;
  Vec2 point = Vec2::Zero();  // actual evaluation point (projected if clamped)
};

/// Point location in an arbitrarily deformed copy of a triangulation:
/// connectivity comes from the mesh, coordinates from an external position
/// array. Queries walk from a seed across the edge with the most negative
/// barycentric coordinate; a uniform grid over the positions supplies seeds.
class MeshLocator {
 public:
  MeshLocator(const TriangleMesh& mesh, std::vector<Vec2> positions)
      : mesh_(&mesh), pos_(std::move(positions)) {
    if (pos_.size() != mesh.nodes.size())
      throw Error("locator positions do not match mesh node count");
    lo_ = Vec2(std::numeric_limits<double>::max(), std::numeric_limits<double>::max());
    hi_ = -lo_;
    for (const auto& p : pos_) {
      lo_ = lo_.cwiseMin(p);
      hi_ = hi_.cwiseMax(p);
    }
    const int target = std::max(1, static_cast<int>(std::sqrt(mesh.triangle_count())));
    nx_ = ny_ = target;
    cell_.assign(static_cast<std::size_t>(nx_) * ny_, -1);
    // Any triangle whose centroid lands in the cell makes a fine seed; fill
    // empty cells afterwards from the nearest filled one.
    for (int t = 0; t < mesh.triangle_count(); ++t) {
      const auto& tri = mesh.triangles[t];
      const Vec2 c = (pos_[tri[0]] + pos_[tri[1]] + pos_[tri[2]]) / 3.0;
      cell_[cell_index(c)] = t;
    }
    int last = 0;
    for (auto& c : cell_)
      if (c < 0)
        c = last;
      else
        last = c;
  }

  explicit MeshLocator(const TriangleMesh& mesh)
      : MeshLocator(mesh, mesh.nodes) {}

  const std::vector<Vec2>& positions() const { return pos_; }

  /// Locates p, optionally starting the walk at seed_tri (pass the previous
  /// hit for coherent query streams).
  LocateHit locate(const Vec2& p, int seed_tri = -1) const {
    int t = (seed_tri >= 0 && seed_tri < mesh_->triangle_count())
                ? seed_tri
                : cell_[cell_index(p)];
    const int max_steps = 2 * mesh_->triangle_count() + 8;
    for (int step = 0; step < max_steps && t >= 0; ++step) {
      const auto bary = barycentric(t, p);
      int worst = 0;
      for (int a = 1; a < 3; ++a)
        if (bary[a] < bary[worst]) worst = a;
      if (bary[worst] >= -kInsideTol) {
        LocateHit hit;
        hit.tri = t;
        hit.bary = clamp_bary(bary);
        hit.point = p;
        return hit;
      }
      const int next = mesh_->neighbors[t][worst];
      if (next < 0) break;  // left the domain (or walking a folded region)
      t = next;
    }
    return brute_force(p);
  }

  /// P1 evaluation of a field given on the (reference) mesh at point p of
  /// the deformed configuration.
  double interpolate(const NodalField& field, const LocateHit& hit) const {
    const auto& tri = mesh_->triangles[hit.tri];
    return hit.bary[0] * field.scalar(tri[0]) + hit.bary[1] * field.scalar(tri[1]) +
           hit.bary[2] * field.scalar(tri[2]);
  }

  Vec2 interpolate2(const NodalField& field, const LocateHit& hit) const {
    const auto& tri = mesh_->triangles[hit.tri];
    return hit.bary[0] * field.vector2(tri[0]) + hit.bary[1] * field.vector2(tri[1]) +
           hit.bary[2] * field.vector2(tri[2]);
  }

  /// Piecewise-constant P1 gradient of a scalar field on one triangle, in
  /// the locator's coordinate configuration.
  Vec2 element_gradient_at(const NodalField& field, int tri) const {
    const auto& t = mesh_->triangles[tri];
    const double area = triangle_signed_area(pos_[t[0]], pos_[t[1]], pos_[t[2]]);
    const auto g = barycentric_gradients(pos_[t[0]], pos_[t[1]], pos_[t[2]], area);
    return field.scalar(t[0]) * g[0] + field.scalar(t[1]) * g[1] + field.scalar(t[2]) * g[2];
  }

 private:
  static constexpr double kInsideTol = 1e-12;

  std::array<double, 3> barycentric(int t, const Vec2& p) const {
    const auto& tri = mesh_->triangles[t];
    const Vec2 &p0 = pos_[tri[0]], &p1 = pos_[tri[1]], &p2 = pos_[tri[2]];
    const double area = triangle_signed_area(p0, p1, p2);
    if (area == 0.0) return {-1.0, -1.0, -1.0};
    return {triangle_signed_area(p, p1, p2) / area,
            triangle_signed_area(p0, p, p2) / area,
            triangle_signed_area(p0, p1, p) / area};
  }

  static std::array<double, 3> clamp_bary(std::array<double, 3> b) {
    for (double& v : b) v = std::clamp(v, 0.0, 1.0);
    const double s = b[0] + b[1] + b[2];
    for (double& v : b) v /= s;
    return b;
  }

  int cell_index(const Vec2& p) const {
    const Vec2 span = hi_ - lo_;
    const int i = std::clamp(
        static_cast<int>((p.x() - lo_.x()) / std::max(span.x(), 1e-300) * nx_), 0, nx_ - 1);
    const int j = std::clamp(
        static_cast<int>((p.y() - lo_.y()) / std::max(span.y(), 1e-300) * ny_), 0, ny_ - 1);
    return j * nx_ + i;
  }

  /// Scans all triangles; outside the mesh, clamps to the closest point of
  /// the closest triangle.
  LocateHit brute_force(const Vec2& p) const {
    LocateHit best;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int t = 0; t < mesh_->triangle_count(); ++t) {
      const auto bary = barycentric(t, p);
      if (bary[0] >= -kInsideTol && bary[1] >= -kInsideTol && bary[2] >= -kInsideTol) {
        best.tri = t;
        best.bary = clamp_bary(bary);
        best.point = p;
        best.clamped = false;
        return best;
      }
      const auto [q, qb] = closest_point(t, p);
      const double d = (q - p).squaredNorm();
      if (d < best_dist) {
        best_dist = d;
        best.tri = t;
        best.bary = qb;
        best.point = q;
        best.clamped = true;
      }
    }
    if (best.tri < 0) throw NumericalError("point location failed");
    return best;
  }

  std::pair<Vec2, std::array<double, 3>> closest_point(int t, const Vec2& p) const {
    const auto& tri = mesh_->triangles[t];
    Vec2 best = pos_[tri[0]];
    std::array<double, 3> best_bary{1.0, 0.0, 0.0};
    double best_dist = std::numeric_limits<double>::infinity();
    for (int e = 0; e < 3; ++e) {
      const int a = e, b = (e + 1) % 3;
      const Vec2 &pa = pos_[tri[a]], &pb = pos_[tri[b]];
      const Vec2 d = pb - pa;
      const double len2 = d.squaredNorm();
      const double s = len2 > 0.0 ? std::clamp((p - pa).dot(d) / len2, 0.0, 1.0) : 0.0;
      const Vec2 q = pa + s * d;
      const double dist = (q - p).squaredNorm();
      if (dist < best_dist) {
        best_dist = dist;
        best = q;
        best_bary = {0.0, 0.0, 0.0};
        best_bary[a] = 1.0 - s;
        best_bary[b] = s;
      }
    }
    return {best, best_bary};
  }

  const TriangleMesh* mesh_;
  std::vector<Vec2> pos_;
  Vec2 lo_, hi_;
  int nx_ = 1, ny_ = 1;
  std::vector<int> cell_;
};

}  // namespace morphopt
