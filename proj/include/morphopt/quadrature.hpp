#pragma once

#include <array>
#include <vector>

#include "morphopt/error.hpp"
#include "morphopt/mesh.hpp"

namespace morphopt {

/// Barycentric quadrature point; weights sum to 1 and are multiplied by the
/// triangle area on use.
struct QuadPoint {
  double l0, l1, l2;
  double weight;
};

/// Symmetric triangle rules exact for polynomials up to the given degree.
inline const std::vector<QuadPoint>& triangle_rule(int degree) {
  static const std::vector<QuadPoint> centroid = {
      {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 1.0}};
  static const std::vector<QuadPoint> midpoints = {
      {0.5, 0.5, 0.0, 1.0 / 3.0},
      {0.0, 0.5, 0.5, 1.0 / 3.0},
      {0.5, 0.0, 0.5, 1.0 / 3.0}};
  // Dunavant's 6-point rule, exact to degree 4.
  static const std::vector<QuadPoint> dunavant4 = [] {
    std::vector<QuadPoint> pts;
    const double w1 = 0.223381589678011, a1 = 0.108103018168070, b1 = 0.445948490915965;
    const double w2 = 0.109951743655322, a2 = 0.816847572980459, b2 = 0.091576213509771;
    for (auto [a, b, w] : {std::array<double, 3>{a1, b1, w1}, {a2, b2, w2}}) {
      pts.push_back({a, b, b, w});
      pts.push_back({b, a, b, w});
      pts.push_back({b, b, a, w});
    }
    return pts;
  }();
  switch (degree) {
    case 0:
    case 1:
      return centroid;
    case 2:
      return midpoints;
    case 3:
    case 4:
      return dunavant4;
    default:
      throw Error("no triangle quadrature rule of degree " + std::to_string(degree));
  }
}

/// Integrates fn(point, barycentric) over one triangle given explicit vertex
/// positions (deformed configurations reuse reference connectivity).
template <typename Fn>
double integrate_triangle(const Vec2& p0, const Vec2& p1, const Vec2& p2, int degree,
                          Fn&& fn) {
  const double area = triangle_signed_area(p0, p1, p2);
  double sum = 0.0;
  for (const auto& q : triangle_rule(degree)) {
    const Vec2 x = q.l0 * p0 + q.l1 * p1 + q.l2 * p2;
    sum += q.weight * fn(x, std::array<double, 3>{q.l0, q.l1, q.l2});
  }
  return sum * area;
}

template <typename Fn>
double integrate(const TriangleMesh& mesh, int degree, Fn&& fn) {
  double total = 0.0;
  for (const auto& t : mesh.triangles)
    total += integrate_triangle(mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]],
                                degree, [&](const Vec2& x, const std::array<double, 3>&) {
                                  return fn(x);
                                });
  return total;
}

}  // namespace morphopt
