#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "morphopt/error.hpp"

namespace morphopt {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Boundary edge directed so the domain lies on its left (the edge appears
/// with this orientation in exactly one triangle of a CCW mesh).
struct BoundaryEdge {
  int a = -1;
  int b = -1;
  int facet = -1;
};

namespace detail {
inline std::uint64_t next_mesh_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}
}  // namespace detail

/// Planar triangulation with boundary topology. Triangles are
/// counterclockwise with positive signed area; boundary_edges is exactly the
/// set of edges incident to one triangle; facet_normals holds the outward
/// unit normal of each boundary edge in the undeformed configuration.
class TriangleMesh {
 public:
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> triangles;
  std::vector<BoundaryEdge> boundary_edges;
  std::vector<Vec2> facet_normals;  // per boundary edge

  /// Neighbor triangle across the edge opposite local vertex v, or -1 on the
  /// boundary. Filled by finalize().
  std::vector<std::array<int, 3>> neighbors;

  std::uint64_t id() const { return id_; }
  int node_count() const { return static_cast<int>(nodes.size()); }
  int triangle_count() const { return static_cast<int>(triangles.size()); }

  Vec2 bbox_min() const { return bbox_min_; }
  Vec2 bbox_max() const { return bbox_max_; }
  double diameter() const { return (bbox_max_ - bbox_min_).norm(); }
  double area() const { return total_area_; }

  /// Index into boundary_edges of the edges meeting each node (empty for
  /// interior nodes).
  const std::vector<std::vector<int>>& node_boundary_edges() const {
    return node_boundary_edges_;
  }
  bool is_boundary_node(int a) const { return !node_boundary_edges_[a].empty(); }

  /// Validates orientation, extracts boundary topology if absent, assigns
  /// facet ids, and builds the neighbor table. Must be called after the node
  /// and triangle arrays are filled.
  void finalize();

 private:
  std::uint64_t id_ = detail::next_mesh_id();
  Vec2 bbox_min_ = Vec2::Zero();
  Vec2 bbox_max_ = Vec2::Zero();
  double total_area_ = 0.0;
  std::vector<std::vector<int>> node_boundary_edges_;
};

/// Scalar or vector values at mesh nodes with P1 interpolation semantics.
/// Storage is node-major: values[node * components + c].
struct NodalField {
  std::uint64_t mesh_id = 0;
  int components = 1;
  Eigen::VectorXd values;

  int node_count() const {
    return components > 0 ? static_cast<int>(values.size()) / components : 0;
  }
  double scalar(int node) const { return values[node]; }
  Vec2 vector2(int node) const {
    return Vec2(values[2 * node], values[2 * node + 1]);
  }
  void set_vector2(int node, const Vec2& v) {
    values[2 * node] = v.x();
    values[2 * node + 1] = v.y();
  }
};

inline NodalField make_field(const TriangleMesh& mesh, int components) {
  NodalField f;
  f.mesh_id = mesh.id();
  f.components = components;
  f.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.node_count()) * components);
  return f;
}

template <typename Fn>
NodalField make_scalar_field(const TriangleMesh& mesh, Fn&& fn) {
  NodalField f = make_field(mesh, 1);
  for (int a = 0; a < mesh.node_count(); ++a) f.values[a] = fn(mesh.nodes[a]);
  return f;
}

template <typename Fn>
NodalField make_vector_field(const TriangleMesh& mesh, Fn&& fn) {
  NodalField f = make_field(mesh, 2);
  for (int a = 0; a < mesh.node_count(); ++a) f.set_vector2(a, fn(mesh.nodes[a]));
  return f;
}

inline void check_field(const TriangleMesh& mesh, const NodalField& f) {
  if (f.mesh_id != mesh.id())
    throw Error("field does not live on the given mesh");
  if (f.values.size() != static_cast<Eigen::Index>(mesh.node_count()) * f.components)
    throw Error("field size does not match node count x components");
  if (!f.values.allFinite()) throw NumericalError("field contains non-finite values");
}

inline double triangle_signed_area(const Vec2& p0, const Vec2& p1, const Vec2& p2) {
  return 0.5 * ((p1.x() - p0.x()) * (p2.y() - p0.y()) -
                (p2.x() - p0.x()) * (p1.y() - p0.y()));
}

/// One half the cross product of the edge vectors; positive for CCW.
inline double signed_area(const TriangleMesh& mesh, int tri_index) {
  if (tri_index < 0 || tri_index >= mesh.triangle_count())
    throw Error("triangle index out of range");
  const auto& t = mesh.triangles[tri_index];
  return triangle_signed_area(mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]);
}

inline double signed_area(const std::vector<Vec2>& positions,
                          const std::array<int, 3>& tri) {
  return triangle_signed_area(positions[tri[0]], positions[tri[1]], positions[tri[2]]);
}

/// Deformed node positions x + d(x) of a displacement field.
inline std::vector<Vec2> deformed_positions(const TriangleMesh& mesh,
                                            const NodalField& displacement) {
  check_field(mesh, displacement);
  if (displacement.components != 2)
    throw Error("displacement field must have 2 components");
  std::vector<Vec2> pos(mesh.nodes.size());
  for (int a = 0; a < mesh.node_count(); ++a)
    pos[a] = mesh.nodes[a] + displacement.vector2(a);
  return pos;
}

/// A morphing Id + displacement from a reference mesh onto a target domain.
/// The morphing is bijective iff every deformed triangle keeps positive
/// signed area.
struct MorphingState {
  std::shared_ptr<const TriangleMesh> reference;
  std::shared_ptr<const TriangleMesh> target;  // == reference when the domains agree
  NodalField displacement;                     // 2 components on the reference mesh
};

/// Indices of deformed triangles with signed area <= 0.
inline std::vector<int> detect_inverted(const TriangleMesh& mesh,
                                        const NodalField& displacement) {
  const std::vector<Vec2> pos = deformed_positions(mesh, displacement);
  std::vector<int> inverted;
  for (int t = 0; t < mesh.triangle_count(); ++t)
    if (signed_area(pos, mesh.triangles[t]) <= 0.0) inverted.push_back(t);
  return inverted;
}

inline std::vector<int> detect_inverted(const MorphingState& state) {
  return detect_inverted(*state.reference, state.displacement);
}

inline double min_deformed_area(const TriangleMesh& mesh, const std::vector<Vec2>& pos) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& t : mesh.triangles) m = std::min(m, signed_area(pos, t));
  return m;
}

/// Gradients of the three barycentric basis functions on a triangle; the P1
/// gradient of a field u on the triangle is sum_a u_a * grad_lambda_a.
inline std::array<Vec2, 3> barycentric_gradients(const Vec2& p0, const Vec2& p1,
                                                 const Vec2& p2, double area) {
  const double inv2a = 1.0 / (2.0 * area);
  return {Vec2(p1.y() - p2.y(), p2.x() - p1.x()) * inv2a,
          Vec2(p2.y() - p0.y(), p0.x() - p2.x()) * inv2a,
          Vec2(p0.y() - p1.y(), p1.x() - p0.x()) * inv2a};
}

/// Piecewise-constant P1 gradient of a scalar field on one triangle.
inline Vec2 element_gradient(const TriangleMesh& mesh, const NodalField& field, int tri) {
  const auto& t = mesh.triangles[tri];
  const double area = signed_area(mesh, tri);
  const auto g = barycentric_gradients(mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]], area);
  return field.scalar(t[0]) * g[0] + field.scalar(t[1]) * g[1] + field.scalar(t[2]) * g[2];
}

/// Jacobian of a vector field (rows: components, cols: derivatives).
inline Mat2 element_jacobian(const TriangleMesh& mesh, const NodalField& field, int tri) {
  const auto& t = mesh.triangles[tri];
  const double area = signed_area(mesh, tri);
  const auto g = barycentric_gradients(mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]], area);
  Mat2 jac = Mat2::Zero();
  for (int a = 0; a < 3; ++a) jac += field.vector2(t[a]) * g[a].transpose();
  return jac;
}

inline void TriangleMesh::finalize() {
  if (nodes.empty() || triangles.empty()) throw Error("empty mesh");

  bbox_min_ = Vec2(std::numeric_limits<double>::max(), std::numeric_limits<double>::max());
  bbox_max_ = -bbox_min_;
  for (const auto& p : nodes) {
    bbox_min_ = bbox_min_.cwiseMin(p);
    bbox_max_ = bbox_max_.cwiseMax(p);
  }

  total_area_ = 0.0;
  for (int t = 0; t < triangle_count(); ++t) {
    for (int v : triangles[t])
      if (v < 0 || v >= node_count()) throw Error("triangle references missing node");
    const double area = signed_area(*this, t);
    if (area <= 0.0) throw Error("triangle " + std::to_string(t) + " is not counterclockwise");
    total_area_ += area;
  }

  // Directed edge map: for CCW triangles every interior edge appears once in
  // each direction, boundary edges only once.
  std::map<std::pair<int, int>, std::pair<int, int>> directed;  // (a,b) -> (tri, local)
  for (int t = 0; t < triangle_count(); ++t) {
    const auto& tri = triangles[t];
    for (int e = 0; e < 3; ++e) {
      const int a = tri[e], b = tri[(e + 1) % 3];
      if (!directed.emplace(std::make_pair(a, b), std::make_pair(t, e)).second)
        throw Error("duplicate directed edge; mesh is not a valid orientable triangulation");
    }
  }

  neighbors.assign(triangles.size(), {-1, -1, -1});
  std::vector<BoundaryEdge> found_boundary;
  for (const auto& [edge, where] : directed) {
    const auto rev = directed.find({edge.second, edge.first});
    const auto [t, e] = where;
    // Edge (tri[e], tri[e+1]) is opposite local vertex e+2.
    if (rev != directed.end()) {
      neighbors[t][(e + 2) % 3] = rev->second.first;
    } else {
      found_boundary.push_back({edge.first, edge.second, -1});
    }
  }

  if (!boundary_edges.empty()) {
    // Boundary topology supplied (e.g. from a file): verify it matches the
    // connectivity-derived set, keeping the supplied facet ids.
    // Direction-tolerant: orientation repair on load may have reversed the
    // stored direction of edges belonging to flipped triangles.
    std::map<std::pair<int, int>, int> given;
    for (const auto& e : boundary_edges)
      given[std::minmax(e.a, e.b)] = e.facet;
    if (given.size() != found_boundary.size())
      throw Error("boundary edge list does not match mesh connectivity");
    for (auto& e : found_boundary) {
      const auto it = given.find(std::minmax(e.a, e.b));
      if (it == given.end())
        throw Error("boundary edge list does not match mesh connectivity");
      e.facet = it->second;
    }
  }
  boundary_edges = std::move(found_boundary);

  // Outward normal of a directed boundary edge (domain on the left): rotate
  // the edge vector by -90 degrees.
  facet_normals.resize(boundary_edges.size());
  for (std::size_t i = 0; i < boundary_edges.size(); ++i) {
    const Vec2 t = nodes[boundary_edges[i].b] - nodes[boundary_edges[i].a];
    const double len = t.norm();
    if (len <= 0.0) throw Error("degenerate boundary edge");
    facet_normals[i] = Vec2(t.y(), -t.x()) / len;
  }

  if (boundary_edges.empty()) throw Error("mesh has no boundary");

  // Assign facet ids where missing: walk each boundary loop and start a new
  // facet whenever the outward normal turns.
  if (boundary_edges[0].facet < 0) {
    std::map<int, int> edge_at_node;  // start node -> boundary edge index
    for (std::size_t i = 0; i < boundary_edges.size(); ++i)
      edge_at_node[boundary_edges[i].a] = static_cast<int>(i);
    std::vector<char> visited(boundary_edges.size(), 0);
    constexpr double kNormalTol = 1e-8;
    int next_facet = 0;
    for (std::size_t start = 0; start < boundary_edges.size(); ++start) {
      if (visited[start]) continue;
      std::vector<int> loop;
      int e = static_cast<int>(start);
      do {
        visited[e] = 1;
        loop.push_back(e);
        e = edge_at_node.at(boundary_edges[e].b);
      } while (e != static_cast<int>(start));
      const int first_facet = next_facet;
      boundary_edges[loop[0]].facet = next_facet;
      for (std::size_t i = 1; i < loop.size(); ++i) {
        if ((facet_normals[loop[i]] - facet_normals[loop[i - 1]]).norm() > kNormalTol)
          ++next_facet;
        boundary_edges[loop[i]].facet = next_facet;
      }
      // The loop seam may split one geometric facet in two.
      if (next_facet > first_facet &&
          (facet_normals[loop.front()] - facet_normals[loop.back()]).norm() <= kNormalTol) {
        for (int i : loop)
          if (boundary_edges[i].facet == next_facet) boundary_edges[i].facet = first_facet;
        --next_facet;
      }
      ++next_facet;
    }
  }

  node_boundary_edges_.assign(nodes.size(), {});
  for (std::size_t i = 0; i < boundary_edges.size(); ++i) {
    node_boundary_edges_[boundary_edges[i].a].push_back(static_cast<int>(i));
    node_boundary_edges_[boundary_edges[i].b].push_back(static_cast<int>(i));
  }
}

/// Structured triangulation of [x0,x1] x [y0,y1] with nx x ny cells, each
/// split along alternating diagonals.
inline std::shared_ptr<TriangleMesh> build_rectangle_mesh(int nx, int ny, double x0,
                                                          double x1, double y0,
                                                          double y1) {
  if (nx < 1 || ny < 1) throw Error("rectangle mesh needs at least one cell per side");
  auto mesh = std::make_shared<TriangleMesh>();
  const int nnx = nx + 1, nny = ny + 1;
  mesh->nodes.reserve(static_cast<std::size_t>(nnx) * nny);
  for (int j = 0; j < nny; ++j)
    for (int i = 0; i < nnx; ++i)
      mesh->nodes.emplace_back(x0 + (x1 - x0) * i / nx, y0 + (y1 - y0) * j / ny);
  auto node = [nnx](int i, int j) { return j * nnx + i; };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int n00 = node(i, j), n10 = node(i + 1, j);
      const int n01 = node(i, j + 1), n11 = node(i + 1, j + 1);
      if ((i + j) % 2 == 0) {
        mesh->triangles.push_back({n00, n10, n11});
        mesh->triangles.push_back({n00, n11, n01});
      } else {
        mesh->triangles.push_back({n00, n10, n01});
        mesh->triangles.push_back({n10, n11, n01});
      }
    }
  }
  mesh->finalize();
  return mesh;
}

}  // namespace morphopt
