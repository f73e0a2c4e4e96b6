#pragma once

#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "morphopt/error.hpp"
#include "morphopt/mesh.hpp"

namespace morphopt {

using SparseMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Consistent P1 mass matrix: element block (area/12) * [2 1 1; 1 2 1; 1 1 2].
inline SparseMat assemble_mass(const TriangleMesh& mesh) {
  std::vector<Triplet> trip;
  trip.reserve(mesh.triangles.size() * 9);
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double s = signed_area(mesh, t) / 12.0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        trip.emplace_back(tri[a], tri[b], s * (a == b ? 2.0 : 1.0));
  }
  SparseMat m(mesh.node_count(), mesh.node_count());
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

/// P1 stiffness matrix of the Laplacian, natural (Neumann) boundary.
inline SparseMat assemble_laplacian(const TriangleMesh& mesh) {
  std::vector<Triplet> trip;
  trip.reserve(mesh.triangles.size() * 9);
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double area = signed_area(mesh, t);
    const auto g = barycentric_gradients(mesh.nodes[tri[0]], mesh.nodes[tri[1]],
                                         mesh.nodes[tri[2]], area);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        trip.emplace_back(tri[a], tri[b], area * g[a].dot(g[b]));
  }
  SparseMat k(mesh.node_count(), mesh.node_count());
  k.setFromTriplets(trip.begin(), trip.end());
  return k;
}

/// Expands a scalar nodal operator to both components of an interleaved
/// vector field: B[2i+c, 2j+c] = A[i, j].
inline SparseMat expand_to_vector(const SparseMat& scalar_op) {
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(scalar_op.nonZeros()) * 2);
  for (int k = 0; k < scalar_op.outerSize(); ++k)
    for (SparseMat::InnerIterator it(scalar_op, k); it; ++it)
      for (int c = 0; c < 2; ++c)
        trip.emplace_back(2 * static_cast<int>(it.row()) + c,
                          2 * static_cast<int>(it.col()) + c, it.value());
  SparseMat b(2 * scalar_op.rows(), 2 * scalar_op.cols());
  b.setFromTriplets(trip.begin(), trip.end());
  return b;
}

/// L2(mesh) inner product of P1 fields (componentwise for vector fields),
/// f^T M g accumulated per element (no global matrix).
inline double l2_inner_product(const TriangleMesh& mesh, const NodalField& f,
                               const NodalField& g) {
  check_field(mesh, f);
  check_field(mesh, g);
  if (f.components != g.components)
    throw Error("l2_inner_product component count mismatch");
  const int nc = f.components;
  double sum = 0.0;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double s = signed_area(mesh, t) / 12.0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        for (int c = 0; c < nc; ++c)
          sum += s * (a == b ? 2.0 : 1.0) * f.values[tri[a] * nc + c] *
                 g.values[tri[b] * nc + c];
  }
  return sum;
}

inline double l2_norm(const TriangleMesh& mesh, const NodalField& f) {
  return std::sqrt(std::max(0.0, l2_inner_product(mesh, f, f)));
}

/// Sparse SPD solve with a one-shot residual check; refines once with a
/// fresh factorization at tighter pivoting before giving up.
class SpdSolver {
 public:
  void factorize(const SparseMat& a) {
    matrix_ = a;
    norm_ = 0.0;
    Eigen::VectorXd row_sums = Eigen::VectorXd::Zero(a.rows());
    for (int k = 0; k < a.outerSize(); ++k)
      for (SparseMat::InnerIterator it(a, k); it; ++it)
        row_sums[it.row()] += std::abs(it.value());
    if (row_sums.size() > 0) norm_ = row_sums.maxCoeff();
    ldlt_.compute(matrix_);
    if (ldlt_.info() != Eigen::Success)
      throw NumericalError("sparse LDLT factorization failed");
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd x = ldlt_.solve(rhs);
    // Normwise backward error: scaling by |b| alone punishes systems whose
    // matrix dwarfs the right-hand side even when the solve is as good as
    // floating point allows.
    auto backward_error = [&](const Eigen::VectorXd& y) {
      const double scale = std::max(norm_ * y.norm() + rhs.norm(), 1e-30);
      return (matrix_ * y - rhs).norm() / scale;
    };
    double rel = backward_error(x);
    // One step of iterative refinement is usually enough to bring the
    // penalty-dominated systems back to a healthy residual.
    if (rel > 1e-12) {
      x += ldlt_.solve(rhs - matrix_ * x);
      rel = backward_error(x);
    }
    if (rel > 1e-8)
      throw NumericalError("sparse solve residual too large: " + std::to_string(rel));
    return x;
  }

  const SparseMat& matrix() const { return matrix_; }

 private:
  SparseMat matrix_;
  double norm_ = 0.0;
  Eigen::SimplicialLDLT<SparseMat> ldlt_;
};

}  // namespace morphopt
