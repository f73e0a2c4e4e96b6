#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "morphopt/error.hpp"
#include "morphopt/fem.hpp"
#include "morphopt/mesh.hpp"

namespace morphopt {

/// Elastic strain energy of a morphing, E_lin = 1/2 a(u, u) with u the
/// displacement and a(·,·) the (optionally penalized) form.
inline double energy_linear(const SparseMat& form, const Eigen::VectorXd& u) {
  return 0.5 * u.dot(form * u);
}

/// Load vector of the differential DE_lin[φ][ψ] = a(φ − Id, ψ) = (A u)·ψ.
inline Eigen::VectorXd energy_linear_gradient(const SparseMat& form,
                                              const Eigen::VectorXd& u) {
  return form * u;
}

struct NeoHookeanParams {
  double mu = 1.0;
  double lambda = 0.1;
  int dim_offset = 2;  // constant subtracted from tr(FᵀF); 2 zeroes the identity

  void validate() const {
    if (!(mu > 0.0) || !(lambda > 0.0))
      throw ConfigError("Neo-Hookean parameters mu and lambda must be > 0");
  }
};

/// Compressible Neo-Hookean energy of φ = Id + u:
///   E = Σ_elements area · [ μ/2 (tr(FᵀF) − d) + λ(J² − 1) − |λ/2 + μ| ln J ]
/// with F = ∇φ per element and J = det F. Returns +infinity (never NaN) as
/// soon as any element is inverted (J ≤ 0); the log term makes the energy a
/// barrier against inversion.
inline double energy_neohookean(const TriangleMesh& mesh, const NodalField& displacement,
                                const NeoHookeanParams& params) {
  params.validate();
  check_field(mesh, displacement);
  const double log_coef = std::abs(0.5 * params.lambda + params.mu);
  double total = 0.0;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const Mat2 f = Mat2::Identity() + element_jacobian(mesh, displacement, t);
    const double det = f.determinant();
    if (det <= 0.0) return std::numeric_limits<double>::infinity();
    const double w = 0.5 * params.mu * (f.squaredNorm() - params.dim_offset) +
                     params.lambda * (det * det - 1.0) - log_coef * std::log(det);
    total += signed_area(mesh, t) * w;
  }
  return total;
}

/// Load vector of DE_NH[φ][ψ] = Σ_e area · (∂W/∂F) : ∇ψ, with
///   ∂W/∂F = μF + (2λJ² − |λ/2 + μ|) F^{-T}.
/// Requires a non-inverted configuration.
inline Eigen::VectorXd energy_neohookean_gradient(const TriangleMesh& mesh,
                                                  const NodalField& displacement,
                                                  const NeoHookeanParams& params) {
  params.validate();
  check_field(mesh, displacement);
  const double log_coef = std::abs(0.5 * params.lambda + params.mu);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(2 * mesh.node_count());
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double area = signed_area(mesh, t);
    const Mat2 f = Mat2::Identity() + element_jacobian(mesh, displacement, t);
    const double det = f.determinant();
    if (det <= 0.0)
      throw NumericalError("Neo-Hookean gradient requested on an inverted configuration");
    Mat2 f_inv_t;
    f_inv_t << f(1, 1), -f(1, 0), -f(0, 1), f(0, 0);
    f_inv_t /= det;
    const Mat2 p = params.mu * f + (2.0 * params.lambda * det * det - log_coef) * f_inv_t;
    const auto g = barycentric_gradients(mesh.nodes[tri[0]], mesh.nodes[tri[1]],
                                         mesh.nodes[tri[2]], area);
    for (int a = 0; a < 3; ++a) {
      const Vec2 contrib = area * (p * g[a]);
      grad[2 * tri[a]] += contrib.x();
      grad[2 * tri[a] + 1] += contrib.y();
    }
  }
  return grad;
}

}  // namespace morphopt
