#include <doctest.h>

#include <filesystem>
#include <random>

#include "helpers.hpp"

using namespace morphopt;
using testutil::eval_scalar;
using testutil::unit_square;

namespace {
SnapshotFamily family_of(std::shared_ptr<const TriangleMesh> mesh,
                         std::vector<NodalField> snaps) {
  SnapshotFamily f;
  f.reference = std::move(mesh);
  f.snapshots = std::move(snaps);
  return f;
}
}  // namespace

TEST_CASE("correlation matrix of identical unit-norm snapshots") {
  auto mesh = unit_square(6);
  NodalField u = eval_scalar(*mesh, [](const Vec2& p) { return std::sin(p.x() + 2 * p.y()); });
  u.values /= l2_norm(*mesh, u);
  const auto fam = family_of(mesh, {u, u});
  const Eigen::MatrixXd c = correlation_matrix(fam);
  Eigen::MatrixXd expect(2, 2);
  expect << 1, 1, 1, 1;
  CHECK((c - expect).lpNorm<Eigen::Infinity>() <= 1e-12);

  const PodResult p = pod(c, 1);
  CHECK(p.eigenvalues[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(p.eigenvalues[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(efficiency(p, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("orthogonal snapshots have vanishing off-diagonal correlation") {
  auto toy = build_rectangle_mesh(24, 30, -1.0, 1.0, -1.25, 1.25);
  NodalField f = eval_scalar(*toy, [](const Vec2& p) { return std::sin(M_PI * p.x()); });
  NodalField g = eval_scalar(*toy, [](const Vec2& p) { return std::cos(M_PI * p.x()); });
  const Eigen::MatrixXd c = correlation_matrix(family_of(toy, {f, g}));
  CHECK(std::abs(c(0, 1)) <= 1e-8);
  CHECK(std::abs(c(1, 0)) <= 1e-8);
}

TEST_CASE("pod eigenstructure oracles") {
  Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(2, 2);
  diag(0, 0) = 3.0;
  diag(1, 1) = 1.0;
  const PodResult p = pod(diag, 1);
  CHECK(p.eigenvalues[0] == doctest::Approx(3.0));
  CHECK(p.eigenvalues[1] == doctest::Approx(1.0));
  // Sign convention: first nonzero entry positive.
  CHECK(p.eigenvectors(0, 0) == doctest::Approx(1.0));
  CHECK(std::abs(p.eigenvectors(1, 0)) <= 1e-12);
  CHECK(p.eigenvectors(1, 1) == doctest::Approx(1.0));
  CHECK(efficiency(p, 1) == doctest::Approx(0.75));
  CHECK(efficiency(p, 2) == doctest::Approx(1.0));

  // n identical snapshots: lambda_1 = n * ||u||^2, the rest vanish.
  auto mesh = unit_square(5);
  NodalField u = eval_scalar(*mesh, [](const Vec2& p) { return p.x() * p.y() + 0.5; });
  const double norm2 = l2_inner_product(*mesh, u, u);
  const int n = 4;
  const auto fam = family_of(mesh, std::vector<NodalField>(n, u));
  const PodResult q = pod(correlation_matrix(fam), 1);
  CHECK(q.eigenvalues[0] == doctest::Approx(n * norm2).epsilon(1e-10));
  for (int k = 1; k < n; ++k) CHECK(std::abs(q.eigenvalues[k]) <= 1e-10 * q.trace);
  CHECK(efficiency(q, 1) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("pod reconstructs a random PSD matrix and rejects bad input") {
  std::mt19937 rng(41);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd b(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) b(i, j) = gauss(rng);
  const Eigen::MatrixXd c = b.transpose() * b;

  const PodResult p = pod(c, 3);
  Eigen::MatrixXd recon = Eigen::MatrixXd::Zero(5, 5);
  for (int k = 0; k < 5; ++k)
    recon += p.eigenvalues[k] * p.eigenvectors.col(k) * p.eigenvectors.col(k).transpose();
  CHECK((recon - c).lpNorm<Eigen::Infinity>() <= 1e-10 * c.norm());

  // Orthonormality of eigenvectors.
  const Eigen::MatrixXd gram = p.eigenvectors.transpose() * p.eigenvectors;
  CHECK((gram - Eigen::MatrixXd::Identity(5, 5)).lpNorm<Eigen::Infinity>() <= 1e-10);

  CHECK_THROWS_AS((void)pod(c, 0), Error);
  CHECK_THROWS_AS((void)pod(c, 6), Error);
  CHECK_THROWS_AS((void)pod(Eigen::MatrixXd::Zero(3, 2), 1), Error);
  Eigen::MatrixXd asym = c;
  asym(0, 1) += 1.0;
  CHECK_THROWS_AS((void)pod(asym, 1), Error);
  CHECK_THROWS_AS((void)pod(Eigen::MatrixXd::Identity(2, 2) * -5.0, 1), NumericalError);
  CHECK_THROWS_AS((void)efficiency(Eigen::MatrixXd::Zero(3, 3), 1), NumericalError);
}

TEST_CASE("efficiency invariants: monotone in r, J_n = 1, scale invariance") {
  auto mesh = unit_square(6);
  std::mt19937 rng(43);
  std::vector<NodalField> snaps;
  for (int i = 0; i < 6; ++i) snaps.push_back(testutil::random_smooth_field(*mesh, rng, 4));
  const auto fam = family_of(mesh, snaps);
  const Eigen::MatrixXd c = correlation_matrix(fam);
  const PodResult p = pod(c, 1);

  double prev = 0.0;
  for (int r = 1; r <= 6; ++r) {
    const double jr = efficiency(p, r);
    CHECK(jr >= prev - 1e-12);
    prev = jr;
  }
  CHECK(efficiency(p, 6) == doctest::Approx(1.0).epsilon(1e-10));

  // Trace identity: sum of eigenvalues equals sum of snapshot norms.
  double norms = 0.0;
  for (const auto& s : snaps) norms += l2_inner_product(*mesh, s, s);
  CHECK(std::abs(p.eigenvalues.sum() - norms) <= 1e-8 * norms);

  // Scaling every snapshot by s leaves the efficiency untouched.
  auto scaled = snaps;
  for (auto& s : scaled) s.values *= -7.5;
  const double j_scaled = efficiency(correlation_matrix(family_of(mesh, scaled)), 3);
  CHECK(std::abs(j_scaled - efficiency(p, 3)) <= 1e-10);
}

TEST_CASE("modes and coordinates: orthonormality, Bessel, completeness") {
  auto mesh = unit_square(7);
  std::mt19937 rng(47);
  std::vector<NodalField> snaps;
  for (int i = 0; i < 5; ++i) snaps.push_back(testutil::random_smooth_field(*mesh, rng, 4));
  const auto fam = family_of(mesh, snaps);
  PodResult p = pod(correlation_matrix(fam), 2);
  attach_modes(p, fam);
  REQUIRE(static_cast<int>(p.modes.size()) == 5);

  // Modes are L2-orthonormal.
  for (std::size_t a = 0; a < p.modes.size(); ++a)
    for (std::size_t b = 0; b <= a; ++b) {
      const double ip = l2_inner_product(*mesh, p.modes[a], p.modes[b]);
      CHECK(std::abs(ip - (a == b ? 1.0 : 0.0)) <= 1e-8);
    }

  // A snapshot equal to the first mode has coordinates (1, 0, ..., 0).
  const auto mode_fam = family_of(mesh, {p.modes[0]});
  const Eigen::MatrixXd gamma1 = coordinates(mode_fam, p.modes);
  CHECK(std::abs(gamma1(0, 0) - 1.0) <= 1e-8);
  for (int j = 1; j < gamma1.cols(); ++j) CHECK(std::abs(gamma1(0, j)) <= 1e-8);

  // Bessel and full-rank completeness for every snapshot.
  const Eigen::MatrixXd gamma = coordinates(fam, p.modes);
  for (int i = 0; i < 5; ++i) {
    const double norm2 = l2_inner_product(*mesh, snaps[i], snaps[i]);
    CHECK(norm2 - gamma.row(i).squaredNorm() >= -1e-8 * norm2);

    NodalField recon = make_field(*mesh, 1);
    for (int j = 0; j < gamma.cols(); ++j) recon.values += gamma(i, j) * p.modes[j].values;
    NodalField diff = recon;
    diff.values -= snaps[i].values;
    CHECK(l2_norm(*mesh, diff) <= 1e-7 * std::sqrt(norm2));
  }
}

TEST_CASE("duplicate snapshots truncate the mode list at the rank tolerance") {
  auto mesh = unit_square(4);
  NodalField u = eval_scalar(*mesh, [](const Vec2& p) { return p.x() + 0.1; });
  const auto fam = family_of(mesh, {u, u, u});
  PodResult p = pod(correlation_matrix(fam), 1);
  attach_modes(p, fam);
  CHECK(p.modes.size() == 1);
}

TEST_CASE("correlation with identity morphings equals the raw Gram matrix") {
  auto mesh = unit_square(6);
  std::mt19937 rng(53);
  const int n = 3;
  std::vector<SnapshotSource> sources;
  std::vector<NodalField> snaps;
  std::vector<std::vector<Vec2>> positions(n, mesh->nodes);
  for (int i = 0; i < n; ++i) {
    NodalField f = testutil::random_smooth_field(*mesh, rng, 3);
    snaps.push_back(f);
    sources.push_back(SnapshotSource::make(mesh, f));
  }
  const SparseMat mass = assemble_mass(*mesh);
  const FamilyDerivatives fd = evaluate_family(*mesh, mass, sources, positions, 1);
  const Eigen::MatrixXd gram = correlation_matrix(family_of(mesh, snaps));
  CHECK((fd.c - gram).lpNorm<Eigen::Infinity>() <= 1e-12 * gram.norm());

  // Pullback through the identity reproduces nodal values exactly.
  MeshLocator locator(*mesh);
  const NodalField back = pullback_field(*mesh, locator, snaps[0], mesh->nodes);
  CHECK((back.values - snaps[0].values).lpNorm<Eigen::Infinity>() <= 1e-14);
}

TEST_CASE("eigenvalue perturbation identity on random PSD matrices") {
  std::mt19937 rng(59);
  std::normal_distribution<double> gauss;
  const int n = 6;
  for (int rep = 0; rep < 5; ++rep) {
    // PSD matrix with well-separated spectrum.
    Eigen::MatrixXd b(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) b(i, j) = gauss(rng);
    Eigen::MatrixXd c = b.transpose() * b;
    for (int i = 0; i < n; ++i) c(i, i) += 3.0 * (n - i);  // split the spectrum

    Eigen::MatrixXd perturb(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) perturb(i, j) = perturb(j, i) = gauss(rng);

    const PodResult p = pod(c, 1);
    const double eps = 1e-6;
    const PodResult plus = pod(Eigen::MatrixXd(c + eps * perturb), 1);
    const PodResult minus = pod(Eigen::MatrixXd(c - eps * perturb), 1);
    for (int k = 0; k < n; ++k) {
      const double fd = (plus.eigenvalues[k] - minus.eigenvalues[k]) / (2.0 * eps);
      const double analytic = p.eigenvectors.col(k).dot(perturb * p.eigenvectors.col(k));
      CHECK(std::abs(fd - analytic) <= 1e-4 * std::max(std::abs(analytic), 1.0));
    }
  }
}

TEST_CASE("toy snapshot family starts poorly reducible") {
  auto mesh = toy_mesh(24, 30);
  const auto betas = toy_betas(30);
  std::vector<NodalField> snaps;
  for (const double beta : betas) snaps.push_back(toy_snapshot(*mesh, beta));
  const double j1 = efficiency(correlation_matrix(family_of(mesh, snaps)), 1);
  MESSAGE("initial one-mode efficiency on the raw family: ", j1);
  CHECK(j1 < 0.9);
  CHECK(j1 > 0.0);
}

TEST_CASE("pod results round-trip through the native text format") {
  auto mesh = unit_square(5);
  std::mt19937 rng(61);
  std::vector<NodalField> snaps;
  for (int i = 0; i < 3; ++i) snaps.push_back(testutil::random_smooth_field(*mesh, rng, 2));
  const auto fam = family_of(mesh, snaps);
  PodResult p = pod(correlation_matrix(fam), 2);
  attach_modes(p, fam);

  const std::string path =
      (std::filesystem::temp_directory_path() / "pod_roundtrip.txt").string();
  write_pod(path, p);
  const PodResult q = read_pod(path, *mesh);

  CHECK((q.eigenvalues - p.eigenvalues).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((q.eigenvectors - p.eigenvectors).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(q.trace == p.trace);
  CHECK(q.r == p.r);
  REQUIRE(q.modes.size() == p.modes.size());
  for (std::size_t k = 0; k < p.modes.size(); ++k)
    CHECK((q.modes[k].values - p.modes[k].values).lpNorm<Eigen::Infinity>() == 0.0);
}
