#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "oracles.hpp"
#include "stpod/errors.hpp"
#include "stpod/mesh_fe.hpp"

using namespace stpod;

namespace {

Mesh unit_triangle() {
  Mesh m;
  m.nx = m.ny = 1;
  m.length = 1.0;
  m.vertices = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  m.triangles = {{0, 1, 2}};
  m.boundary_nodes = {0, 1, 2};
  m.on_boundary = {1, 1, 1};
  return m;
}

}  // namespace

TEST_CASE("smallest mesh has four boundary vertices and two triangles") {
  const Mesh m = build_mesh(1, 1);
  CHECK(m.num_nodes() == 4);
  CHECK(m.num_triangles() == 2);
  CHECK(m.boundary_nodes.size() == 4);
}

TEST_CASE("2x2 mesh counts") {
  const Mesh m = build_mesh(2, 2);
  CHECK(m.num_nodes() == 9);
  CHECK(m.num_triangles() == 8);
  CHECK(m.boundary_nodes.size() == 8);
  CHECK(std::count(m.on_boundary.begin(), m.on_boundary.end(), 0) == 1);
}

TEST_CASE("mesh invariants hold for rectangular cell counts") {
  for (auto [nx, ny] : {std::pair{3, 5}, std::pair{7, 2}, std::pair{20, 20}}) {
    const Mesh m = build_mesh(nx, ny);
    CHECK(m.num_nodes() == (nx + 1) * (ny + 1));
    CHECK(m.num_triangles() == 2 * nx * ny);
    double total = 0.0;
    for (int t = 0; t < m.num_triangles(); ++t) {
      CHECK(m.signed_area(t) > 0.0);
      total += m.signed_area(t);
    }
    CHECK(total == doctest::Approx(100.0).epsilon(1e-10));
    std::set<int> expected;
    for (int i = 0; i < m.num_nodes(); ++i) {
      const auto& p = m.vertices[i];
      if (p.x() == 0.0 || p.x() == 10.0 || p.y() == 0.0 || p.y() == 10.0) expected.insert(i);
    }
    CHECK(std::set<int>(m.boundary_nodes.begin(), m.boundary_nodes.end()) == expected);
  }
}

TEST_CASE("non-positive cell counts are rejected") {
  CHECK_THROWS_AS(build_mesh(0, 3), InvalidArgument);
  CHECK_THROWS_AS(build_mesh(2, -1), InvalidArgument);
}

TEST_CASE("dirichlet mask marks exactly the boundary velocity dofs") {
  const Mesh m = build_mesh(4, 3);
  const FESpaces s = FESpaces::from_mesh(m);
  REQUIRE(s.scalar_dofs == m.num_nodes());
  REQUIRE(s.vector_dofs == 2 * m.num_nodes());
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < m.num_nodes(); ++i) CHECK(bool(s.dirichlet_mask[c * m.num_nodes() + i]) == bool(m.on_boundary[i]));
}

TEST_CASE("P1 mass of the unit right triangle") {
  const Mat got = oracle::dense(assemble_mass(unit_triangle(), SpaceKind::Scalar));
  Mat expected(3, 3);
  expected << 2, 1, 1, 1, 2, 1, 1, 1, 2;
  expected /= 24.0;
  CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("mass matrix: symmetric, nonnegative, partition of unity, vector blocks") {
  const Mesh m = build_mesh(5, 4);
  const Mat ms = oracle::dense(assemble_mass(m, SpaceKind::Scalar));
  CHECK((ms - ms.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * ms.cwiseAbs().maxCoeff());
  CHECK(ms.minCoeff() >= 0.0);
  CHECK(ms.sum() == doctest::Approx(100.0).epsilon(1e-10));
  CHECK(Eigen::SelfAdjointEigenSolver<Mat>(ms).eigenvalues().minCoeff() > 0.0);

  const Mat mv = oracle::dense(assemble_mass(m, SpaceKind::Vector));
  const int n = m.num_nodes();
  REQUIRE(mv.rows() == 2 * n);
  CHECK((mv.topLeftCorner(n, n) - ms).cwiseAbs().maxCoeff() == 0.0);
  CHECK((mv.bottomRightCorner(n, n) - ms).cwiseAbs().maxCoeff() == 0.0);
  CHECK(mv.topRightCorner(n, n).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("assembled blocks agree with the closed-form element integrals") {
  const Mesh m = build_mesh(3, 2);
  const auto ref = oracle::scalar_blocks(m);
  const auto split = assemble_stiffness_split(m, SpaceKind::Scalar);
  const auto deriv = assemble_first_derivative(m);
  CHECK(oracle::max_rel_diff(oracle::dense(assemble_mass(m, SpaceKind::Scalar)), ref.mass) < 1e-13);
  CHECK(oracle::max_rel_diff(oracle::dense(split.kx), ref.kx) < 1e-13);
  CHECK(oracle::max_rel_diff(oracle::dense(split.ky), ref.ky) < 1e-13);
  CHECK(oracle::max_rel_diff(oracle::dense(deriv.dx), ref.dx) < 1e-13);
  CHECK(oracle::max_rel_diff(oracle::dense(deriv.dy), ref.dy) < 1e-13);
}

TEST_CASE("split stiffness: constants in the kernel, x1 energy, identity pull-back") {
  const Mesh m = build_mesh(6, 6);
  const auto split = assemble_stiffness_split(m, SpaceKind::Scalar);
  const Vec one = Vec::Ones(m.num_nodes());
  CHECK((split.kx * one).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((split.ky * one).cwiseAbs().maxCoeff() < 1e-12);

  const Vec f = interpolate(m, [](double x, double) { return x; });
  CHECK(f.dot(split.kx * f) == doctest::Approx(100.0).epsilon(1e-10));
  CHECK(std::abs(f.dot(split.ky * f)) < 1e-10);

  const double mu4 = 1.0;
  const Mat combined = oracle::dense(SpMat((1.0 / mu4) * split.kx + mu4 * split.ky));
  CHECK((combined - oracle::dense(assemble_stiffness(m, SpaceKind::Scalar))).cwiseAbs().maxCoeff() < 1e-12);

  for (const SpMat* k : {&split.kx, &split.ky}) {
    const Mat d = oracle::dense(*k);
    CHECK((d - d.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(Eigen::SelfAdjointEigenSolver<Mat>(d).eigenvalues().minCoeff() > -1e-12);
  }
}

TEST_CASE("stiffness is continuous in mu4") {
  const Mesh m = build_mesh(4, 4);
  const auto split = assemble_stiffness_split(m, SpaceKind::Scalar);
  auto stiff = [&](double mu4) { return oracle::dense(SpMat((1.0 / mu4) * split.kx + mu4 * split.ky)); };
  CHECK((stiff(1.0 + 1e-9) - stiff(1.0)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("convection: zero wind, linearity, directional derivative") {
  const Mesh m = build_mesh(2, 2);
  const int n = m.num_nodes();
  std::mt19937_64 rng(11);
  const Vec zero = Vec::Zero(2 * n);
  CHECK(assemble_convection(m, std::span<const double>(zero.data(), zero.size()), 1.3).norm() == 0.0);

  const Vec w1 = oracle::random_vector(2 * n, rng), w2 = oracle::random_vector(2 * n, rng);
  const Vec w12 = w1 + w2;
  auto conv = [&](const Vec& w, double mu4, SpaceKind kind) {
    return oracle::dense(assemble_convection(m, std::span<const double>(w.data(), w.size()), mu4, kind));
  };
  CHECK((conv(w12, 1.2, SpaceKind::Vector) - conv(w1, 1.2, SpaceKind::Vector) - conv(w2, 1.2, SpaceKind::Vector))
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  const Mat ms = oracle::dense(assemble_mass(m, SpaceKind::Scalar));
  const Vec one = Vec::Ones(n);
  Vec wx = Vec::Zero(2 * n);
  wx.head(n).setOnes();
  const Vec x1 = interpolate(m, [](double x, double) { return x; });
  CHECK((conv(wx, 1.0, SpaceKind::Scalar) * x1 - ms * one).cwiseAbs().maxCoeff() < 1e-10);

  // d/dx2 picks up the area factor mu4 under the pull-back.
  Vec wy = Vec::Zero(2 * n);
  wy.tail(n).setOnes();
  const Vec x2 = interpolate(m, [](double, double y) { return y; });
  CHECK((conv(wy, 1.5, SpaceKind::Scalar) * x2 - 1.5 * ms * one).cwiseAbs().maxCoeff() < 1e-10);

  // Constant argument: zero directional derivative.
  CHECK((conv(w1, 0.9, SpaceKind::Scalar) * one).cwiseAbs().maxCoeff() < 1e-12);

  const Vec bad = Vec::Zero(n);
  CHECK_THROWS_AS(assemble_convection(m, std::span<const double>(bad.data(), bad.size()), 1.0), DimensionMismatch);
}

TEST_CASE("dirichlet elimination") {
  const Mesh m = build_mesh(3, 3);
  const FESpaces s = FESpaces::from_mesh(m);
  SpMat k = assemble_stiffness(m, SpaceKind::Vector) + assemble_mass(m, SpaceKind::Vector);
  const int nv = s.vector_dofs;

  SUBCASE("all-interior mask leaves the system unchanged") {
    SpMat copy = k;
    Vec rhs = Vec::Ones(nv);
    std::vector<char> none(nv, 0);
    apply_dirichlet(copy, rhs, none);
    CHECK((oracle::dense(copy) - oracle::dense(k)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(rhs == Vec::Ones(nv));
  }
  SUBCASE("constrained solve is exactly zero on the boundary and stays symmetric") {
    Vec rhs = Vec::Ones(nv);
    apply_dirichlet(k, rhs, s.dirichlet_mask);
    const Mat d = oracle::dense(k);
    CHECK((d - d.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * d.cwiseAbs().maxCoeff());
    const Vec x = d.ldlt().solve(rhs);
    for (int i = 0; i < nv; ++i)
      if (s.dirichlet_mask[i]) CHECK(x[i] == 0.0);
  }
  SUBCASE("mask length mismatch") {
    std::vector<char> short_mask(nv - 1, 0);
    CHECK_THROWS_AS(apply_dirichlet(k, short_mask), DimensionMismatch);
  }
}

TEST_CASE("assembly is bit-reproducible") {
  const FEWorkspace a = FEWorkspace::build(5, 5);
  const FEWorkspace b = FEWorkspace::build(5, 5);
  for (auto [x, y] : {std::pair{&a.blocks.mass_scalar, &b.blocks.mass_scalar}, std::pair{&a.blocks.kx, &b.blocks.kx},
                      std::pair{&a.blocks.dy, &b.blocks.dy}}) {
    REQUIRE(x->nonZeros() == y->nonZeros());
    CHECK(std::equal(x->valuePtr(), x->valuePtr() + x->nonZeros(), y->valuePtr()));
  }
  CHECK(a.blocks.area == doctest::Approx(100.0));
}
