#include "stpod/mesh_fe.hpp"

#include <fstream>
#include <iomanip>

#include "stpod/errors.hpp"

namespace stpod {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

SpMat from_triplets(int rows, int cols, const Triplets& t) {
  SpMat m(rows, cols);
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

// Repeat a scalar-space matrix on the diagonal for each velocity component.
SpMat vectorize(const SpMat& s) {
  const int n = static_cast<int>(s.rows());
  Triplets t;
  t.reserve(2 * s.nonZeros());
  for (int c = 0; c < 2; ++c)
    for (int k = 0; k < s.outerSize(); ++k)
      for (SpMat::InnerIterator it(s, k); it; ++it)
        t.emplace_back(c * n + it.row(), c * n + it.col(), it.value());
  return from_triplets(2 * n, 2 * n, t);
}

template <class LocalFn>
SpMat assemble_scalar(const Mesh& mesh, LocalFn&& local) {
  Triplets t;
  t.reserve(9 * mesh.triangles.size());
  for (int e = 0; e < mesh.num_triangles(); ++e) {
    const auto el = p1_element(mesh, e);
    const auto& tri = mesh.triangles[e];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) t.emplace_back(tri[a], tri[b], local(el, a, b));
  }
  return from_triplets(mesh.num_nodes(), mesh.num_nodes(), t);
}

}  // namespace

double Mesh::signed_area(int t) const {
  const auto& tri = triangles[t];
  const Eigen::Vector2d e1 = vertices[tri[1]] - vertices[tri[0]];
  const Eigen::Vector2d e2 = vertices[tri[2]] - vertices[tri[0]];
  return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
}

Mesh build_mesh(int nx, int ny) {
  if (nx < 1 || ny < 1) throw InvalidArgument("build_mesh: cell counts must be positive");
  Mesh mesh;
  mesh.nx = nx;
  mesh.ny = ny;
  const double hx = mesh.length / nx;
  const double hy = mesh.length / ny;
  const auto node = [nx](int i, int j) { return j * (nx + 1) + i; };
  mesh.vertices.reserve((nx + 1) * (ny + 1));
  mesh.on_boundary.assign((nx + 1) * (ny + 1), 0);
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      // Exact end coordinates so the boundary test below is exact.
      const double x = (i == nx) ? mesh.length : i * hx;
      const double y = (j == ny) ? mesh.length : j * hy;
      mesh.vertices.emplace_back(x, y);
      if (i == 0 || j == 0 || i == nx || j == ny) {
        mesh.on_boundary[node(i, j)] = 1;
        mesh.boundary_nodes.push_back(node(i, j));
      }
    }
  }
  mesh.triangles.reserve(2 * nx * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      mesh.triangles.push_back({node(i, j), node(i + 1, j), node(i + 1, j + 1)});
      mesh.triangles.push_back({node(i, j), node(i + 1, j + 1), node(i, j + 1)});
    }
  }
  return mesh;
}

P1Element p1_element(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  const auto& p0 = mesh.vertices[tri[0]];
  const auto& p1 = mesh.vertices[tri[1]];
  const auto& p2 = mesh.vertices[tri[2]];
  P1Element el;
  const double det = (p1.x() - p0.x()) * (p2.y() - p0.y()) - (p2.x() - p0.x()) * (p1.y() - p0.y());
  el.area = 0.5 * det;
  el.dx = Eigen::Vector3d(p1.y() - p2.y(), p2.y() - p0.y(), p0.y() - p1.y()) / det;
  el.dy = Eigen::Vector3d(p2.x() - p1.x(), p0.x() - p2.x(), p1.x() - p0.x()) / det;
  return el;
}

FESpaces FESpaces::from_mesh(const Mesh& mesh) {
  FESpaces s;
  s.scalar_dofs = mesh.num_nodes();
  s.vector_dofs = 2 * mesh.num_nodes();
  s.dirichlet_mask.resize(s.vector_dofs);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < mesh.num_nodes(); ++i) s.dirichlet_mask[c * mesh.num_nodes() + i] = mesh.on_boundary[i];
  return s;
}

FEWorkspace FEWorkspace::build(int nx, int ny) {
  FEWorkspace ws;
  ws.mesh = build_mesh(nx, ny);
  ws.spaces = FESpaces::from_mesh(ws.mesh);
  auto& b = ws.blocks;
  b.mass_scalar = assemble_mass(ws.mesh, SpaceKind::Scalar);
  b.mass_vector = vectorize(b.mass_scalar);
  auto k = assemble_stiffness_split(ws.mesh, SpaceKind::Scalar);
  b.kx = std::move(k.kx);
  b.ky = std::move(k.ky);
  auto d = assemble_first_derivative(ws.mesh);
  b.dx = std::move(d.dx);
  b.dy = std::move(d.dy);
  b.mass_obs = b.mass_scalar;
  b.area = ws.mesh.area();
  return ws;
}

SpMat assemble_mass(const Mesh& mesh, SpaceKind kind) {
  SpMat m = assemble_scalar(mesh, [](const P1Element& el, int a, int b) {
    double s = 0.0;
    for (const auto& lam : kMidpointLambda) s += lam[a] * lam[b];
    return el.area / 3.0 * s;
  });
  return kind == SpaceKind::Scalar ? m : vectorize(m);
}

SplitStiffness assemble_stiffness_split(const Mesh& mesh, SpaceKind kind) {
  SpMat kx = assemble_scalar(mesh, [](const P1Element& el, int a, int b) { return el.area * el.dx[a] * el.dx[b]; });
  SpMat ky = assemble_scalar(mesh, [](const P1Element& el, int a, int b) { return el.area * el.dy[a] * el.dy[b]; });
  if (kind == SpaceKind::Vector) return {vectorize(kx), vectorize(ky)};
  return {std::move(kx), std::move(ky)};
}

SpMat assemble_stiffness(const Mesh& mesh, SpaceKind kind) {
  SpMat k = assemble_scalar(mesh, [](const P1Element& el, int a, int b) {
    const Eigen::Vector2d ga(el.dx[a], el.dy[a]);
    const Eigen::Vector2d gb(el.dx[b], el.dy[b]);
    return el.area * ga.dot(gb);
  });
  return kind == SpaceKind::Scalar ? k : vectorize(k);
}

FirstDerivative assemble_first_derivative(const Mesh& mesh) {
  // int lambda_a * d(lambda_b) = area/3 * d(lambda_b)
  return {assemble_scalar(mesh, [](const P1Element& el, int, int b) { return el.area / 3.0 * el.dx[b]; }),
          assemble_scalar(mesh, [](const P1Element& el, int, int b) { return el.area / 3.0 * el.dy[b]; })};
}

SpMat assemble_convection(const Mesh& mesh, std::span<const double> wind, double mu4, SpaceKind kind) {
  const int n = mesh.num_nodes();
  if (static_cast<int>(wind.size()) != 2 * n)
    throw DimensionMismatch("assemble_convection: wind must have 2*num_nodes entries");
  // dx = mu4 dx^, d/dx1 = (1/mu4) d/dx^1: the x1 part loses its factor and
  // the x2 part gains mu4.
  Triplets t;
  t.reserve(9 * mesh.triangles.size());
  for (int e = 0; e < mesh.num_triangles(); ++e) {
    const auto el = p1_element(mesh, e);
    const auto& tri = mesh.triangles[e];
    for (const auto& lam : kMidpointLambda) {
      double w1 = 0.0, w2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        w1 += lam[c] * wind[tri[c]];
        w2 += lam[c] * wind[n + tri[c]];
      }
      const double w = el.area / 3.0;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          t.emplace_back(tri[a], tri[b], w * lam[a] * (w1 * el.dx[b] + mu4 * w2 * el.dy[b]));
    }
  }
  SpMat s = from_triplets(n, n, t);
  return kind == SpaceKind::Scalar ? s : vectorize(s);
}

void apply_dirichlet(SpMat& matrix, std::span<const char> mask) {
  if (matrix.rows() != static_cast<Eigen::Index>(mask.size()) || matrix.cols() != matrix.rows())
    throw DimensionMismatch("apply_dirichlet: mask length must match the square matrix size");
  matrix.prune([&](Eigen::Index r, Eigen::Index c, double) { return !mask[r] && !mask[c]; });
  for (Eigen::Index i = 0; i < matrix.rows(); ++i)
    if (mask[i]) matrix.coeffRef(i, i) = 1.0;
  matrix.makeCompressed();
}

void apply_dirichlet(SpMat& matrix, Vec& rhs, std::span<const char> mask) {
  if (rhs.size() != matrix.rows()) throw DimensionMismatch("apply_dirichlet: rhs length mismatch");
  apply_dirichlet(matrix, mask);
  for (Eigen::Index i = 0; i < rhs.size(); ++i)
    if (mask[i]) rhs[i] = 0.0;
}

void write_matrix_triplets(const std::filesystem::path& path, const SpMat& matrix) {
  std::ofstream out(path);
  out << std::setprecision(17);
  out << "# rows " << matrix.rows() << " cols " << matrix.cols() << " nnz " << matrix.nonZeros() << "\n";
  for (int k = 0; k < matrix.outerSize(); ++k)
    for (SpMat::InnerIterator it(matrix, k); it; ++it) out << it.row() << " " << it.col() << " " << it.value() << "\n";
}

void write_mesh_nodes(const std::filesystem::path& path, const Mesh& mesh) {
  std::ofstream out(path);
  out << std::setprecision(17);
  out << "# node x y boundary\n";
  for (int i = 0; i < mesh.num_nodes(); ++i)
    out << i << " " << mesh.vertices[i].x() << " " << mesh.vertices[i].y() << " " << int(mesh.on_boundary[i]) << "\n";
  out << "# triangle v0 v1 v2\n";
  for (int t = 0; t < mesh.num_triangles(); ++t)
    out << "t " << mesh.triangles[t][0] << " " << mesh.triangles[t][1] << " " << mesh.triangles[t][2] << "\n";
}

}  // namespace stpod
