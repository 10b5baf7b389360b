#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace stpod {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Uniform right-triangle mesh of the reference square [0,L]x[0,L], L = 10.
/// Node (i,j) has index j*(nx+1)+i; each cell is split along its
/// (i,j)-(i+1,j+1) diagonal into two counter-clockwise triangles.
struct Mesh {
  int nx = 0;
  int ny = 0;
  double length = 10.0;
  std::vector<Eigen::Vector2d> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<int> boundary_nodes;
  std::vector<char> on_boundary;

  int num_nodes() const { return static_cast<int>(vertices.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  double signed_area(int t) const;
  double area() const { return length * length; }
};

Mesh build_mesh(int nx, int ny);

/// Constant data of one P1 triangle: area and the (constant) gradients of
/// the three barycentric coordinates.
struct P1Element {
  double area = 0.0;
  Eigen::Vector3d dx;
  Eigen::Vector3d dy;
};

P1Element p1_element(const Mesh& mesh, int t);

/// Edge-midpoint rule: exact for quadratics on a triangle. Weights are
/// area/3 each; lambda[q][a] is barycentric coordinate a at point q.
inline constexpr std::array<std::array<double, 3>, 3> kMidpointLambda{{
    {0.5, 0.5, 0.0},
    {0.0, 0.5, 0.5},
    {0.5, 0.0, 0.5},
}};

enum class SpaceKind { Scalar, Vector };

/// P1 scalar space (height, control components) and the P1 vector space of
/// velocities sharing the same nodes. Vector dofs are component-major:
/// [v1 at all nodes | v2 at all nodes].
struct FESpaces {
  int scalar_dofs = 0;
  int vector_dofs = 0;
  std::vector<char> dirichlet_mask;  // per vector dof

  static FESpaces from_mesh(const Mesh& mesh);
};

/// Parameter-independent spatial blocks on the reference domain. The
/// geometric parameter enters only through scalar factors:
///   mass(mu4)       = mu4 * M
///   stiffness(mu4)  = (1/mu4) * kx + mu4 * ky
///   d/dx1 coupling  = dx,   d/dx2 coupling = mu4 * dy
struct SpatialBlocks {
  SpMat mass_scalar;
  SpMat mass_vector;
  SpMat kx;  // scalar
  SpMat ky;  // scalar
  SpMat dx;  // (dx)_ij = int phi_i d(phi_j)/dx1
  SpMat dy;
  SpMat mass_obs;  // observation over the whole domain
  double area = 0.0;
};

struct FEWorkspace {
  Mesh mesh;
  FESpaces spaces;
  SpatialBlocks blocks;

  static FEWorkspace build(int nx, int ny);
  int n() const { return mesh.num_nodes(); }
};

SpMat assemble_mass(const Mesh& mesh, SpaceKind kind);

struct SplitStiffness {
  SpMat kx;
  SpMat ky;
};
SplitStiffness assemble_stiffness_split(const Mesh& mesh, SpaceKind kind);

/// Plain Laplacian stiffness int grad(phi_i).grad(phi_j), assembled
/// without the directional split.
SpMat assemble_stiffness(const Mesh& mesh, SpaceKind kind);

struct FirstDerivative {
  SpMat dx;
  SpMat dy;
};
FirstDerivative assemble_first_derivative(const Mesh& mesh);

/// Convection matrix N(w): (N(w) u)_i = int (w . grad~) u phi_i over the
/// physical domain, pulled back to the reference square. `wind` holds
/// vector-space dof values. For SpaceKind::Vector the result acts
/// componentwise on a vector field.
SpMat assemble_convection(const Mesh& mesh, std::span<const double> wind, double mu4,
                          SpaceKind kind = SpaceKind::Vector);

/// Symmetric elimination of homogeneous Dirichlet dofs: rows and columns of
/// masked dofs are zeroed, the diagonal set to one and the rhs entry to zero.
void apply_dirichlet(SpMat& matrix, Vec& rhs, std::span<const char> mask);
void apply_dirichlet(SpMat& matrix, std::span<const char> mask);

/// Nodal interpolation of a function of reference coordinates.
template <class F>
Vec interpolate(const Mesh& mesh, F&& f) {
  Vec out(mesh.num_nodes());
  for (int i = 0; i < mesh.num_nodes(); ++i) out[i] = f(mesh.vertices[i].x(), mesh.vertices[i].y());
  return out;
}

// Debug dumps. Not a stable format.
void write_matrix_triplets(const std::filesystem::path& path, const SpMat& matrix);
void write_mesh_nodes(const std::filesystem::path& path, const Mesh& mesh);

}  // namespace stpod
