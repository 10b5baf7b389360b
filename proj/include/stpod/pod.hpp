#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "stpod/hf_solver.hpp"

namespace stpod {

/// The five POD variables: state velocity and height, control, adjoint
/// velocity (w) and adjoint height (q).
enum class PodVariable { Velocity, Height, Control, AdjointVelocity, AdjointHeight };

inline constexpr std::array<PodVariable, 5> kPodVariables{PodVariable::Velocity, PodVariable::Height,
                                                          PodVariable::Control, PodVariable::AdjointVelocity,
                                                          PodVariable::AdjointHeight};

/// Short tags used in file names and reports: v, h, u, w, q.
std::string_view variable_name(PodVariable var);

enum class InnerProductKind { H1, L2 };
std::string_view inner_product_name(InnerProductKind kind);

/// H1 in space for the two velocity groups, L2 otherwise.
InnerProductKind inner_product_of(PodVariable var);

/// Space-time inner product dt * sum_k a_k^T X b_k with a fixed spatial
/// Gram matrix X on the reference domain.
struct SpaceTimeInnerProduct {
  SpMat spatial;
  double dt = 1.0;
  int num_steps = 1;

  Eigen::Index size() const { return spatial.rows() * num_steps; }
  Mat apply(const Mat& a) const;
  double dot(const Vec& a, const Vec& b) const;
  double norm(const Vec& a) const;
};

/// Spatial Gram matrix of the given kind for `components` copies of the P1
/// scalar space: blockdiag(M + K) for H1, blockdiag(M) for L2.
SpMat spatial_gram(const FEWorkspace& ws, InnerProductKind kind, int components);
SpaceTimeInnerProduct variable_inner_product(const SweModel& model, PodVariable var);

/// Components per node of each variable's space-time vector.
int variable_components(PodVariable var);

/// Restriction of a space-time solution to one variable; the layout is
/// block k = the variable's spatial dofs at step k.
Vec extract_variable(const SweModel& model, const OcpSolution& x, PodVariable var);
/// Inverse of extract_variable for the state/adjoint groups: writes the
/// variable's dofs into `target` and leaves the other rows untouched.
void insert_variable(const SweModel& model, PodVariable var, const Vec& values, SpaceTimeVector& target);

struct ParameterSamplingBox {
  ParameterBox box;
  double alpha = 0.1;
};

/// n i.i.d. uniform draws from the box; deterministic for a fixed seed.
std::vector<Parameter> sample_parameters(int n, std::uint64_t seed, const ParameterSamplingBox& box = {});

struct SnapshotSet {
  std::vector<Parameter> params;
  std::array<Mat, 5> data;  // columns are snapshots, indexed by PodVariable
  std::vector<std::vector<double>> traces;
  std::vector<int> source_index;  // position of each kept snapshot in the requested list

  int size() const { return static_cast<int>(params.size()); }
  const Mat& of(PodVariable var) const { return data[static_cast<int>(var)]; }
  Mat& of(PodVariable var) { return data[static_cast<int>(var)]; }
};

struct SnapshotOptions {
  NewtonOptions newton;
  int workers = 1;
};

/// Solves the optimality system at every parameter, in parallel over
/// `workers` threads. Non-converged samples are dropped with a warning; the
/// kept snapshots stay in the order of `params`.
SnapshotSet collect_snapshots(const SweModel& model, const std::vector<Parameter>& params,
                              const SnapshotOptions& options = {});

/// C = (1/N) S^T X S.
Mat correlation_matrix(const Mat& snapshots, const SpaceTimeInnerProduct& ip);

struct PodOptions {
  /// Eigenvalues below rank_tol * lambda_1 count as numerically zero.
  double rank_tol = 1e-12;
};

struct VariableBasis {
  Vec eigenvalues;   // all N_max, nonincreasing
  Mat eigenvectors;  // unit Euclidean columns, same order
  Mat basis;         // chi_1 .. chi_N, orthonormal in the inner product
  int rank = 0;
};

/// Eigen-decomposition of the correlation matrix and the first N modes
/// chi_n = S x_n / sqrt(N_max lambda_n). Throws RankDeficit when N exceeds
/// the numerical rank.
VariableBasis pod_truncate(const Mat& correlation, const Mat& snapshots, int n, const SpaceTimeInnerProduct& ip,
                           const PodOptions& options = {});

/// Numerical rank of a nonincreasing eigenvalue sequence.
int numerical_rank(const Vec& eigenvalues, double rank_tol);

/// Modified Gram-Schmidt with one reorthogonalization pass in the given
/// inner product. Columns whose norm drops below `drop_tol` times their
/// original norm are discarded.
Mat orthonormalize(const Mat& columns, const SpaceTimeInnerProduct& ip, double drop_tol = 1e-10);

/// Reduced spaces: one aggregated basis for the state/adjoint velocity
/// pair, one for the height pair, and the control basis. The state and
/// adjoint trial spaces coincide.
struct AggregatedBasis {
  Mat velocity;  // num_steps * 2n rows
  Mat height;    // num_steps * n rows
  Mat control;   // num_steps * 2n rows

  int state_columns() const { return static_cast<int>(velocity.cols() + height.cols()); }
  /// 2 * state_columns + control columns (9N without duplicates).
  int dimension() const { return 2 * state_columns() + static_cast<int>(control.cols()); }
  /// Z_y = Z_z on the space-time state layout.
  Mat state_basis(const SweModel& model) const;
};

/// Z_vz = orth([v | w]), Z_hq = orth([h | q]), Z_u = orth(u), using the
/// first n columns of each variable basis.
AggregatedBasis aggregate(const SweModel& model, const std::array<Mat, 5>& bases, int n);

/// POD of every variable of a snapshot set, keeping up to `max_n` modes
/// (clipped at each variable's rank).
struct PodResult {
  std::array<VariableBasis, 5> variables;
  const VariableBasis& of(PodVariable var) const { return variables[static_cast<int>(var)]; }
};
PodResult compute_pod(const SweModel& model, const SnapshotSet& snapshots, int max_n, const PodOptions& options = {});

}  // namespace stpod
