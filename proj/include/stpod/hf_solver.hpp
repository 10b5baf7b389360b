#pragma once

#include <optional>
#include <vector>

#include "stpod/swe_ocp.hpp"

namespace stpod {

/// Space-time optimal-control iterate: state, control, adjoint.
struct OcpSolution {
  SpaceTimeVector y;
  SpaceTimeVector u;
  SpaceTimeVector z;

  static OcpSolution zeros(const SweModel& model);
  /// Stacked [y; u; z].
  Vec stacked() const;
  static OcpSolution unstack(const SweModel& model, const Vec& x);
};

/// Block sizes of the global system, ordered [y | u | z].
struct KKTLayout {
  int num_steps = 0;
  int state_dim = 0;    // per step
  int control_dim = 0;  // per step
  Eigen::Index ny() const { return Eigen::Index(num_steps) * state_dim; }
  Eigen::Index nu() const { return Eigen::Index(num_steps) * control_dim; }
  Eigen::Index total() const { return 2 * ny() + nu(); }

  static KKTLayout of(const SweModel& model);
};

/// Residual R = G(X) - F of the all-at-once optimality system and its
/// Jacobian [[A, B^T], [B, 0]]. Rows: adjoint equation, optimality
/// equation, state equation. Velocity Dirichlet dofs of y and z are
/// eliminated symmetrically: the state row of a constrained dof reads y_b,
/// the adjoint row reads z_b.
struct GlobalKKT {
  KKTLayout layout;
  Vec residual;
  Vec rhs;  // F
  SpMat jacobian;

  /// x = (y, u) block: rows/cols [0, ny+nu).
  SpMat saddle_a() const;
  /// State-equation rows against (y, u) columns.
  SpMat saddle_b() const;
  /// Adjoint/optimality rows against z columns; equals saddle_b()^T.
  SpMat saddle_bt() const;
};

/// K(y; mu): lower block-bidiagonal, diagonal M + dt E(y_k) with E(y) the
/// frozen-convection matrix (E(y) y = E_lin y + E_nl(y)), sub-diagonal -M.
SpMat assemble_state_block(const SweModel& model, const SpaceTimeVector& y, const Parameter& mu);
/// K^l(y; mu): same structure with the Frechet derivative on the diagonal.
SpMat assemble_linearized_state_block(const SweModel& model, const SpaceTimeVector& y, const Parameter& mu);
/// K'(mu): upper block-bidiagonal, diagonal M + dt E^adj(y_k)^T, super-diagonal -M.
SpMat assemble_adjoint_block(const SweModel& model, const SpaceTimeVector& y, const Parameter& mu);

/// Stacked F of the global system (does not depend on X).
Vec global_rhs(const SweModel& model, const Parameter& mu, const SpaceTimeVector& yd, const Vec& y0);
Vec global_residual(const SweModel& model, const OcpSolution& x, const Parameter& mu, const SpaceTimeVector& yd,
                    const Vec& y0);
GlobalKKT assemble_global(const SweModel& model, const OcpSolution& x, const Parameter& mu,
                          const SpaceTimeVector& yd, const Vec& y0);

struct NewtonOptions {
  double tol = 1e-8;
  int max_iter = 25;
};

struct NewtonResult {
  OcpSolution solution;
  std::vector<double> trace;  // ||R||_2 per iterate, starting with the initial guess
  int iterations = 0;
  double rhs_norm = 0.0;
  double linear_seconds = 0.0;  // sparse factorizations and solves
};

/// Full Newton on the global residual with a sparse direct solver.
/// Converged when ||R||_2 <= tol * max(1, ||F||_2). Throws NonConvergence
/// (carrying the trace) or SingularJacobian.
NewtonResult newton_solve(const SweModel& model, const Parameter& mu, const SpaceTimeVector& yd, const Vec& y0,
                          OcpSolution init, const NewtonOptions& options = {});

/// Backward-Euler uncontrolled forward solve from `seed`, inner Newton per
/// step to an absolute step residual of `step_tol`. An optional forcing
/// acts through the control operator.
SpaceTimeVector forward_uncontrolled(const SweModel& model, const Parameter& mu, const Vec& seed,
                                     const SpaceTimeVector* forcing = nullptr, double step_tol = 1e-10,
                                     int max_iter = 25);

/// Convenience driver: initial guess from the uncontrolled trajectory,
/// u = z = 0, then newton_solve.
NewtonResult solve_ocp(const SweModel& model, const Parameter& mu, const SpaceTimeVector& yd,
                       const NewtonOptions& options = {});

struct InfSupResult {
  double beta = 0.0;
  bool stable = false;
};

/// beta = inf_z sup_x z^T B x / (|x|_X |z|_Z), the smallest singular value
/// of Lz^{-1} B Lx^{-T} with X = Lx Lx^T, Z = Lz Lz^T. Dense; refuses
/// problems with more than `max_dim` rows or columns.
InfSupResult infsup_diagnostic(const Mat& b, const Mat& norm_x, const Mat& norm_z, int max_dim = 4000);

}  // namespace stpod
