#pragma once

#include <array>
#include <vector>

#include "stpod/pod.hpp"

namespace stpod {

class SingularReducedJacobian : public SingularJacobian {
public:
  using SingularJacobian::SingularJacobian;
};

/// Trial/test spaces of the reduced optimality system: Z_y = Z_z = `state`
/// on the space-time state layout and Z_u = `control`.
struct ReducedBasis {
  Mat state;    // num_steps * state_dim rows
  Mat control;  // num_steps * control_dim rows

  static ReducedBasis from_aggregated(const SweModel& model, const AggregatedBasis& basis);
  /// Square identity bases: the reduced system is the full one.
  static ReducedBasis identity(const SweModel& model);
};

/// Galerkin projection of the space-time optimality system. The linear,
/// parameter-separable pieces are projected once; the quadratic terms are
/// evaluated at full order and projected per evaluation. Unknowns are
/// ordered [y_N | u_N | z_N].
class ReducedModel {
public:
  ReducedModel(const SweModel& model, ReducedBasis basis);

  const SweModel& model() const { return *model_; }
  const ReducedBasis& basis() const { return basis_; }
  int state_columns() const { return static_cast<int>(basis_.state.cols()); }
  int control_columns() const { return static_cast<int>(basis_.control.cols()); }
  int dimension() const { return 2 * state_columns() + control_columns(); }

  /// Projected pieces, each parameter-independent. The parameter enters as
  ///   mass: mu4, visc_x: mu1/mu4, visc_y: mu1*mu4, grad_x: g, grad_y: g*mu4,
  ///   observation, control mass, control operator: mu4.
  struct Pieces {
    Mat mass_diag;   // sum_k Z_k^T M Z_k
    Mat mass_lower;  // sum_k Z_k^T M Z_{k-1}
    Mat visc_x, visc_y, grad_x, grad_y;
    Mat observation;  // sum_k w_k Z_k^T M Z_k
    Mat boundary;     // sum_k Z_k^T (I - P) Z_k, zero for Dirichlet-free bases
    Mat control_mass;
    Mat control_op;  // state x control
    Vec initial;     // Z_1^T M y0
  };
  const Pieces& pieces() const { return pieces_; }

  /// K^l at y = 0, projected: mu4 (diag - lower) + dt E_lin.
  Mat linear_state_block(const Parameter& mu) const;

  /// F_N = Z^T F.
  Vec rhs(const Parameter& mu, const SpaceTimeVector& yd) const;
  /// Z^T R(Z x_N) assembled from the projected pieces.
  Vec residual(const Vec& xn, const Parameter& mu, const SpaceTimeVector& yd) const;
  /// Z^T Jac(Z x_N) Z.
  Mat jacobian(const Vec& xn, const Parameter& mu) const;

  /// State-equation rows of the residual at (y_N, 0, 0) and their
  /// derivative in y_N; skips every adjoint term.
  struct StateLinearization {
    Vec residual;
    Mat jacobian;
  };
  StateLinearization linearize_state(const Vec& yn, const Parameter& mu) const;

  OcpSolution reconstruct(const Vec& xn) const;
  /// Euclidean least-squares coefficients of a full solution; the inverse of
  /// reconstruct on span(Z).
  Vec reduce(const OcpSolution& x) const;

private:
  struct Nonlinear {
    Vec state;    // sum_k Z_k^T E_nl(y_k)
    Vec adjoint;  // sum_k Z_k^T E'_nl[y_k]^T z_k
    Mat frechet;  // sum_k Z_k^T E'_nl[y_k] Z_k
    Mat hessian;  // sum_k Z_k^T H(z_k) Z_k
  };
  enum class Terms { StateOnly, Vectors, All };
  Nonlinear nonlinear(const Vec& xn, const Parameter& mu, Terms terms) const;
  Mat linear_operator(const Parameter& mu) const;
  Vec observed_target(const Parameter& mu, const SpaceTimeVector& yd) const;

  const SweModel* model_;
  ReducedBasis basis_;
  Mat masked_state_;  // P Z_y
  Pieces pieces_;
};

struct ReducedNewtonResult {
  Vec coefficients;
  std::vector<double> trace;
  int iterations = 0;
  double rhs_norm = 0.0;
  double min_rcond = 0.0;
  double linear_seconds = 0.0;  // dense factorizations and solves
};

/// Dense Newton on the reduced residual, converged
/// when |R_N| <= tol * max(1, |F_N|). Logs a warning when the reduced
/// Jacobian is nearly singular (reciprocal condition below 1e-12). The
/// start solves the reduced state equation with zero control and adjoint,
/// or is zero when that inner solve fails.
ReducedNewtonResult reduced_newton_solve(const ReducedModel& rom, const Parameter& mu, const SpaceTimeVector& yd,
                                         const NewtonOptions& options = {});

/// Per-variable values indexed by PodVariable (v, h, u, w, q).
struct VariableErrors {
  std::array<double, 5> values{};
  double& operator[](PodVariable var) { return values[static_cast<int>(var)]; }
  double operator[](PodVariable var) const { return values[static_cast<int>(var)]; }
};

/// |x - x_approx| / |x| per variable in the POD inner products.
VariableErrors relative_errors(const SweModel& model, const OcpSolution& truth, const OcpSolution& approx);

struct BestFitResult {
  OcpSolution projection;
  VariableErrors errors;
};

/// Inner-product-orthogonal projection of each variable onto its reduced
/// space: v, w onto the aggregated velocity basis, h, q onto the height
/// basis, u onto the control basis.
BestFitResult best_fit_projection(const SweModel& model, const OcpSolution& truth, const AggregatedBasis& basis);

}  // namespace stpod
