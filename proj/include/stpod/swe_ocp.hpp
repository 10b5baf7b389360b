#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "stpod/mesh_fe.hpp"
#include "stpod/space_time.hpp"

namespace stpod {

/// mu1 viscosity, mu2 convection, mu3 desired-profile scaling, mu4 stretch
/// of the physical domain [0,10*mu4]x[0,10]; alpha is the control penalty.
struct Parameter {
  double mu1 = 0.1;
  double mu2 = 0.01;
  double mu3 = 0.1;
  double mu4 = 1.5;
  double alpha = 0.1;

  bool operator==(const Parameter&) const = default;
};

struct ParameterBox {
  std::array<double, 4> lower{0.00001, 0.01, 0.1, 0.8};
  std::array<double, 4> upper{1.0, 0.5, 1.0, 1.5};

  bool contains(const Parameter& mu) const;
  bool operator==(const ParameterBox&) const = default;
};

inline constexpr Parameter kBenchmarkParameter{0.1, 0.01, 0.1, 1.5, 0.1};

enum class TrackingMode { Replicated, Terminal };

using ScalarField = std::function<double(double, double)>;

/// Reference-domain closures take (x^1, x2) with x^1 = x1 / mu4.
struct SWEConfig {
  double gravity = 9.81;
  double final_time = 0.8;
  int num_steps = 8;
  TrackingMode tracking = TrackingMode::Replicated;
  ScalarField initial_height;
  ScalarField desired_seed_height;

  SWEConfig();
  double dt() const { return final_time / num_steps; }
};

double default_initial_height(double x1, double x2);
double default_desired_seed_height(double x1, double x2);

/// Local dof order of one triangle for the quadratic tensor: field-major,
/// (v1 nodes 0..2, v2 nodes 0..2, h nodes 0..2).
inline constexpr int kLocalDofs = 9;

/// Element integrals of the bilinear form B(a, b) whose diagonal B(y, y) is
/// the quadratic part of the state operator:
///   momentum c: mu2 int (a1 d1 b_c + mu4 a2 d2 b_c) phi_i
///   continuity: int (d1(a_h b1) + mu4 d2(a_h b2)) phi_i
/// stored as four 3x3x3 node tensors per element, indexed [i][j][k] with i
/// the test node, j the node of a, k the node of b.
struct QuadraticTensor {
  // kind 0: momentum, a = v1, b = v_c        (coefficient mu2)
  // kind 1: momentum, a = v2, b = v_c        (coefficient mu2*mu4)
  // kind 2: continuity, a = h, b = v1        (coefficient 1)
  // kind 3: continuity, a = h, b = v2        (coefficient mu4)
  std::vector<std::array<double, 4 * 27>> values;

  static QuadraticTensor build(const Mesh& mesh);
};

/// Viscous shallow-water state operator split into a linear part E_lin(mu),
/// a quadratic part E_nl(y) = B(y, y), the control operator and the masses.
/// Spatial state vectors are ordered [v1 | v2 | h], controls [u1 | u2].
/// Rows of velocity Dirichlet dofs are zero in every state-operator output.
class SweModel {
public:
  SweModel(const FEWorkspace& ws, SWEConfig config);

  const FEWorkspace& workspace() const { return *ws_; }
  const SWEConfig& config() const { return config_; }
  int nodes() const { return n_; }
  int state_dim() const { return 3 * n_; }
  int control_dim() const { return 2 * n_; }
  /// True on velocity dofs of boundary nodes, over the state layout.
  const std::vector<char>& state_mask() const { return state_mask_; }

  SpMat state_mass(const Parameter& mu) const;
  SpMat control_mass(const Parameter& mu) const;
  SpMat observation_mass(const Parameter& mu) const;
  /// C: state_dim x control_dim, vector mass on the momentum rows.
  SpMat control_operator(const Parameter& mu) const;
  SpMat linear_operator(const Parameter& mu) const;

  /// Affine pieces of E_lin: mu1/mu4 * visc_x + mu1*mu4 * visc_y
  ///                          + g * grad_x + g*mu4 * grad_y.
  struct LinearPieces {
    SpMat visc_x, visc_y, grad_x, grad_y;
  };
  const LinearPieces& linear_pieces() const { return pieces_; }
  /// Parameter-independent masses (mu4 factored out).
  const SpMat& reference_state_mass() const { return state_mass0_; }
  const SpMat& reference_control_mass() const { return control_mass0_; }
  const SpMat& reference_control_operator() const { return control_op0_; }

  Vec eval_nonlinear(std::span<const double> y, const Parameter& mu) const;
  Vec eval_state_operator(std::span<const double> y, const Parameter& mu) const;
  /// E(y) = E_lin + N(y) with the convecting/advected field frozen at y,
  /// so that E(y) y = eval_state_operator(y).
  SpMat assemble_frozen_operator(std::span<const double> y, const Parameter& mu) const;
  /// E'_nl[y] only.
  SpMat assemble_nonlinear_frechet(std::span<const double> y, const Parameter& mu) const;
  /// E_lin + E'_nl[y].
  SpMat assemble_frechet_state(std::span<const double> y, const Parameter& mu) const;
  /// Hessian of y -> z . E_nl(y). Independent of y, symmetric.
  SpMat assemble_second_derivative(std::span<const double> z, const Parameter& mu) const;

  Vec initial_state() const;
  Vec desired_seed() const;

  /// 1 on every step for replicated tracking, only on the last step for
  /// terminal tracking.
  std::vector<double> observation_weights() const;

private:
  void check_state(std::span<const double> y, const char* who) const;
  std::array<double, 4> coefficients(const Parameter& mu) const;
  template <class Fn>
  void for_each_element(std::span<const double> x, Fn&& fn) const;
  SpMat scatter(const std::vector<std::array<double, 81>>& local) const;

  const FEWorkspace* ws_;
  SWEConfig config_;
  int n_;
  std::vector<char> state_mask_;
  QuadraticTensor tensor_;
  LinearPieces pieces_;
  SpMat state_mass0_, control_mass0_, control_op0_;
  // Fixed sparsity of all element 9x9 couplings and the value slot of every
  // local entry, so per-iterate assembly writes values in place.
  SpMat pattern_;
  std::vector<std::array<int, 81>> slots_;
};

/// J = 1/2 dt sum_k w_k |y_k - yd_k|^2_Mobs + alpha/2 dt sum_k |u_k|^2_Mu.
double cost_functional(const SweModel& model, const SpaceTimeVector& y, const SpaceTimeVector& u,
                       const SpaceTimeVector& yd, const Parameter& mu);

/// mu3 times the terminal state of the uncontrolled forward solve from the
/// desired seed, replicated over all steps.
SpaceTimeVector generate_desired_state(const SweModel& model, const Parameter& mu);

}  // namespace stpod
