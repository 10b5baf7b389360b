#include "stpod/rom.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "stpod/errors.hpp"

namespace stpod {

namespace {

std::span<const double> as_span(const Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace

ReducedBasis ReducedBasis::from_aggregated(const SweModel& model, const AggregatedBasis& basis) {
  return {basis.state_basis(model), basis.control};
}

ReducedBasis ReducedBasis::identity(const SweModel& model) {
  const Eigen::Index nt = model.config().num_steps;
  return {Mat::Identity(nt * model.state_dim(), nt * model.state_dim()),
          Mat::Identity(nt * model.control_dim(), nt * model.control_dim())};
}

ReducedModel::ReducedModel(const SweModel& model, ReducedBasis basis) : model_(&model), basis_(std::move(basis)) {
  const int nt = model.config().num_steps;
  const int sd = model.state_dim();
  const int cd = model.control_dim();
  if (basis_.state.rows() != Eigen::Index(nt) * sd || basis_.control.rows() != Eigen::Index(nt) * cd)
    throw DimensionMismatch("ReducedModel: basis rows do not match the space-time dimensions");
  if (basis_.state.cols() == 0 || basis_.control.cols() == 0)
    throw DimensionMismatch("ReducedModel: empty basis");

  const auto& mask = model.state_mask();
  masked_state_ = basis_.state;
  for (int k = 0; k < nt; ++k)
    for (int i = 0; i < sd; ++i)
      if (mask[i]) masked_state_.row(Eigen::Index(k) * sd + i).setZero();

  const Eigen::Index m = basis_.state.cols();
  const Eigen::Index p = basis_.control.cols();
  const SpMat& mass0 = model.reference_state_mass();
  const SpMat& cmass0 = model.reference_control_mass();
  const SpMat& cop0 = model.reference_control_operator();
  const auto& lp = model.linear_pieces();
  const auto w = model.observation_weights();

  auto& pc = pieces_;
  for (Mat* a : {&pc.mass_diag, &pc.mass_lower, &pc.visc_x, &pc.visc_y, &pc.grad_x, &pc.grad_y, &pc.observation,
                 &pc.boundary})
    a->setZero(m, m);
  pc.control_mass.setZero(p, p);
  pc.control_op.setZero(m, p);

  for (int k = 0; k < nt; ++k) {
    const auto zk = masked_state_.middleRows(Eigen::Index(k) * sd, sd);
    const auto uk = basis_.control.middleRows(Eigen::Index(k) * cd, cd);
    const Mat mz = mass0 * zk;
    const Mat proj_mass = zk.transpose() * mz;
    pc.mass_diag += proj_mass;
    pc.observation += w[k] * proj_mass;
    if (k > 0) pc.mass_lower += zk.transpose() * (mass0 * masked_state_.middleRows(Eigen::Index(k - 1) * sd, sd));
    pc.visc_x += zk.transpose() * (lp.visc_x * zk);
    pc.visc_y += zk.transpose() * (lp.visc_y * zk);
    pc.grad_x += zk.transpose() * (lp.grad_x * zk);
    pc.grad_y += zk.transpose() * (lp.grad_y * zk);
    pc.control_mass += uk.transpose() * (cmass0 * uk);
    pc.control_op += zk.transpose() * (cop0 * uk);

    const Mat zb = basis_.state.middleRows(Eigen::Index(k) * sd, sd) - zk;
    pc.boundary += zb.transpose() * zb;
  }
  Vec y0 = model.initial_state();
  for (int i = 0; i < sd; ++i)
    if (mask[i]) y0[i] = 0.0;
  pc.initial = masked_state_.topRows(sd).transpose() * (mass0 * y0);
}

Mat ReducedModel::linear_operator(const Parameter& mu) const {
  const double g = model_->config().gravity;
  return (mu.mu1 / mu.mu4) * pieces_.visc_x + (mu.mu1 * mu.mu4) * pieces_.visc_y + g * pieces_.grad_x +
         (g * mu.mu4) * pieces_.grad_y;
}

Mat ReducedModel::linear_state_block(const Parameter& mu) const {
  const double dt = model_->config().dt();
  return mu.mu4 * (pieces_.mass_diag - pieces_.mass_lower) + dt * linear_operator(mu) + pieces_.boundary;
}

Vec ReducedModel::observed_target(const Parameter& mu, const SpaceTimeVector& yd) const {
  const int nt = model_->config().num_steps;
  const int sd = model_->state_dim();
  if (yd.num_steps() != nt || yd.spatial_dim() != sd) throw DimensionMismatch("ReducedModel: target has the wrong shape");
  const auto w = model_->observation_weights();
  const SpMat& mass0 = model_->reference_state_mass();
  Vec out = Vec::Zero(state_columns());
  for (int k = 0; k < nt; ++k)
    if (w[k] != 0.0) out += w[k] * (masked_state_.middleRows(Eigen::Index(k) * sd, sd).transpose() * (mass0 * yd.block(k)));
  return mu.mu4 * out;
}

Vec ReducedModel::rhs(const Parameter& mu, const SpaceTimeVector& yd) const {
  const Eigen::Index m = state_columns();
  Vec f = Vec::Zero(dimension());
  f.head(m) = model_->config().dt() * observed_target(mu, yd);
  f.tail(m) = mu.mu4 * pieces_.initial;
  return f;
}

ReducedModel::Nonlinear ReducedModel::nonlinear(const Vec& xn, const Parameter& mu, Terms terms) const {
  const int nt = model_->config().num_steps;
  const int sd = model_->state_dim();
  const Eigen::Index m = state_columns();
  const Eigen::Index p = control_columns();
  const bool adjoint = terms != Terms::StateOnly;
  const bool frechet = terms != Terms::Vectors;
  const bool hessian = terms == Terms::All;
  const Vec yn = xn.head(m);
  Nonlinear out;
  // Full-order products are stacked over time so each projection is one
  // large dense product instead of nt small ones.
  const Eigen::Index rows = masked_state_.rows();
  Mat lifted(rows, (frechet ? m : 0) + (hessian ? m : 0));
  Vec e_state(rows), e_adjoint(adjoint ? rows : 0);
  for (int k = 0; k < nt; ++k) {
    const Eigen::Index r0 = Eigen::Index(k) * sd;
    const auto zk = masked_state_.middleRows(r0, sd);
    const Vec y = zk * yn;
    e_state.segment(r0, sd) = model_->eval_nonlinear(as_span(y), mu);
    if (!adjoint && !frechet) continue;
    const SpMat d = model_->assemble_nonlinear_frechet(as_span(y), mu);
    if (frechet) lifted.block(r0, 0, sd, m).noalias() = d * zk;
    if (!adjoint) continue;
    const Vec z = zk * xn.segment(m + p, m);
    e_adjoint.segment(r0, sd) = d.transpose() * z;
    if (hessian) lifted.block(r0, m, sd, m).noalias() = model_->assemble_second_derivative(as_span(z), mu) * zk;
  }
  out.state = masked_state_.transpose() * e_state;
  if (adjoint) out.adjoint = masked_state_.transpose() * e_adjoint;
  if (lifted.cols() > 0) {
    const Mat projected = masked_state_.transpose() * lifted;
    if (frechet) out.frechet = projected.leftCols(m);
    if (hessian) out.hessian = projected.rightCols(m);
  }
  return out;
}

Vec ReducedModel::residual(const Vec& xn, const Parameter& mu, const SpaceTimeVector& yd) const {
  if (xn.size() != dimension()) throw DimensionMismatch("ReducedModel::residual: coefficient length mismatch");
  const Eigen::Index m = state_columns();
  const Eigen::Index p = control_columns();
  const double dt = model_->config().dt();
  const Vec yn = xn.head(m);
  const Vec un = xn.segment(m, p);
  const Vec zn = xn.tail(m);
  const auto nl = nonlinear(xn, mu, Terms::Vectors);
  const Mat lin = linear_operator(mu);
  const auto& pc = pieces_;

  Vec r(dimension());
  r.head(m) = dt * mu.mu4 * (pc.observation * yn) - dt * observed_target(mu, yd) +
              mu.mu4 * (pc.mass_diag * zn - pc.mass_lower.transpose() * zn) + dt * (lin.transpose() * zn) +
              dt * nl.adjoint + pc.boundary * zn;
  r.segment(m, p) = mu.alpha * dt * mu.mu4 * (pc.control_mass * un) - dt * mu.mu4 * (pc.control_op.transpose() * zn);
  r.tail(m) = mu.mu4 * (pc.mass_diag * yn - pc.mass_lower * yn) + dt * (lin * yn) + dt * nl.state -
              dt * mu.mu4 * (pc.control_op * un) - mu.mu4 * pc.initial + pc.boundary * yn;
  return r;
}

Mat ReducedModel::jacobian(const Vec& xn, const Parameter& mu) const {
  if (xn.size() != dimension()) throw DimensionMismatch("ReducedModel::jacobian: coefficient length mismatch");
  const Eigen::Index m = state_columns();
  const Eigen::Index p = control_columns();
  const double dt = model_->config().dt();
  const auto nl = nonlinear(xn, mu, Terms::All);
  const auto& pc = pieces_;

  const Mat b_y = linear_state_block(mu) + dt * nl.frechet;
  const Mat b_u = -dt * mu.mu4 * pc.control_op;
  Mat j = Mat::Zero(dimension(), dimension());
  j.topLeftCorner(m, m) = dt * mu.mu4 * pc.observation + dt * nl.hessian;
  j.block(m, m, p, p) = mu.alpha * dt * mu.mu4 * pc.control_mass;
  j.block(m + p, 0, m, m) = b_y;
  j.block(m + p, m, m, p) = b_u;
  j.block(0, m + p, m, m) = b_y.transpose();
  j.block(m, m + p, p, m) = b_u.transpose();
  return j;
}

ReducedModel::StateLinearization ReducedModel::linearize_state(const Vec& yn, const Parameter& mu) const {
  const Eigen::Index m = state_columns();
  if (yn.size() != m) throw DimensionMismatch("ReducedModel::linearize_state: coefficient length mismatch");
  Vec xn = Vec::Zero(dimension());
  xn.head(m) = yn;
  const double dt = model_->config().dt();
  const auto nl = nonlinear(xn, mu, Terms::StateOnly);
  const auto& pc = pieces_;
  const Mat b_y = linear_state_block(mu);
  return {b_y * yn + dt * nl.state - mu.mu4 * pc.initial, b_y + dt * nl.frechet};
}

OcpSolution ReducedModel::reconstruct(const Vec& xn) const {
  if (xn.size() != dimension()) throw DimensionMismatch("ReducedModel::reconstruct: coefficient length mismatch");
  const Eigen::Index m = state_columns();
  const Eigen::Index p = control_columns();
  const int nt = model_->config().num_steps;
  return {SpaceTimeVector(FieldKind::State, nt, Vec(basis_.state * xn.head(m))),
          SpaceTimeVector(FieldKind::Control, nt, Vec(basis_.control * xn.segment(m, p))),
          SpaceTimeVector(FieldKind::Adjoint, nt, Vec(basis_.state * xn.tail(m)))};
}

Vec ReducedModel::reduce(const OcpSolution& x) const {
  const Eigen::Index m = state_columns();
  const Eigen::Index p = control_columns();
  const auto qs = basis_.state.colPivHouseholderQr();
  const auto qu = basis_.control.colPivHouseholderQr();
  Vec out(dimension());
  out.head(m) = qs.solve(x.y.data());
  out.segment(m, p) = qu.solve(x.u.data());
  out.tail(m) = qs.solve(x.z.data());
  return out;
}

namespace {

// Reduced counterpart of the uncontrolled forward start: Newton on the state
// rows alone with u = z = 0, to sqrt(tol) since the outer solve finishes the
// job. Falls back to zero when that does not converge.
Vec reduced_forward_start(const ReducedModel& rom, const Parameter& mu, const NewtonOptions& options) {
  const int ns = rom.state_columns();
  Vec yn = Vec::Zero(ns);
  auto lin = rom.linearize_state(yn, mu);
  const double target = std::sqrt(options.tol) * std::max(1.0, lin.residual.norm());
  for (int it = 0; it < options.max_iter; ++it) {
    yn -= lin.jacobian.partialPivLu().solve(lin.residual);
    lin = rom.linearize_state(yn, mu);
    const double norm = lin.residual.norm();
    if (!std::isfinite(norm)) break;
    if (norm <= target) {
      Vec x = Vec::Zero(rom.dimension());
      x.head(ns) = yn;
      return x;
    }
  }
  return Vec::Zero(rom.dimension());
}

}  // namespace

ReducedNewtonResult reduced_newton_solve(const ReducedModel& rom, const Parameter& mu, const SpaceTimeVector& yd,
                                         const NewtonOptions& options) {
  if (!(options.tol > 0.0)) throw InvalidArgument("reduced_newton_solve: tolerance must be positive");
  ReducedNewtonResult result;
  result.coefficients = reduced_forward_start(rom, mu, options);
  result.rhs_norm = rom.rhs(mu, yd).norm();
  result.min_rcond = std::numeric_limits<double>::infinity();
  const double target = options.tol * std::max(1.0, result.rhs_norm);
  for (int it = 0;; ++it) {
    const Vec r = rom.residual(result.coefficients, mu, yd);
    result.trace.push_back(r.norm());
    if (!std::isfinite(result.trace.back()))
      throw NonConvergence("reduced_newton_solve: residual is not finite", result.trace);
    if (result.trace.back() <= target) {
      result.iterations = it;
      return result;
    }
    if (it >= options.max_iter)
      throw NonConvergence("reduced_newton_solve: no convergence after " + std::to_string(it) + " iterations",
                           result.trace);
    const Mat jac = rom.jacobian(result.coefficients, mu);
    const auto t0 = std::chrono::steady_clock::now();
    const Eigen::PartialPivLU<Mat> lu(jac);
    const double rcond = lu.rcond();
    result.min_rcond = std::min(result.min_rcond, rcond);
    if (!(rcond > 0.0)) throw SingularReducedJacobian("reduced_newton_solve: reduced Jacobian is singular");
    if (rcond < 1e-12) spdlog::warn("reduced Jacobian is ill-conditioned (rcond = {:.3e})", rcond);
    result.coefficients -= lu.solve(r);
    result.linear_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
}

VariableErrors relative_errors(const SweModel& model, const OcpSolution& truth, const OcpSolution& approx) {
  VariableErrors out;
  for (PodVariable var : kPodVariables) {
    const auto ip = variable_inner_product(model, var);
    const Vec t = extract_variable(model, truth, var);
    const Vec e = t - extract_variable(model, approx, var);
    const double nt = ip.norm(t);
    out[var] = nt > 0.0 ? ip.norm(e) / nt : ip.norm(e);
  }
  return out;
}

BestFitResult best_fit_projection(const SweModel& model, const OcpSolution& truth, const AggregatedBasis& basis) {
  BestFitResult out{OcpSolution::zeros(model), {}};
  auto space_of = [&](PodVariable var) -> const Mat& {
    switch (var) {
      case PodVariable::Velocity:
      case PodVariable::AdjointVelocity: return basis.velocity;
      case PodVariable::Height:
      case PodVariable::AdjointHeight: return basis.height;
      case PodVariable::Control: break;
    }
    return basis.control;
  };
  for (PodVariable var : kPodVariables) {
    const auto ip = variable_inner_product(model, var);
    const Mat& q = space_of(var);
    const Vec x = extract_variable(model, truth, var);
    if (q.rows() != x.size()) throw DimensionMismatch("best_fit_projection: basis does not match the solution");
    // Normal equations in the variable's inner product.
    const Mat xq = ip.apply(q);
    const Mat gram = q.transpose() * xq;
    const Vec coef = gram.ldlt().solve(xq.transpose() * x);
    const Vec proj = q * coef;
    SpaceTimeVector* target = var == PodVariable::Control ? &out.projection.u
                              : (var == PodVariable::Velocity || var == PodVariable::Height) ? &out.projection.y
                                                                                              : &out.projection.z;
    insert_variable(model, var, proj, *target);
  }
  out.errors = relative_errors(model, truth, out.projection);
  return out;
}

}  // namespace stpod
