#include "stpod/hf_solver.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/UmfPackSupport>

#include <chrono>
#include <limits>

#include "stpod/errors.hpp"

namespace stpod {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

// Collects triplets of space-time blocks. Row/column indices that fall on a
// constrained state dof are dropped when the corresponding flag is set.
class BlockSink {
public:
  BlockSink(const std::vector<char>& mask, int state_dim) : mask_(mask), sd_(state_dim) {}

  void add(const SpMat& m, Eigen::Index r0, Eigen::Index c0, double scale, bool mask_rows, bool mask_cols) {
    for (int k = 0; k < m.outerSize(); ++k)
      for (SpMat::InnerIterator it(m, k); it; ++it) {
        if (mask_rows && mask_[it.row()]) continue;
        if (mask_cols && mask_[it.col()]) continue;
        t_.emplace_back(r0 + it.row(), c0 + it.col(), scale * it.value());
      }
  }
  void add_constrained_identity(Eigen::Index r0, Eigen::Index c0) {
    for (int i = 0; i < sd_; ++i)
      if (mask_[i]) t_.emplace_back(r0 + i, c0 + i, 1.0);
  }
  SpMat build(Eigen::Index rows, Eigen::Index cols) {
    SpMat out(rows, cols);
    out.setFromTriplets(t_.begin(), t_.end());
    out.makeCompressed();
    return out;
  }
  Triplets& triplets() { return t_; }

private:
  const std::vector<char>& mask_;
  int sd_;
  Triplets t_;
};

// UMFPACK with METIS ordering; every solve is checked against the matrix
// so that a broken dense kernel surfaces as an error instead of a bad step.
class SparseDirectSolver {
public:
  explicit SparseDirectSolver(const SpMat& a) : a_(a) {
    lu_.umfpackControl()(UMFPACK_ORDERING) = UMFPACK_ORDERING_METIS;
    lu_.compute(a_);
    if (lu_.info() != Eigen::Success) throw SingularJacobian("sparse LU factorization failed");
  }
  Vec solve(const Vec& b) const {
    Vec x = lu_.solve(b);
    if (!x.allFinite()) throw SingularJacobian("sparse LU solve produced non-finite values");
    const double rel = (a_ * x - b).norm() / std::max(b.norm(), std::numeric_limits<double>::min());
    if (rel > 1e-6)
      throw SingularJacobian("sparse LU solve is inaccurate (relative residual " + std::to_string(rel) +
                             "); check the BLAS backend, e.g. OPENBLAS_CORETYPE");
    return x;
  }

private:
  const SpMat& a_;
  Eigen::UmfPackLU<SpMat> lu_;
};

Vec masked(const SweModel& model, Eigen::Ref<const Vec> v) {
  Vec out = v;
  const auto& mask = model.state_mask();
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (mask[i]) out[i] = 0.0;
  return out;
}

std::span<const double> as_span(const Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

void check_state_vector(const SweModel& model, const SpaceTimeVector& y, const char* who) {
  if (y.num_steps() != model.config().num_steps || y.spatial_dim() != model.state_dim())
    throw DimensionMismatch(std::string(who) + ": state space-time vector has the wrong shape");
}

void check_solution(const SweModel& model, const OcpSolution& x, const char* who) {
  check_state_vector(model, x.y, who);
  check_state_vector(model, x.z, who);
  if (x.u.num_steps() != model.config().num_steps || x.u.spatial_dim() != model.control_dim())
    throw DimensionMismatch(std::string(who) + ": control space-time vector has the wrong shape");
}

// Block-bidiagonal chain with per-step diagonal blocks and -M coupling.
// lower == true puts -M below the diagonal (state), otherwise above.
template <class DiagFn>
SpMat time_chain(const SweModel& model, const Parameter& mu, bool lower, DiagFn&& diag) {
  const int nt = model.config().num_steps;
  const int sd = model.state_dim();
  const SpMat mass = model.state_mass(mu);
  BlockSink sink(model.state_mask(), sd);
  for (int k = 0; k < nt; ++k) {
    sink.add(diag(k), Eigen::Index(k) * sd, Eigen::Index(k) * sd, 1.0, true, true);
    sink.add_constrained_identity(Eigen::Index(k) * sd, Eigen::Index(k) * sd);
    if (k + 1 < nt) {
      const auto r = lower ? k + 1 : k;
      const auto c = lower ? k : k + 1;
      sink.add(mass, Eigen::Index(r) * sd, Eigen::Index(c) * sd, -1.0, true, true);
    }
  }
  return sink.build(Eigen::Index(nt) * sd, Eigen::Index(nt) * sd);
}

}  // namespace

OcpSolution OcpSolution::zeros(const SweModel& model) {
  const int nt = model.config().num_steps;
  return {SpaceTimeVector(FieldKind::State, nt, model.state_dim()),
          SpaceTimeVector(FieldKind::Control, nt, model.control_dim()),
          SpaceTimeVector(FieldKind::Adjoint, nt, model.state_dim())};
}

Vec OcpSolution::stacked() const {
  Vec x(y.size() + u.size() + z.size());
  x << y.data(), u.data(), z.data();
  return x;
}

OcpSolution OcpSolution::unstack(const SweModel& model, const Vec& x) {
  const auto layout = KKTLayout::of(model);
  if (x.size() != layout.total()) throw DimensionMismatch("OcpSolution::unstack: length mismatch");
  const int nt = layout.num_steps;
  return {SpaceTimeVector(FieldKind::State, nt, Vec(x.head(layout.ny()))),
          SpaceTimeVector(FieldKind::Control, nt, Vec(x.segment(layout.ny(), layout.nu()))),
          SpaceTimeVector(FieldKind::Adjoint, nt, Vec(x.tail(layout.ny())))};
}

KKTLayout KKTLayout::of(const SweModel& model) {
  return {model.config().num_steps, model.state_dim(), model.control_dim()};
}

SpMat GlobalKKT::saddle_a() const {
  const auto n = layout.ny() + layout.nu();
  return jacobian.topLeftCorner(n, n);
}

SpMat GlobalKKT::saddle_b() const {
  const auto n = layout.ny() + layout.nu();
  return jacobian.bottomLeftCorner(layout.ny(), n);
}

SpMat GlobalKKT::saddle_bt() const {
  const auto n = layout.ny() + layout.nu();
  return jacobian.topRightCorner(n, layout.ny());
}

SpMat assemble_state_block(const SweModel& model, const SpaceTimeVector& y, const Parameter& mu) {
  check_state_vector(model, y, "assemble_state_block");
  const double dt = model.config().dt();
  const SpMat mass = model.state_mass(mu);
  return time_chain(model, mu, true, [&](int k) {
    const Vec yk = masked(model, y.block(k));
    SpMat d = mass + dt * model.assemble_frozen_operator(as_span(yk), mu);
    return d;
  });
}

SpMat assemble_linearized_state_block(const SweModel& model, const SpaceTimeVector& y, const Parameter& mu) {
  check_state_vector(model, y, "assemble_linearized_state_block");
  const double dt = model.config().dt();
  const SpMat mass = model.state_mass(mu);
  return time_chain(model, mu, true, [&](int k) {
    const Vec yk = masked(model, y.block(k));
    SpMat d = mass + dt * model.assemble_frechet_state(as_span(yk), mu);
    return d;
  });
}

SpMat assemble_adjoint_block(const SweModel& model, const SpaceTimeVector& y, const Parameter& mu) {
  check_state_vector(model, y, "assemble_adjoint_block");
  const double dt = model.config().dt();
  const SpMat mass = model.state_mass(mu);
  return time_chain(model, mu, false, [&](int k) {
    const Vec yk = masked(model, y.block(k));
    SpMat d = SpMat(mass + dt * model.assemble_frechet_state(as_span(yk), mu)).transpose();
    return d;
  });
}

Vec global_rhs(const SweModel& model, const Parameter& mu, const SpaceTimeVector& yd, const Vec& y0) {
  check_state_vector(model, yd, "global_rhs");
  if (y0.size() != model.state_dim()) throw DimensionMismatch("global_rhs: initial state length mismatch");
  const auto layout = KKTLayout::of(model);
  const double dt = model.config().dt();
  const SpMat mobs = model.observation_mass(mu);
  const auto w = model.observation_weights();
  const auto& mask = model.state_mask();
  Vec f = Vec::Zero(layout.total());
  for (int k = 0; k < layout.num_steps; ++k) {
    auto seg = f.segment(Eigen::Index(k) * layout.state_dim, layout.state_dim);
    seg = dt * w[k] * (mobs * yd.block(k));
    for (int i = 0; i < layout.state_dim; ++i)
      if (mask[i]) seg[i] = 0.0;
  }
  auto first = f.segment(layout.ny() + layout.nu(), layout.state_dim);
  first = model.state_mass(mu) * masked(model, y0);
  for (int i = 0; i < layout.state_dim; ++i)
    if (mask[i]) first[i] = 0.0;
  return f;
}

Vec global_residual(const SweModel& model, const OcpSolution& x, const Parameter& mu, const SpaceTimeVector& yd,
                    const Vec& y0) {
  check_solution(model, x, "global_residual");
  const auto layout = KKTLayout::of(model);
  const int nt = layout.num_steps;
  const int sd = layout.state_dim;
  const int cd = layout.control_dim;
  const double dt = model.config().dt();
  const SpMat mass = model.state_mass(mu);
  const SpMat mobs = model.observation_mass(mu);
  const SpMat cmass = model.control_mass(mu);
  const SpMat cop = model.control_operator(mu);
  const auto w = model.observation_weights();
  const auto& mask = model.state_mask();

  std::vector<Vec> ym(nt), zm(nt);
  for (int k = 0; k < nt; ++k) {
    ym[k] = masked(model, x.y.block(k));
    zm[k] = masked(model, x.z.block(k));
  }
  const Vec y0m = masked(model, y0);

  Vec r(layout.total());
  auto r1 = r.head(layout.ny());
  auto r2 = r.segment(layout.ny(), layout.nu());
  auto r3 = r.tail(layout.ny());
  for (int k = 0; k < nt; ++k) {
    const SpMat d = model.assemble_frechet_state(as_span(ym[k]), mu);
    Vec adj = dt * w[k] * (mobs * (ym[k] - yd.block(k))) + mass * zm[k] + dt * (d.transpose() * zm[k]);
    if (k + 1 < nt) adj -= mass * zm[k + 1];
    Vec st = mass * ym[k] + dt * model.eval_state_operator(as_span(ym[k]), mu) - dt * (cop * x.u.block(k));
    st -= mass * (k == 0 ? y0m : ym[k - 1]);
    for (int i = 0; i < sd; ++i)
      if (mask[i]) {
        adj[i] = x.z.block(k)[i];
        st[i] = x.y.block(k)[i];
      }
    r1.segment(Eigen::Index(k) * sd, sd) = adj;
    r3.segment(Eigen::Index(k) * sd, sd) = st;
    r2.segment(Eigen::Index(k) * cd, cd) = mu.alpha * dt * (cmass * x.u.block(k)) - dt * (cop.transpose() * zm[k]);
  }
  return r;
}

// Full Jacobian in [y | u | z] order, or with `condensed` set, the
// [y | z] system left after eliminating the control rows. The elimination
// relies on C = E Mu (E the velocity embedding), so that
// C Mu^{-1} C^T = E Mu E^T stays sparse.
SpMat assemble_jacobian(const SweModel& model, const OcpSolution& x, const Parameter& mu, bool condensed) {
  const auto layout = KKTLayout::of(model);
  const int nt = layout.num_steps;
  const int sd = layout.state_dim;
  const int cd = layout.control_dim;
  const double dt = model.config().dt();
  const SpMat mass = model.state_mass(mu);
  const SpMat mobs = model.observation_mass(mu);
  const SpMat cmass = model.control_mass(mu);
  const SpMat cop = model.control_operator(mu);
  const SpMat copt = cop.transpose();
  const auto w = model.observation_weights();
  const Eigen::Index off_u = layout.ny();
  const Eigen::Index off_z = condensed ? layout.ny() : layout.ny() + layout.nu();

  BlockSink sink(model.state_mask(), sd);
  for (int k = 0; k < nt; ++k) {
    const Eigen::Index ys = Eigen::Index(k) * sd;
    const Eigen::Index us = off_u + Eigen::Index(k) * cd;
    const Eigen::Index zs = off_z + Eigen::Index(k) * sd;
    const Vec yk = masked(model, x.y.block(k));
    const Vec zk = masked(model, x.z.block(k));

    // A: observation plus the second-derivative block of the adjoint term.
    sink.add(mobs, ys, ys, dt * w[k], true, true);
    sink.add(model.assemble_second_derivative(as_span(zk), mu), ys, ys, dt, true, true);

    // B = [K^l, -dt C] and its transpose.
    const SpMat diag = mass + dt * model.assemble_frechet_state(as_span(yk), mu);
    const SpMat diag_t = diag.transpose();
    sink.add(diag, zs, ys, 1.0, true, true);
    sink.add_constrained_identity(zs, ys);
    sink.add(diag_t, ys, zs, 1.0, true, true);
    sink.add_constrained_identity(ys, zs);
    if (k + 1 < nt) {
      sink.add(mass, zs + sd, ys, -1.0, true, true);
      sink.add(mass, ys, zs + sd, -1.0, true, true);
    }
    if (condensed) {
      // Control mass indices coincide with the velocity rows of the state layout.
      sink.add(cmass, zs, zs, -dt / mu.alpha, true, true);
    } else {
      sink.add(cmass, us, us, mu.alpha * dt, false, false);
      sink.add(cop, zs, us, -dt, true, false);
      sink.add(copt, us, zs, -dt, false, true);
    }
  }
  const Eigen::Index n = condensed ? 2 * layout.ny() : layout.total();
  return sink.build(n, n);
}

GlobalKKT assemble_global(const SweModel& model, const OcpSolution& x, const Parameter& mu,
                          const SpaceTimeVector& yd, const Vec& y0) {
  GlobalKKT kkt;
  kkt.layout = KKTLayout::of(model);
  kkt.rhs = global_rhs(model, mu, yd, y0);
  kkt.residual = global_residual(model, x, mu, yd, y0);
  kkt.jacobian = assemble_jacobian(model, x, mu, false);
  return kkt;
}

NewtonResult newton_solve(const SweModel& model, const Parameter& mu, const SpaceTimeVector& yd, const Vec& y0,
                          OcpSolution init, const NewtonOptions& options) {
  if (!(options.tol > 0.0)) throw InvalidArgument("newton_solve: tolerance must be positive");
  check_solution(model, init, "newton_solve");
  NewtonResult result;
  result.solution = std::move(init);
  result.rhs_norm = global_rhs(model, mu, yd, y0).norm();
  const double target = options.tol * std::max(1.0, result.rhs_norm);

  const auto layout = KKTLayout::of(model);
  const int nt = layout.num_steps;
  const int sd = layout.state_dim;
  const int cd = layout.control_dim;
  const Eigen::Index ny = layout.ny();
  const Eigen::Index nu = layout.nu();
  const double dt = model.config().dt();
  const auto& mask = model.state_mask();
  const Eigen::SimplicialLLT<SpMat> mass_u(model.control_mass(mu));
  if (mass_u.info() != Eigen::Success) throw SingularJacobian("newton_solve: control mass is not SPD");

  Vec x = result.solution.stacked();
  for (int it = 0;; ++it) {
    const Vec r = global_residual(model, result.solution, mu, yd, y0);
    result.trace.push_back(r.norm());
    if (result.trace.back() <= target) {
      result.iterations = it;
      return result;
    }
    if (it >= options.max_iter)
      throw NonConvergence("newton_solve: no convergence after " + std::to_string(it) + " iterations", result.trace);
    // Newton step on the condensed [y | z] system, then recover the control:
    //   du = Mu^{-1} r2 / (alpha dt) + E^T P dz / alpha.
    const SpMat jac = assemble_jacobian(model, result.solution, mu, true);
    Vec rc(2 * ny);
    rc.head(ny) = r.head(ny);
    rc.tail(ny) = r.tail(ny);
    for (int k = 0; k < nt; ++k) {
      auto seg = rc.segment(ny + Eigen::Index(k) * sd, cd);
      seg += r.segment(ny + Eigen::Index(k) * cd, cd) / mu.alpha;
      for (int i = 0; i < cd; ++i)
        if (mask[i]) seg[i] = r[ny + nu + Eigen::Index(k) * sd + i];
    }
    const auto t0 = std::chrono::steady_clock::now();
    const Vec dyz = SparseDirectSolver(jac).solve(rc);
    result.linear_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Vec dx(x.size());
    dx.head(ny) = dyz.head(ny);
    dx.tail(ny) = dyz.tail(ny);
    for (int k = 0; k < nt; ++k) {
      Vec dz = dyz.segment(ny + Eigen::Index(k) * sd, cd);
      for (int i = 0; i < cd; ++i)
        if (mask[i]) dz[i] = 0.0;
      dx.segment(ny + Eigen::Index(k) * cd, cd) =
          mass_u.solve(Vec(r.segment(ny + Eigen::Index(k) * cd, cd))) / (mu.alpha * dt) + dz / mu.alpha;
    }
    x -= dx;
    result.solution = OcpSolution::unstack(model, x);
  }
}

SpaceTimeVector forward_uncontrolled(const SweModel& model, const Parameter& mu, const Vec& seed,
                                     const SpaceTimeVector* forcing, double step_tol, int max_iter) {
  if (seed.size() != model.state_dim()) throw DimensionMismatch("forward_uncontrolled: seed length mismatch");
  const int nt = model.config().num_steps;
  if (forcing && (forcing->num_steps() != nt || forcing->spatial_dim() != model.control_dim()))
    throw DimensionMismatch("forward_uncontrolled: forcing has the wrong shape");
  const double dt = model.config().dt();
  const SpMat mass = model.state_mass(mu);
  const SpMat cop = model.control_operator(mu);
  const auto& mask = model.state_mask();

  SpaceTimeVector out(FieldKind::State, nt, model.state_dim());
  Vec prev = masked(model, seed);
  for (int k = 0; k < nt; ++k) {
    Vec y = prev;
    Vec rhs = mass * prev;
    if (forcing) rhs += dt * (cop * forcing->block(k));
    std::vector<double> trace;
    for (int it = 0;; ++it) {
      const Vec ym = masked(model, y);
      Vec r = mass * ym + dt * model.eval_state_operator(as_span(ym), mu) - rhs;
      for (int i = 0; i < model.state_dim(); ++i)
        if (mask[i]) r[i] = y[i];
      trace.push_back(r.norm());
      if (trace.back() <= step_tol) break;
      if (it >= max_iter)
        throw NonConvergence("forward_uncontrolled: step " + std::to_string(k + 1) + " did not converge", trace);
      SpMat jac = mass + dt * model.assemble_frechet_state(as_span(ym), mu);
      apply_dirichlet(jac, std::span<const char>(mask.data(), mask.size()));
      y -= SparseDirectSolver(jac).solve(r);
    }
    out.block(k) = y;
    prev = y;
  }
  return out;
}

NewtonResult solve_ocp(const SweModel& model, const Parameter& mu, const SpaceTimeVector& yd,
                       const NewtonOptions& options) {
  const Vec y0 = model.initial_state();
  OcpSolution init = OcpSolution::zeros(model);
  init.y = forward_uncontrolled(model, mu, y0);
  return newton_solve(model, mu, yd, y0, std::move(init), options);
}

InfSupResult infsup_diagnostic(const Mat& b, const Mat& norm_x, const Mat& norm_z, int max_dim) {
  if (b.rows() > max_dim || b.cols() > max_dim)
    throw InvalidArgument("infsup_diagnostic: problem exceeds the dense size cap");
  if (norm_x.rows() != b.cols() || norm_x.cols() != b.cols() || norm_z.rows() != b.rows() ||
      norm_z.cols() != b.rows())
    throw DimensionMismatch("infsup_diagnostic: norm matrices do not match B");
  const Eigen::LLT<Mat> lx(norm_x);
  const Eigen::LLT<Mat> lz(norm_z);
  if (lx.info() != Eigen::Success || lz.info() != Eigen::Success)
    throw InvalidArgument("infsup_diagnostic: norm matrices must be SPD");
  // W = Lz^{-1} B Lx^{-T}
  Mat w = lz.matrixL().solve(b);
  w = lx.matrixL().solve(w.transpose()).transpose();
  InfSupResult res;
  if (b.rows() > b.cols()) {
    res.beta = 0.0;
  } else {
    const Eigen::BDCSVD<Mat> svd(w);
    res.beta = svd.singularValues().minCoeff();
  }
  res.stable = res.beta > 1e-12 * std::max(1.0, w.norm());
  return res;
}

}  // namespace stpod
