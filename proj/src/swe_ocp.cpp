#include "stpod/swe_ocp.hpp"

#include <cmath>

#include "stpod/errors.hpp"
#include "stpod/hf_solver.hpp"

namespace stpod {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

constexpr int idx(int i, int j, int k) { return 9 * i + 3 * j + k; }

SpMat block_matrix(int rows, int cols, std::initializer_list<std::tuple<int, int, const SpMat*, double>> blocks,
                   int n) {
  Triplets t;
  for (const auto& [bi, bj, m, s] : blocks)
    for (int k = 0; k < m->outerSize(); ++k)
      for (SpMat::InnerIterator it(*m, k); it; ++it) t.emplace_back(bi * n + it.row(), bj * n + it.col(), s * it.value());
  SpMat out(rows, cols);
  out.setFromTriplets(t.begin(), t.end());
  out.makeCompressed();
  return out;
}

void zero_rows(SpMat& m, const std::vector<char>& mask) {
  m.prune([&](Eigen::Index r, Eigen::Index, double) { return !mask[r]; });
}

}  // namespace

bool ParameterBox::contains(const Parameter& mu) const {
  const std::array<double, 4> v{mu.mu1, mu.mu2, mu.mu3, mu.mu4};
  for (int i = 0; i < 4; ++i)
    if (v[i] < lower[i] || v[i] > upper[i]) return false;
  return mu.alpha > 0.0 && mu.alpha <= 1.0;
}

double default_initial_height(double x1, double x2) {
  return 0.2 * (1.0 + 5.0 * std::exp(-(x1 - 5.0) * (x1 - 5.0) - (x2 - 5.0) * (x2 - 5.0) + 1.0));
}

double default_desired_seed_height(double x1, double x2) {
  return 2.0 * std::exp(-(x1 - 5.0) * (x1 - 5.0) - (x2 - 5.0) * (x2 - 5.0) + 1.0);
}

SWEConfig::SWEConfig() : initial_height(default_initial_height), desired_seed_height(default_desired_seed_height) {}

QuadraticTensor QuadraticTensor::build(const Mesh& mesh) {
  QuadraticTensor qt;
  qt.values.resize(mesh.num_triangles());
  for (int e = 0; e < mesh.num_triangles(); ++e) {
    const auto el = p1_element(mesh, e);
    auto& v = qt.values[e];
    v.fill(0.0);
    const double w = el.area / 3.0;
    for (const auto& lam : kMidpointLambda) {
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          for (int k = 0; k < 3; ++k) {
            const double li = w * lam[i];
            v[0 * 27 + idx(i, j, k)] += li * lam[j] * el.dx[k];
            v[1 * 27 + idx(i, j, k)] += li * lam[j] * el.dy[k];
            v[2 * 27 + idx(i, j, k)] += li * (lam[k] * el.dx[j] + lam[j] * el.dx[k]);
            v[3 * 27 + idx(i, j, k)] += li * (lam[k] * el.dy[j] + lam[j] * el.dy[k]);
          }
    }
  }
  return qt;
}

SweModel::SweModel(const FEWorkspace& ws, SWEConfig config)
    : ws_(&ws), config_(std::move(config)), n_(ws.n()), tensor_(QuadraticTensor::build(ws.mesh)) {
  if (config_.num_steps < 1 || !(config_.final_time > 0.0))
    throw InvalidArgument("SweModel: need at least one time step and a positive final time");
  state_mask_.assign(3 * n_, 0);
  for (int i = 0; i < 2 * n_; ++i) state_mask_[i] = ws.spaces.dirichlet_mask[i];

  const auto& b = ws.blocks;
  const int sd = 3 * n_;
  const int cd = 2 * n_;
  pieces_.visc_x = block_matrix(sd, sd, {{0, 0, &b.kx, 1.0}, {1, 1, &b.kx, 1.0}}, n_);
  pieces_.visc_y = block_matrix(sd, sd, {{0, 0, &b.ky, 1.0}, {1, 1, &b.ky, 1.0}}, n_);
  pieces_.grad_x = block_matrix(sd, sd, {{0, 2, &b.dx, 1.0}}, n_);
  pieces_.grad_y = block_matrix(sd, sd, {{1, 2, &b.dy, 1.0}}, n_);
  for (SpMat* m : {&pieces_.visc_x, &pieces_.visc_y, &pieces_.grad_x, &pieces_.grad_y}) zero_rows(*m, state_mask_);
  state_mass0_ = block_matrix(sd, sd, {{0, 0, &b.mass_scalar, 1.0}, {1, 1, &b.mass_scalar, 1.0}, {2, 2, &b.mass_scalar, 1.0}}, n_);
  control_mass0_ = block_matrix(cd, cd, {{0, 0, &b.mass_scalar, 1.0}, {1, 1, &b.mass_scalar, 1.0}}, n_);
  control_op0_ = block_matrix(sd, cd, {{0, 0, &b.mass_scalar, 1.0}, {1, 1, &b.mass_scalar, 1.0}}, n_);
  zero_rows(control_op0_, state_mask_);

  // Pattern covering every local 9x9 coupling.
  const auto& mesh = ws.mesh;
  Triplets t;
  t.reserve(81 * mesh.triangles.size());
  for (const auto& tri : mesh.triangles)
    for (int r = 0; r < 9; ++r)
      for (int c = 0; c < 9; ++c) t.emplace_back((r / 3) * n_ + tri[r % 3], (c / 3) * n_ + tri[c % 3], 0.0);
  pattern_.resize(sd, sd);
  pattern_.setFromTriplets(t.begin(), t.end());
  pattern_.makeCompressed();
  slots_.resize(mesh.num_triangles());
  for (int e = 0; e < mesh.num_triangles(); ++e) {
    const auto& tri = mesh.triangles[e];
    for (int r = 0; r < 9; ++r)
      for (int c = 0; c < 9; ++c) {
        const int row = (r / 3) * n_ + tri[r % 3];
        const int col = (c / 3) * n_ + tri[c % 3];
        const int* begin = pattern_.innerIndexPtr() + pattern_.outerIndexPtr()[col];
        const int* end = pattern_.innerIndexPtr() + pattern_.outerIndexPtr()[col + 1];
        slots_[e][9 * r + c] = static_cast<int>(std::lower_bound(begin, end, row) - pattern_.innerIndexPtr());
      }
  }
}

std::array<double, 4> SweModel::coefficients(const Parameter& mu) const {
  return {mu.mu2, mu.mu2 * mu.mu4, 1.0, mu.mu4};
}

void SweModel::check_state(std::span<const double> y, const char* who) const {
  if (static_cast<int>(y.size()) != state_dim())
    throw DimensionMismatch(std::string(who) + ": vector length must be 3*num_nodes");
}

SpMat SweModel::state_mass(const Parameter& mu) const { return mu.mu4 * state_mass0_; }
SpMat SweModel::control_mass(const Parameter& mu) const { return mu.mu4 * control_mass0_; }
SpMat SweModel::observation_mass(const Parameter& mu) const { return mu.mu4 * state_mass0_; }
SpMat SweModel::control_operator(const Parameter& mu) const { return mu.mu4 * control_op0_; }

SpMat SweModel::linear_operator(const Parameter& mu) const {
  const double g = config_.gravity;
  SpMat out = (mu.mu1 / mu.mu4) * pieces_.visc_x + (mu.mu1 * mu.mu4) * pieces_.visc_y + g * pieces_.grad_x +
              (g * mu.mu4) * pieces_.grad_y;
  out.makeCompressed();
  return out;
}

template <class Fn>
void SweModel::for_each_element(std::span<const double> x, Fn&& fn) const {
  const auto& mesh = ws_->mesh;
  std::array<double, 9> local{};
  for (int e = 0; e < mesh.num_triangles(); ++e) {
    const auto& tri = mesh.triangles[e];
    for (int f = 0; f < 3; ++f)
      for (int a = 0; a < 3; ++a) local[3 * f + a] = x[f * n_ + tri[a]];
    fn(e, local);
  }
}

// Visits every nonzero tensor entry (r, a, b, value) of element e, where r
// is the local test dof and a, b the local dofs of the two arguments.
template <class Visit>
static void visit_tensor(const std::array<double, 4 * 27>& v, const std::array<double, 4>& coef, Visit&& visit) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        const double m0 = coef[0] * v[0 * 27 + idx(i, j, k)];
        const double m1 = coef[1] * v[1 * 27 + idx(i, j, k)];
        for (int c = 0; c < 2; ++c) {
          visit(3 * c + i, 0 + j, 3 * c + k, m0);
          visit(3 * c + i, 3 + j, 3 * c + k, m1);
        }
        visit(6 + i, 6 + j, 0 + k, coef[2] * v[2 * 27 + idx(i, j, k)]);
        visit(6 + i, 6 + j, 3 + k, coef[3] * v[3 * 27 + idx(i, j, k)]);
      }
}

Vec SweModel::eval_nonlinear(std::span<const double> y, const Parameter& mu) const {
  check_state(y, "eval_nonlinear");
  const auto coef = coefficients(mu);
  const auto& mesh = ws_->mesh;
  Vec out = Vec::Zero(state_dim());
  for_each_element(y, [&](int e, const std::array<double, 9>& yl) {
    std::array<double, 9> rl{};
    visit_tensor(tensor_.values[e], coef, [&](int r, int a, int b, double val) { rl[r] += val * yl[a] * yl[b]; });
    const auto& tri = mesh.triangles[e];
    for (int r = 0; r < 9; ++r) out[(r / 3) * n_ + tri[r % 3]] += rl[r];
  });
  for (int i = 0; i < state_dim(); ++i)
    if (state_mask_[i]) out[i] = 0.0;
  return out;
}

Vec SweModel::eval_state_operator(std::span<const double> y, const Parameter& mu) const {
  check_state(y, "eval_state_operator");
  Eigen::Map<const Vec> ym(y.data(), state_dim());
  Vec out = linear_operator(mu) * ym;
  out += eval_nonlinear(y, mu);
  return out;
}

SpMat SweModel::scatter(const std::vector<std::array<double, 81>>& local) const {
  SpMat out = pattern_;
  double* values = out.valuePtr();
  for (std::size_t e = 0; e < local.size(); ++e)
    for (int s = 0; s < 81; ++s) values[slots_[e][s]] += local[e][s];
  return out;
}

SpMat SweModel::assemble_nonlinear_frechet(std::span<const double> y, const Parameter& mu) const {
  check_state(y, "assemble_nonlinear_frechet");
  const auto coef = coefficients(mu);
  std::vector<std::array<double, 81>> local(ws_->mesh.num_triangles());
  for_each_element(y, [&](int e, const std::array<double, 9>& yl) {
    auto& jl = local[e];
    jl.fill(0.0);
    visit_tensor(tensor_.values[e], coef, [&](int r, int a, int b, double val) {
      jl[9 * r + b] += val * yl[a];
      jl[9 * r + a] += val * yl[b];
    });
  });
  SpMat out = scatter(local);
  zero_rows(out, state_mask_);
  return out;
}

SpMat SweModel::assemble_frozen_operator(std::span<const double> y, const Parameter& mu) const {
  check_state(y, "assemble_frozen_operator");
  const auto coef = coefficients(mu);
  std::vector<std::array<double, 81>> local(ws_->mesh.num_triangles());
  for_each_element(y, [&](int e, const std::array<double, 9>& yl) {
    auto& jl = local[e];
    jl.fill(0.0);
    visit_tensor(tensor_.values[e], coef, [&](int r, int a, int b, double val) { jl[9 * r + b] += val * yl[a]; });
  });
  SpMat out = scatter(local);
  zero_rows(out, state_mask_);
  out += linear_operator(mu);
  out.makeCompressed();
  return out;
}

SpMat SweModel::assemble_frechet_state(std::span<const double> y, const Parameter& mu) const {
  SpMat out = linear_operator(mu) + assemble_nonlinear_frechet(y, mu);
  out.makeCompressed();
  return out;
}

SpMat SweModel::assemble_second_derivative(std::span<const double> z, const Parameter& mu) const {
  check_state(z, "assemble_second_derivative");
  const auto coef = coefficients(mu);
  Vec zm = Eigen::Map<const Vec>(z.data(), state_dim());
  for (int i = 0; i < state_dim(); ++i)
    if (state_mask_[i]) zm[i] = 0.0;
  std::vector<std::array<double, 81>> local(ws_->mesh.num_triangles());
  for_each_element(std::span<const double>(zm.data(), zm.size()), [&](int e, const std::array<double, 9>& zl) {
    auto& hl = local[e];
    hl.fill(0.0);
    visit_tensor(tensor_.values[e], coef, [&](int r, int a, int b, double val) {
      hl[9 * a + b] += val * zl[r];
      hl[9 * b + a] += val * zl[r];
    });
  });
  return scatter(local);
}

Vec SweModel::initial_state() const {
  Vec y = Vec::Zero(state_dim());
  y.segment(2 * n_, n_) = interpolate(ws_->mesh, config_.initial_height);
  return y;
}

Vec SweModel::desired_seed() const {
  Vec y = Vec::Zero(state_dim());
  y.segment(2 * n_, n_) = interpolate(ws_->mesh, config_.desired_seed_height);
  return y;
}

std::vector<double> SweModel::observation_weights() const {
  std::vector<double> w(config_.num_steps, config_.tracking == TrackingMode::Replicated ? 1.0 : 0.0);
  w.back() = 1.0;
  return w;
}

double cost_functional(const SweModel& model, const SpaceTimeVector& y, const SpaceTimeVector& u,
                       const SpaceTimeVector& yd, const Parameter& mu) {
  const int nt = model.config().num_steps;
  if (y.num_steps() != nt || u.num_steps() != nt || yd.num_steps() != nt || y.spatial_dim() != model.state_dim() ||
      yd.spatial_dim() != model.state_dim() || u.spatial_dim() != model.control_dim())
    throw DimensionMismatch("cost_functional: inconsistent space-time dimensions");
  const double dt = model.config().dt();
  const SpMat mobs = model.observation_mass(mu);
  const SpMat mu_mass = model.control_mass(mu);
  const auto w = model.observation_weights();
  double misfit = 0.0;
  double control = 0.0;
  for (int k = 0; k < nt; ++k) {
    const Vec e = y.block(k) - yd.block(k);
    misfit += w[k] * e.dot(mobs * e);
    control += u.block(k).dot(mu_mass * u.block(k));
  }
  return 0.5 * dt * misfit + 0.5 * mu.alpha * dt * control;
}

SpaceTimeVector generate_desired_state(const SweModel& model, const Parameter& mu) {
  const SpaceTimeVector traj = forward_uncontrolled(model, mu, model.desired_seed());
  const int nt = traj.num_steps();
  SpaceTimeVector yd(FieldKind::State, nt, model.state_dim());
  const Vec terminal = mu.mu3 * traj.block(nt - 1);
  for (int k = 0; k < nt; ++k) yd.block(k) = terminal;
  return yd;
}

}  // namespace stpod
