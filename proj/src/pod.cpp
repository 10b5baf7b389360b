#include "stpod/pod.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <optional>
#include <random>
#include <thread>

#include <Eigen/Eigenvalues>
#include <spdlog/spdlog.h>

#include "stpod/errors.hpp"

namespace stpod {

std::string_view variable_name(PodVariable var) {
  switch (var) {
    case PodVariable::Velocity: return "v";
    case PodVariable::Height: return "h";
    case PodVariable::Control: return "u";
    case PodVariable::AdjointVelocity: return "w";
    case PodVariable::AdjointHeight: return "q";
  }
  return "?";
}

std::string_view inner_product_name(InnerProductKind kind) { return kind == InnerProductKind::H1 ? "H1" : "L2"; }

InnerProductKind inner_product_of(PodVariable var) {
  return var == PodVariable::Velocity || var == PodVariable::AdjointVelocity ? InnerProductKind::H1
                                                                              : InnerProductKind::L2;
}

int variable_components(PodVariable var) {
  return var == PodVariable::Height || var == PodVariable::AdjointHeight ? 1 : 2;
}

Mat SpaceTimeInnerProduct::apply(const Mat& a) const {
  if (a.rows() != size()) throw DimensionMismatch("SpaceTimeInnerProduct: operand has the wrong length");
  const Eigen::Index n = spatial.rows();
  Mat out(a.rows(), a.cols());
  for (int k = 0; k < num_steps; ++k) out.middleRows(k * n, n) = dt * (spatial * a.middleRows(k * n, n));
  return out;
}

double SpaceTimeInnerProduct::dot(const Vec& a, const Vec& b) const { return a.dot(apply(b).col(0)); }

double SpaceTimeInnerProduct::norm(const Vec& a) const { return std::sqrt(std::max(0.0, dot(a, a))); }

SpMat spatial_gram(const FEWorkspace& ws, InnerProductKind kind, int components) {
  const auto& b = ws.blocks;
  SpMat scalar = b.mass_scalar;
  if (kind == InnerProductKind::H1) scalar += b.kx + b.ky;
  const int n = ws.n();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(scalar.nonZeros()) * components);
  for (int c = 0; c < components; ++c)
    for (int k = 0; k < scalar.outerSize(); ++k)
      for (SpMat::InnerIterator it(scalar, k); it; ++it) t.emplace_back(c * n + it.row(), c * n + it.col(), it.value());
  SpMat out(components * n, components * n);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

SpaceTimeInnerProduct variable_inner_product(const SweModel& model, PodVariable var) {
  return {spatial_gram(model.workspace(), inner_product_of(var), variable_components(var)), model.config().dt(),
          model.config().num_steps};
}

namespace {

// Offset and length of a variable's dofs inside one spatial block of its
// source space-time vector.
struct Slice {
  const SpaceTimeVector* (*pick)(const OcpSolution&);
  int offset;
  int length;
};

Slice slice_of(const SweModel& model, PodVariable var) {
  const int n = model.nodes();
  switch (var) {
    case PodVariable::Velocity: return {[](const OcpSolution& x) { return &x.y; }, 0, 2 * n};
    case PodVariable::Height: return {[](const OcpSolution& x) { return &x.y; }, 2 * n, n};
    case PodVariable::Control: return {[](const OcpSolution& x) { return &x.u; }, 0, 2 * n};
    case PodVariable::AdjointVelocity: return {[](const OcpSolution& x) { return &x.z; }, 0, 2 * n};
    case PodVariable::AdjointHeight: return {[](const OcpSolution& x) { return &x.z; }, 2 * n, n};
  }
  throw InvalidArgument("unknown POD variable");
}

}  // namespace

Vec extract_variable(const SweModel& model, const OcpSolution& x, PodVariable var) {
  const Slice s = slice_of(model, var);
  const SpaceTimeVector& src = *s.pick(x);
  const int nt = model.config().num_steps;
  if (src.num_steps() != nt) throw DimensionMismatch("extract_variable: step count mismatch");
  Vec out(Eigen::Index(nt) * s.length);
  for (int k = 0; k < nt; ++k) out.segment(Eigen::Index(k) * s.length, s.length) = src.block(k).segment(s.offset, s.length);
  return out;
}

void insert_variable(const SweModel& model, PodVariable var, const Vec& values, SpaceTimeVector& target) {
  const Slice s = slice_of(model, var);
  const int nt = model.config().num_steps;
  if (values.size() != Eigen::Index(nt) * s.length || target.num_steps() != nt)
    throw DimensionMismatch("insert_variable: length mismatch");
  for (int k = 0; k < nt; ++k)
    target.block(k).segment(s.offset, s.length) = values.segment(Eigen::Index(k) * s.length, s.length);
}

std::vector<Parameter> sample_parameters(int n, std::uint64_t seed, const ParameterSamplingBox& box) {
  if (n < 1) throw InvalidArgument("sample_parameters: n must be positive");
  std::mt19937_64 rng(seed);
  std::array<std::uniform_real_distribution<double>, 4> dist;
  for (int i = 0; i < 4; ++i)
    dist[i] = std::uniform_real_distribution<double>(box.box.lower[i], box.box.upper[i]);
  std::vector<Parameter> out(n);
  for (auto& mu : out) {
    mu.mu1 = dist[0](rng);
    mu.mu2 = dist[1](rng);
    mu.mu3 = dist[2](rng);
    mu.mu4 = dist[3](rng);
    mu.alpha = box.alpha;
  }
  return out;
}

SnapshotSet collect_snapshots(const SweModel& model, const std::vector<Parameter>& params,
                              const SnapshotOptions& options) {
  if (params.empty()) throw InvalidArgument("collect_snapshots: empty parameter list");
  const int count = static_cast<int>(params.size());
  std::vector<std::optional<NewtonResult>> results(count);
  std::atomic<int> next{0};
  std::mutex log_mutex;

  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        const auto yd = generate_desired_state(model, params[i]);
        results[i] = solve_ocp(model, params[i], yd, options.newton);
      } catch (const std::exception& e) {
        std::lock_guard lock(log_mutex);
        spdlog::warn("snapshot {} (mu = {}, {}, {}, {}) skipped: {}", i, params[i].mu1, params[i].mu2, params[i].mu3,
                     params[i].mu4, e.what());
      }
    }
  };
  const int workers = std::clamp(options.workers, 1, count);
  std::vector<std::jthread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  pool.clear();

  SnapshotSet out;
  std::vector<int> kept;
  for (int i = 0; i < count; ++i)
    if (results[i]) kept.push_back(i);
  if (kept.empty()) throw NonConvergence("collect_snapshots: no snapshot converged", {});
  for (PodVariable var : kPodVariables) {
    const Vec probe = extract_variable(model, results[kept[0]]->solution, var);
    Mat& m = out.of(var);
    m.resize(probe.size(), static_cast<Eigen::Index>(kept.size()));
    for (std::size_t j = 0; j < kept.size(); ++j)
      m.col(static_cast<Eigen::Index>(j)) = extract_variable(model, results[kept[j]]->solution, var);
  }
  for (int i : kept) {
    out.params.push_back(params[i]);
    out.traces.push_back(results[i]->trace);
    out.source_index.push_back(i);
  }
  return out;
}

Mat correlation_matrix(const Mat& snapshots, const SpaceTimeInnerProduct& ip) {
  if (snapshots.cols() == 0) throw InvalidArgument("correlation_matrix: no snapshots");
  if (snapshots.rows() != ip.size()) throw DimensionMismatch("correlation_matrix: inner product does not match");
  Mat c = snapshots.transpose() * ip.apply(snapshots);
  c /= static_cast<double>(snapshots.cols());
  return 0.5 * (c + c.transpose());
}

int numerical_rank(const Vec& eigenvalues, double rank_tol) {
  if (eigenvalues.size() == 0 || !(eigenvalues[0] > 0.0)) return 0;
  const double cut = rank_tol * eigenvalues[0];
  int r = 0;
  while (r < eigenvalues.size() && eigenvalues[r] > cut) ++r;
  return r;
}

VariableBasis pod_truncate(const Mat& correlation, const Mat& snapshots, int n, const SpaceTimeInnerProduct& ip,
                           const PodOptions& options) {
  const Eigen::Index m = correlation.rows();
  if (correlation.cols() != m || snapshots.cols() != m)
    throw DimensionMismatch("pod_truncate: correlation matrix and snapshots disagree");
  if (n < 1) throw InvalidArgument("pod_truncate: N must be positive");

  const Eigen::SelfAdjointEigenSolver<Mat> eig(correlation);
  if (eig.info() != Eigen::Success) throw InvalidArgument("pod_truncate: eigen-decomposition failed");
  VariableBasis out;
  out.eigenvalues = eig.eigenvalues().reverse();
  out.eigenvectors = eig.eigenvectors().rowwise().reverse();
  out.rank = numerical_rank(out.eigenvalues, options.rank_tol);
  if (n > out.rank)
    throw RankDeficit("pod_truncate: N = " + std::to_string(n) + " exceeds the numerical rank " +
                          std::to_string(out.rank),
                      out.rank);

  out.basis.resize(snapshots.rows(), n);
  for (int j = 0; j < n; ++j)
    out.basis.col(j) = snapshots * out.eigenvectors.col(j) / std::sqrt(static_cast<double>(m) * out.eigenvalues[j]);
  // The formula is orthonormal in exact arithmetic; small modes lose that
  // to rounding, so restore it without changing the leading directions.
  // Gram-Schmidt keeps span(chi_1..chi_j) for every j and the sign of each
  // leading direction.
  Mat orth = orthonormalize(out.basis, ip, 0.0);
  if (orth.cols() < n) throw RankDeficit("pod_truncate: modes are linearly dependent", static_cast<int>(orth.cols()));
  out.basis = std::move(orth);
  return out;
}

Mat orthonormalize(const Mat& columns, const SpaceTimeInnerProduct& ip, double drop_tol) {
  Mat q(columns.rows(), columns.cols());
  Eigen::Index kept = 0;
  for (Eigen::Index j = 0; j < columns.cols(); ++j) {
    Vec v = columns.col(j);
    const double original = ip.norm(v);
    if (!(original > 0.0)) continue;
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index i = 0; i < kept; ++i) {
        const Vec qi = q.col(i);
        v -= ip.dot(qi, v) * qi;
      }
    const double nv = ip.norm(v);
    if (nv <= drop_tol * original || !(nv > 0.0)) continue;
    q.col(kept++) = v / nv;
  }
  q.conservativeResize(Eigen::NoChange, kept);
  return q;
}

Mat AggregatedBasis::state_basis(const SweModel& model) const {
  const int nt = model.config().num_steps;
  const int n = model.nodes();
  const int sd = model.state_dim();
  if (velocity.rows() != Eigen::Index(nt) * 2 * n || height.rows() != Eigen::Index(nt) * n)
    throw DimensionMismatch("AggregatedBasis::state_basis: basis does not match the model");
  Mat z = Mat::Zero(Eigen::Index(nt) * sd, state_columns());
  for (int k = 0; k < nt; ++k) {
    z.block(Eigen::Index(k) * sd, 0, 2 * n, velocity.cols()) = velocity.middleRows(Eigen::Index(k) * 2 * n, 2 * n);
    z.block(Eigen::Index(k) * sd + 2 * n, velocity.cols(), n, height.cols()) =
        height.middleRows(Eigen::Index(k) * n, n);
  }
  return z;
}

AggregatedBasis aggregate(const SweModel& model, const std::array<Mat, 5>& bases, int n) {
  if (n < 1) throw InvalidArgument("aggregate: N must be positive");
  for (PodVariable var : kPodVariables)
    if (bases[static_cast<int>(var)].cols() < n)
      throw DimensionMismatch("aggregate: basis for " + std::string(variable_name(var)) + " has fewer than N columns");
  auto pair = [&](PodVariable a, PodVariable b) {
    const Mat& ba = bases[static_cast<int>(a)];
    const Mat& bb = bases[static_cast<int>(b)];
    if (ba.rows() != bb.rows()) throw DimensionMismatch("aggregate: state and adjoint bases differ in length");
    Mat joined(ba.rows(), 2 * n);
    joined << ba.leftCols(n), bb.leftCols(n);
    return orthonormalize(joined, variable_inner_product(model, a));
  };
  AggregatedBasis out;
  out.velocity = pair(PodVariable::Velocity, PodVariable::AdjointVelocity);
  out.height = pair(PodVariable::Height, PodVariable::AdjointHeight);
  out.control = orthonormalize(bases[static_cast<int>(PodVariable::Control)].leftCols(n),
                               variable_inner_product(model, PodVariable::Control));
  return out;
}

PodResult compute_pod(const SweModel& model, const SnapshotSet& snapshots, int max_n, const PodOptions& options) {
  PodResult out;
  for (PodVariable var : kPodVariables) {
    const auto ip = variable_inner_product(model, var);
    const Mat& s = snapshots.of(var);
    const Mat c = correlation_matrix(s, ip);
    // Rank first, then build as many modes as are available.
    const Eigen::SelfAdjointEigenSolver<Mat> eig(c, Eigen::EigenvaluesOnly);
    const int rank = numerical_rank(eig.eigenvalues().reverse(), options.rank_tol);
    const int n = std::min(max_n, rank);
    if (n < 1) throw RankDeficit("compute_pod: variable " + std::string(variable_name(var)) + " has zero rank", 0);
    out.variables[static_cast<int>(var)] = pod_truncate(c, s, n, ip, options);
  }
  return out;
}

}  // namespace stpod
