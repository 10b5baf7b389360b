#pragma once

// Independent dense references for the unit and acceptance tests. Every
// integral here uses closed-form P1 formulas on each triangle,
//   int phi_i phi_j     = A (1 + delta_ij) / 12,
//   int phi_i d(phi_j)  = A / 3 * d(phi_j),
// with gradients from the vertex coordinates, so nothing is shared with the
// quadrature-based library assembly beyond the mesh topology.

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "stpod/hf_solver.hpp"

namespace oracle {

using stpod::Mat;
using stpod::Vec;

struct Triangle {
  std::array<int, 3> nodes;
  double area;
  std::array<double, 3> gx;  // d(lambda_a)/dx1
  std::array<double, 3> gy;  // d(lambda_a)/dx2
};

inline Triangle triangle(const stpod::Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  const auto& p0 = mesh.vertices[tri[0]];
  const auto& p1 = mesh.vertices[tri[1]];
  const auto& p2 = mesh.vertices[tri[2]];
  const double det = (p1.x() - p0.x()) * (p2.y() - p0.y()) - (p2.x() - p0.x()) * (p1.y() - p0.y());
  Triangle out{tri, 0.5 * std::abs(det), {}, {}};
  // lambda_a = (a_a + b_a x + c_a y) / det, cyclic (a, a+1, a+2).
  const std::array<const Eigen::Vector2d*, 3> p{&p0, &p1, &p2};
  for (int a = 0; a < 3; ++a) {
    const auto& q = *p[(a + 1) % 3];
    const auto& r = *p[(a + 2) % 3];
    out.gx[a] = (q.y() - r.y()) / det;
    out.gy[a] = (r.x() - q.x()) / det;
  }
  return out;
}

inline double mass_entry(const Triangle& t, int a, int b) { return t.area * (a == b ? 2.0 : 1.0) / 12.0; }

struct ScalarBlocks {
  Mat mass, kx, ky, dx, dy;
};

inline ScalarBlocks scalar_blocks(const stpod::Mesh& mesh) {
  const int n = mesh.num_nodes();
  ScalarBlocks b{Mat::Zero(n, n), Mat::Zero(n, n), Mat::Zero(n, n), Mat::Zero(n, n), Mat::Zero(n, n)};
  for (int e = 0; e < mesh.num_triangles(); ++e) {
    const Triangle t = triangle(mesh, e);
    for (int a = 0; a < 3; ++a)
      for (int c = 0; c < 3; ++c) {
        const int i = t.nodes[a], j = t.nodes[c];
        b.mass(i, j) += mass_entry(t, a, c);
        b.kx(i, j) += t.area * t.gx[a] * t.gx[c];
        b.ky(i, j) += t.area * t.gy[a] * t.gy[c];
        b.dx(i, j) += t.area / 3.0 * t.gx[c];
        b.dy(i, j) += t.area / 3.0 * t.gy[c];
      }
  }
  return b;
}

/// Dense model of the pulled-back shallow-water operator on the state
/// layout [v1 | v2 | h]: E(y) = L y + T(y, y) with T[i](a, b) the bilinear
/// quadratic part. Momentum rows carry mu2 (v . grad~) v_c, continuity rows
/// div~(h v); all rows of boundary velocity dofs are zero.
struct DenseSwe {
  int n = 0;
  std::vector<char> mask;
  Mat mass;     // state mass, mu4 included
  Mat cmass;    // control mass
  Mat cop;      // control operator
  Mat linear;   // E_lin
  std::vector<Mat> tensor;  // tensor[i](a, b)

  Vec quadratic(const Vec& a, const Vec& b) const {
    Vec out(3 * n);
    for (int i = 0; i < 3 * n; ++i) out[i] = a.dot(tensor[i] * b);
    return out;
  }
  Vec apply(const Vec& y) const { return linear * y + quadratic(y, y); }
  Mat frechet(const Vec& y) const {
    Mat d = linear;
    for (int i = 0; i < 3 * n; ++i) d.row(i) += (tensor[i] * y).transpose() + y.transpose() * tensor[i];
    return d;
  }
  /// Gradient in y of z . E(y) differentiated once more: sum_i z_i (T_i + T_i^T).
  Mat hessian(const Vec& z) const {
    Mat h = Mat::Zero(3 * n, 3 * n);
    for (int i = 0; i < 3 * n; ++i) h += z[i] * (tensor[i] + tensor[i].transpose());
    return h;
  }
  Vec masked(Vec v) const {
    for (int i = 0; i < 3 * n; ++i)
      if (mask[i]) v[i] = 0.0;
    return v;
  }
};

inline DenseSwe dense_swe(const stpod::Mesh& mesh, const stpod::Parameter& mu, double g) {
  const int n = mesh.num_nodes();
  const ScalarBlocks s = scalar_blocks(mesh);
  DenseSwe out;
  out.n = n;
  out.mask.assign(3 * n, 0);
  for (int node : mesh.boundary_nodes) out.mask[node] = out.mask[n + node] = 1;
  out.mass = Mat::Zero(3 * n, 3 * n);
  out.cmass = Mat::Zero(2 * n, 2 * n);
  out.cop = Mat::Zero(3 * n, 2 * n);
  out.linear = Mat::Zero(3 * n, 3 * n);
  const Mat visc = mu.mu1 / mu.mu4 * s.kx + mu.mu1 * mu.mu4 * s.ky;
  for (int c = 0; c < 3; ++c) out.mass.block(c * n, c * n, n, n) = mu.mu4 * s.mass;
  for (int c = 0; c < 2; ++c) {
    out.cmass.block(c * n, c * n, n, n) = mu.mu4 * s.mass;
    out.cop.block(c * n, c * n, n, n) = mu.mu4 * s.mass;
    out.linear.block(c * n, c * n, n, n) = visc;
  }
  out.linear.block(0, 2 * n, n, n) = g * s.dx;
  out.linear.block(n, 2 * n, n, n) = g * mu.mu4 * s.dy;

  out.tensor.assign(3 * n, Mat::Zero(3 * n, 3 * n));
  for (int e = 0; e < mesh.num_triangles(); ++e) {
    const Triangle t = triangle(mesh, e);
    for (int a = 0; a < 3; ++a)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) {
          const int ia = t.nodes[a], ij = t.nodes[j], ik = t.nodes[k];
          const double mij = mass_entry(t, a, j);
          const double mik = mass_entry(t, a, k);
          // mu2 int phi_a (v1 d1 v_c + mu4 v2 d2 v_c), v = phi_j, v_c = phi_k
          for (int c = 0; c < 2; ++c) {
            out.tensor[c * n + ia](ij, c * n + ik) += mu.mu2 * mij * t.gx[k];
            out.tensor[c * n + ia](n + ij, c * n + ik) += mu.mu2 * mu.mu4 * mij * t.gy[k];
          }
          // int phi_a (d1(h v1) + mu4 d2(h v2)), h = phi_j, v = phi_k
          const double d1 = mij * t.gx[k] + mik * t.gx[j];
          const double d2 = mij * t.gy[k] + mik * t.gy[j];
          out.tensor[2 * n + ia](2 * n + ij, ik) += d1;
          out.tensor[2 * n + ia](2 * n + ij, n + ik) += mu.mu4 * d2;
        }
  }
  for (int i = 0; i < 3 * n; ++i)
    if (out.mask[i]) {
      out.linear.row(i).setZero();
      out.tensor[i].setZero();
      out.cop.row(i).setZero();
    }
  return out;
}

/// Term-by-term KKT residual and Jacobian in [y | u | z] order, built
/// from the dense operator. Boundary velocity dofs read y_b and z_b in the
/// state and adjoint rows and enter no other equation.
struct DenseKkt {
  Vec residual;
  Mat jacobian;
};

inline DenseKkt dense_kkt(const DenseSwe& m, int nt, double dt, const std::vector<double>& weights,
                          const stpod::Parameter& mu, const Vec& y, const Vec& u, const Vec& z, const Vec& yd,
                          const Vec& y0) {
  const int sd = 3 * m.n, cd = 2 * m.n;
  const int ny = nt * sd, nu = nt * cd;
  const int oy = 0, ou = ny, oz = ny + nu;
  DenseKkt out{Vec::Zero(2 * ny + nu), Mat::Zero(2 * ny + nu, 2 * ny + nu)};
  Mat p = Mat::Identity(sd, sd);
  for (int i = 0; i < sd; ++i)
    if (m.mask[i]) p(i, i) = 0.0;
  auto blk = [&](const Vec& v, int k, int d) { return Vec(v.segment(k * d, d)); };
  for (int k = 0; k < nt; ++k) {
    const Vec yk = m.masked(blk(y, k, sd));
    const Vec zk = m.masked(blk(z, k, sd));
    const Vec uk = blk(u, k, cd);
    const Mat d = m.frechet(yk);
    // adjoint rows
    Vec adj = dt * weights[k] * m.mass * (yk - blk(yd, k, sd)) + (m.mass + dt * d).transpose() * zk;
    if (k + 1 < nt) adj -= m.mass * m.masked(blk(z, k + 1, sd));
    Mat ayy = (dt * weights[k] * m.mass + dt * m.hessian(zk)) * p;
    Mat ayz = (m.mass + dt * d).transpose() * p;
    // state rows
    Vec st = m.mass * yk + dt * m.apply(yk) - dt * m.cop * uk - m.mass * (k == 0 ? m.masked(y0) : m.masked(blk(y, k - 1, sd)));
    Mat syy = (m.mass + dt * d) * p;
    for (int i = 0; i < sd; ++i)
      if (m.mask[i]) {
        adj[i] = z[k * sd + i];
        st[i] = y[k * sd + i];
        ayy.row(i).setZero();
        ayz.row(i).setZero();
        ayz(i, i) = 1.0;
        syy.row(i).setZero();
        syy(i, i) = 1.0;
      }
    out.residual.segment(oy + k * sd, sd) = adj;
    out.residual.segment(ou + k * cd, cd) = mu.alpha * dt * m.cmass * uk - dt * m.cop.transpose() * zk;
    out.residual.segment(oz + k * sd, sd) = st;

    out.jacobian.block(oy + k * sd, oy + k * sd, sd, sd) = ayy;
    out.jacobian.block(oy + k * sd, oz + k * sd, sd, sd) = ayz;
    out.jacobian.block(ou + k * cd, ou + k * cd, cd, cd) = mu.alpha * dt * m.cmass;
    out.jacobian.block(ou + k * cd, oz + k * sd, cd, sd) = -dt * m.cop.transpose() * p;
    out.jacobian.block(oz + k * sd, oy + k * sd, sd, sd) = syy;
    out.jacobian.block(oz + k * sd, ou + k * cd, sd, cd) = -dt * m.cop;
    Mat lower = -m.mass * p;
    for (int i = 0; i < sd; ++i)
      if (m.mask[i]) lower.row(i).setZero();
    if (k + 1 < nt) out.jacobian.block(oy + k * sd, oz + (k + 1) * sd, sd, sd) = lower;
    if (k > 0) out.jacobian.block(oz + k * sd, oy + (k - 1) * sd, sd, sd) = lower;
  }
  return out;
}

inline Vec random_vector(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Vec v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline Mat dense(const stpod::SpMat& m) { return Mat(m); }

inline double max_rel_diff(const Mat& a, const Mat& b) {
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace oracle
