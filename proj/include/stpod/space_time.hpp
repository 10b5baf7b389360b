#pragma once

#include <Eigen/Core>

#include "stpod/errors.hpp"

namespace stpod {

enum class FieldKind { State, Control, Adjoint };

/// N_t spatial dof blocks stored contiguously, block k holding the
/// coefficients at t_{k+1} (k = 0 .. N_t-1).
class SpaceTimeVector {
public:
  SpaceTimeVector() = default;
  SpaceTimeVector(FieldKind kind, int num_steps, int spatial_dim)
      : kind_(kind), num_steps_(num_steps), spatial_dim_(spatial_dim),
        data_(Eigen::VectorXd::Zero(Eigen::Index(num_steps) * spatial_dim)) {}
  SpaceTimeVector(FieldKind kind, int num_steps, Eigen::VectorXd data)
      : kind_(kind), num_steps_(num_steps), data_(std::move(data)) {
    if (num_steps <= 0 || data_.size() % num_steps != 0)
      throw DimensionMismatch("SpaceTimeVector: data length is not a multiple of the step count");
    spatial_dim_ = static_cast<int>(data_.size() / num_steps);
  }

  FieldKind kind() const { return kind_; }
  int num_steps() const { return num_steps_; }
  int spatial_dim() const { return spatial_dim_; }
  Eigen::Index size() const { return data_.size(); }

  auto block(int k) { return data_.segment(Eigen::Index(k) * spatial_dim_, spatial_dim_); }
  auto block(int k) const { return data_.segment(Eigen::Index(k) * spatial_dim_, spatial_dim_); }

  Eigen::VectorXd& data() { return data_; }
  const Eigen::VectorXd& data() const { return data_; }

private:
  FieldKind kind_ = FieldKind::State;
  int num_steps_ = 0;
  int spatial_dim_ = 0;
  Eigen::VectorXd data_;
};

}  // namespace stpod
