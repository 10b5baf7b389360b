#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace stpod {

/// Operand sizes do not agree.
class DimensionMismatch : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class InvalidArgument : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Newton (or an inner step solve) ran out of iterations. Carries the
/// residual history so callers can report it.
class NonConvergence : public std::runtime_error {
public:
  NonConvergence(const std::string& what, std::vector<double> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const noexcept { return trace_; }

private:
  std::vector<double> trace_;
};

class SingularJacobian : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Requested POD size exceeds the numerical rank of the snapshot set.
class RankDeficit : public std::runtime_error {
public:
  RankDeficit(const std::string& what, int usable_rank)
      : std::runtime_error(what), usable_rank_(usable_rank) {}
  int usable_rank() const noexcept { return usable_rank_; }

private:
  int usable_rank_;
};

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class MissingArtifacts : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace stpod
