#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sfsm/execution.hpp"
#include "sfsm/geometry.hpp"

namespace sfsm {

enum class ParameterKind { euclidean, so3 };

struct BlockId {
  int index = -1;
  bool operator==(const BlockId&) const = default;
};

/// Values are stored in ambient form: Euclidean blocks as-is, SO3 blocks as
/// a column-major 3x3 rotation. Updates happen in the tangent space; SO3 uses
/// R <- R * exp(delta).
struct ParameterBlock {
  ParameterKind kind = ParameterKind::euclidean;
  std::vector<double> value;
  bool constant = false;
  /// Marginalized by the Schur complement (landmark-type block).
  bool eliminate = false;
  /// Euclidean entries are projected onto [lower_bound, inf) after each update.
  double lower_bound = -std::numeric_limits<double>::infinity();

  int tangent_dim() const { return kind == ParameterKind::so3 ? 3 : static_cast<int>(value.size()); }
};

/// A residual term. Jacobians are with respect to the tangent of each block
/// and are written row-major (dimension x tangent_dim); a null pointer means
/// that block's Jacobian is not requested. Returning false marks the point as
/// outside the function's domain (the optimizer rejects the step).
class ResidualFunction {
 public:
  virtual ~ResidualFunction() = default;
  virtual int dimension() const = 0;
  virtual bool evaluate(std::span<const double* const> params, double* residual,
                        std::span<double* const> jacobians) const = 0;
};

struct ResidualBlock {
  std::shared_ptr<const ResidualFunction> function;
  std::vector<BlockId> blocks;
  Eigen::MatrixXd sqrt_information;  // inverse Cholesky factor of the covariance
  bool robust = true;
};

class Problem {
 public:
  BlockId add_euclidean(std::span<const double> init, bool constant = false, bool eliminate = false);
  BlockId add_euclidean(const Eigen::VectorXd& init, bool constant = false, bool eliminate = false);
  BlockId add_so3(const Mat3& R, bool constant = false);

  /// covariance must be symmetric positive definite (dimension x dimension).
  void add_residual(std::shared_ptr<const ResidualFunction> fn, std::vector<BlockId> blocks,
                    const Eigen::MatrixXd& covariance, bool robust = true);

  const ParameterBlock& block(BlockId id) const { return blocks_.at(static_cast<std::size_t>(id.index)); }
  ParameterBlock& block(BlockId id) { return blocks_.at(static_cast<std::size_t>(id.index)); }
  const std::vector<ParameterBlock>& blocks() const { return blocks_; }
  const std::vector<ResidualBlock>& residuals() const { return residuals_; }

  Eigen::VectorXd vector(BlockId id) const;
  Mat3 rotation(BlockId id) const;
  void set_vector(BlockId id, const Eigen::VectorXd& v);
  void set_rotation(BlockId id, const Mat3& R);

  /// Applies a tangent-space increment to one block.
  void retract(BlockId id, std::span<const double> delta);

  /// Evaluates one residual block (whitening not applied).
  bool evaluate_residual(std::size_t r, double* residual, std::span<double* const> jacobians) const;

  /// Throws ValidationError if every block is constant or no residual exists.
  void validate() const;

 private:
  std::vector<ParameterBlock> blocks_;
  std::vector<ResidualBlock> residuals_;
};

struct LmConfig {
  int max_iterations = 100;
  double initial_damping = 1e-4;
  double damping_up = 10.0;
  double damping_down = 0.5;
  double max_damping = 1e16;
  double absolute_cost_tolerance = 1e-20;
  double relative_cost_tolerance = 1e-8;
  double gradient_tolerance = 1e-10;
  bool use_huber = true;
  double huber_threshold = 1.345;
  bool use_schur = true;
};

void validate(const LmConfig& cfg);

enum class Termination { converged_cost, converged_gradient, max_iterations, diverged };

std::string to_string(Termination t);
Termination termination_from_string(const std::string& s);

inline bool converged(Termination t) {
  return t == Termination::converged_cost || t == Termination::converged_gradient;
}

struct SolveReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  int accepted_steps = 0;
  Termination termination = Termination::max_iterations;
  std::vector<double> cost_trace;  // initial cost, then one entry per accepted step
  double final_gradient_norm = 0.0;  // infinity norm of J^T W r
};

/// Robust cost of a squared whitened norm s: s below the threshold, linear beyond.
double huber_cost(double s, double threshold);

/// Total cost at the problem's current values; nullopt if a residual is out of domain.
std::optional<double> total_cost(const Problem& problem, const LmConfig& cfg);

/// Called after every accepted step with the updated problem.
using IterationCallback = std::function<void(const Problem&)>;

/// Levenberg-Marquardt with Marquardt diagonal scaling. Throws
/// NumericalFailure on non-finite residuals or Jacobians, or when the initial
/// point is outside the residual domain.
SolveReport solve(Problem& problem, const LmConfig& cfg, Execution exec = Execution::parallel,
                  const IterationCallback& on_accept = {});

struct JacobianCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_residual = 0;
  int worst_block = -1;
  int checked_blocks = 0;
};

/// Compares analytic Jacobians with central differences taken along the
/// tangent (on-manifold for SO3). Relative error is per block:
/// ||J_analytic - J_fd||_F / max(||J_fd||_F, 1e-12).
JacobianCheckReport check_jacobians(const Problem& problem, double step = 1e-6);

}  // namespace sfsm
