#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "sfsm/execution.hpp"
#include "sfsm/geometry.hpp"
#include "sfsm/step1.hpp"

namespace sfsm::kernels {

struct Hypothesis {
  SmallMotion motion;
  bool valid = false;
};

struct HypothesisScore {
  int inliers = 0;
  double sum_sq_px = 0.0;  // over inliers only

  double rms_px() const { return inliers > 0 ? std::sqrt(sum_sq_px / inliers) : 0.0; }
};

/// Reprojection error of one correspondence under a model, in pixels; negative when degenerate.
double reprojection_error_px(const SmallMotion& m, const NormalizedPoint& x0, const PixelPoint& measured,
                             const CameraModel& cam);

/// Inlier count and squared error per hypothesis. Each hypothesis is scored
/// by one thread in correspondence order, so both paths agree bit for bit.
std::vector<HypothesisScore> score_hypotheses_serial(std::span<const Hypothesis> hypotheses,
                                                     std::span<const NormalizedPoint> reference,
                                                     std::span<const PixelPoint> measured,
                                                     const CameraModel& cam, double threshold_px);

std::vector<HypothesisScore> score_hypotheses_parallel(std::span<const Hypothesis> hypotheses,
                                                       std::span<const NormalizedPoint> reference,
                                                       std::span<const PixelPoint> measured,
                                                       const CameraModel& cam, double threshold_px);

inline std::vector<HypothesisScore> score_hypotheses(std::span<const Hypothesis> hypotheses,
                                                     std::span<const NormalizedPoint> reference,
                                                     std::span<const PixelPoint> measured,
                                                     const CameraModel& cam, double threshold_px,
                                                     Execution exec) {
  return exec == Execution::serial
             ? score_hypotheses_serial(hypotheses, reference, measured, cam, threshold_px)
             : score_hypotheses_parallel(hypotheses, reference, measured, cam, threshold_px);
}

}  // namespace sfsm::kernels

#include "sfsm/optimizer.hpp"

namespace sfsm::kernels {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Raw (unwhitened) residual and tangent Jacobians of one residual block.
struct BlockEvaluation {
  Eigen::VectorXd residual;
  std::vector<RowMatrix> jacobians;
  bool ok = false;
};

/// Sizes the storage for a problem; reused across iterations.
std::vector<BlockEvaluation> make_evaluation_storage(const Problem& problem);

/// Evaluates every residual block into its own slot. Returns false if any
/// block is out of domain.
bool evaluate_residuals_serial(const Problem& problem, bool with_jacobians, std::vector<BlockEvaluation>& out);
bool evaluate_residuals_parallel(const Problem& problem, bool with_jacobians, std::vector<BlockEvaluation>& out);

inline bool evaluate_residuals(const Problem& problem, bool with_jacobians, std::vector<BlockEvaluation>& out,
                               Execution exec) {
  return exec == Execution::serial ? evaluate_residuals_serial(problem, with_jacobians, out)
                                   : evaluate_residuals_parallel(problem, with_jacobians, out);
}

}  // namespace sfsm::kernels
