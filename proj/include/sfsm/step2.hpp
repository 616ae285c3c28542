#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "sfsm/execution.hpp"
#include "sfsm/geometry.hpp"
#include "sfsm/inverse_depth.hpp"
#include "sfsm/optimizer.hpp"
#include "sfsm/step1.hpp"
#include "sfsm/tracks.hpp"

namespace sfsm {

/// Landmarks whose inverse depth falls below this are flagged after step 2
/// and dropped before step 3.
inline constexpr double kMinInverseDepth = 1e-8;

struct Step2Config {
  double nominal_inverse_depth = 0.01;
  InverseDepthModel depth;
  Eigen::Matrix2d measurement_covariance = Eigen::Matrix2d::Identity();  // px^2
};

/// Disparity between the measured pixel and the first-order projection of the
/// reference ray, with rotation held fixed. Throws DegenerateDepth when the
/// projected depth is <= 1e-9.
Vec2 step2_residual(const Vec3& translation, double depth_parameter, const RotationVector& rotation,
                    const NormalizedPoint& reference, const PixelPoint& measured, const CameraModel& cam,
                    const InverseDepthModel& depth);

/// Blocks: rotation vector (3, constant), translation (3), depth parameter (1).
class Step2Residual final : public ResidualFunction {
 public:
  Step2Residual(NormalizedPoint reference, PixelPoint measured, const CameraModel& cam, InverseDepthModel depth)
      : reference_(reference), measured_(measured), cam_(cam), depth_(depth) {}
  int dimension() const override { return 2; }
  bool evaluate(std::span<const double* const> params, double* residual,
                std::span<double* const> jacobians) const override;

 private:
  NormalizedPoint reference_;
  PixelPoint measured_;
  CameraModel cam_;
  InverseDepthModel depth_;
};

struct Step2Problem {
  Problem problem;
  std::vector<BlockId> rotations;     // entry k is frame k + 1
  std::vector<BlockId> translations;  // entry k is frame k + 1
  std::vector<BlockId> depths;        // one per landmark
  std::vector<std::size_t> landmark_tracks;
  InverseDepthModel depth_model;
};

/// Translations start at rbar / wbar, every inverse depth at wbar.
Step2Problem init_step2(const SmallMotionEstimate& est, const FeatureTracks& tracks, const Step2Config& cfg);

struct Step2Solution {
  std::vector<Vec3> translations;  // entry k is frame k + 1
  std::vector<double> inverse_depths;
  std::vector<double> depth_parameters;
  std::vector<std::size_t> landmark_tracks;
  SolveReport report;
  double initial_rms_px = 0.0;
  double final_rms_px = 0.0;
  /// Non-positive inverse depths seen over all accepted iterates.
  int cheirality_violations = 0;
  /// Landmarks (indices into landmark_tracks) below kMinInverseDepth.
  std::vector<std::size_t> extreme_landmarks;
};

/// Throws Step2Failure when the solver diverges.
Step2Solution solve_step2(Step2Problem& problem, const LmConfig& lm, Execution exec = Execution::parallel);

/// sqrt(sum ||r||^2 / #residual blocks) of the raw residuals, in pixels.
double rms_residual_px(const Problem& problem);

}  // namespace sfsm
