#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sfsm/execution.hpp"
#include "sfsm/geometry.hpp"
#include "sfsm/inverse_depth.hpp"
#include "sfsm/optimizer.hpp"
#include "sfsm/step1.hpp"
#include "sfsm/step2.hpp"
#include "sfsm/tracks.hpp"

namespace sfsm {

enum class LandmarkModel {
  azimuth_elevation,       // (omega, psi, phi), rho = softplus(omega) = 1 / ||y||
  anchored_inverse_depth,  // w = 1 / Z along the frame-0 measurement ray
};

std::string to_string(LandmarkModel m);

struct Step3Config {
  LandmarkModel landmark_model = LandmarkModel::azimuth_elevation;
  InverseDepthModel depth;
  Eigen::Matrix2d measurement_covariance = Eigen::Matrix2d::Identity();
  /// Covariance of the frame-0 direction prior; only used by the azimuth/elevation model.
  Eigen::Matrix2d prior_covariance = Eigen::Matrix2d::Identity();
  double min_inverse_depth = kMinInverseDepth;
};

/// p - <K (R m(psi, phi) + softplus(omega) r)>. Throws DegenerateDepth when
/// the projected depth is <= 1e-9.
Vec2 step3_residual(const Mat3& R, const Vec3& r, double omega, double psi, double phi, const PixelPoint& measured,
                    const CameraModel& cam, const SoftPlusParams& sp);

/// p0 - <K m(psi, phi)>.
Vec2 prior_residual(double psi, double phi, const PixelPoint& measured, const CameraModel& cam);

/// Blocks: rotation (SO3), translation (3), landmark (omega, psi, phi).
class AzElResidual final : public ResidualFunction {
 public:
  AzElResidual(PixelPoint measured, const CameraModel& cam, InverseDepthModel depth)
      : measured_(measured), cam_(cam), depth_(depth) {}
  int dimension() const override { return 2; }
  bool evaluate(std::span<const double* const> params, double* residual,
                std::span<double* const> jacobians) const override;

 private:
  PixelPoint measured_;
  CameraModel cam_;
  InverseDepthModel depth_;
};

/// Blocks: landmark (omega, psi, phi). The omega column of the Jacobian is zero.
class DirectionPriorResidual final : public ResidualFunction {
 public:
  DirectionPriorResidual(PixelPoint measured, const CameraModel& cam) : measured_(measured), cam_(cam) {}
  int dimension() const override { return 2; }
  bool evaluate(std::span<const double* const> params, double* residual,
                std::span<double* const> jacobians) const override;

 private:
  PixelPoint measured_;
  CameraModel cam_;
};

/// Blocks: rotation (SO3), translation (3), depth parameter (1); landmark
/// y = x0 / w with x0 the frame-0 measurement.
class AnchoredResidual final : public ResidualFunction {
 public:
  AnchoredResidual(NormalizedPoint reference, PixelPoint measured, const CameraModel& cam, InverseDepthModel depth)
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

struct Step3Problem {
  Problem problem;
  std::vector<BlockId> rotations;     // frames 0..n; frame 0 constant
  std::vector<BlockId> translations;  // frames 0..n; frame 0 constant
  std::vector<BlockId> landmarks;
  std::vector<std::size_t> landmark_tracks;
  std::vector<std::int64_t> landmark_track_ids;
  std::vector<std::int64_t> dropped_track_ids;
  std::vector<NormalizedPoint> anchors;  // frame-0 measurement per landmark
  Step3Config config;
  CameraModel camera{1.0, 1.0, 0.0, 0.0, 1, 1};
};

/// Rotations from the exponential map of the step-1 rotation vectors,
/// translations from step 2, landmarks from x0 / w. Landmarks with
/// w <= min_inverse_depth are dropped and listed in dropped_track_ids.
Step3Problem init_step3(const SmallMotionEstimate& step1, const Step2Solution& step2, const FeatureTracks& tracks,
                        const Step3Config& cfg);

struct PoseEstimate {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double rms_residual_px = 0.0;
  int observations = 0;
};

struct LandmarkEstimate {
  std::int64_t track_id = 0;
  double omega = 0.0;  // raw depth parameter
  double psi = 0.0;
  double phi = 0.0;
  double inverse_depth = 0.0;  // rho (az/el model) or w (anchored model)
  Vec3 point = Vec3::Zero();   // reference frame
  double rms_residual_px = 0.0;
  int observations = 0;
};

struct InitializationSolution {
  LandmarkModel landmark_model = LandmarkModel::azimuth_elevation;
  std::vector<PoseEstimate> poses;  // frames 0..n
  std::vector<LandmarkEstimate> landmarks;
  std::vector<std::int64_t> dropped_track_ids;
  SolveReport report;
  double initial_rms_px = 0.0;
  double final_rms_px = 0.0;
  int cheirality_violations = 0;
};

/// Throws Step3Failure when the solver diverges or the problem is too small.
InitializationSolution solve_step3(Step3Problem& problem, const LmConfig& lm, Execution exec = Execution::parallel);

/// Builds the per-pose and per-landmark summary from the problem's current values.
InitializationSolution extract_solution(const Step3Problem& problem);

}  // namespace sfsm
