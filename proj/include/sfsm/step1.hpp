#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sfsm/execution.hpp"
#include "sfsm/geometry.hpp"
#include "sfsm/tracks.hpp"

namespace sfsm {

/// Scaled translation: nominal inverse depth times the metric translation.
using ScaledTranslation = Eigen::Vector3d;

struct Step1Config {
  double inlier_threshold_px = 2.0;
  int ransac_iterations = 52;
  int sample_size = 3;
  double nominal_inverse_depth = 0.01;
  std::uint64_t rng_seed = 0;
  /// False drops the scaled-translation unknowns (rotation-only small-motion model).
  bool estimate_translation = true;
  /// Adaptive stopping from the running inlier ratio; ransac_iterations becomes the floor.
  bool adaptive = false;
  double confidence = 0.999;
  int max_adaptive_iterations = 2000;
};

/// Throws ValidationError when a field is out of range.
void validate(const Step1Config& cfg);

struct SmallMotion {
  RotationVector rotation = RotationVector::Zero();
  ScaledTranslation scaled_translation = ScaledTranslation::Zero();
};

struct Correspondence {
  NormalizedPoint reference;  // frame 0
  NormalizedPoint current;    // frame i
};

/// First-order projection of a reference-frame ray into frame i under the
/// scaled-translation model. Throws DegenerateDepth when the denominator
/// magnitude drops to 1e-9.
NormalizedPoint expected_point(const RotationVector& theta, const ScaledTranslation& rbar,
                               const NormalizedPoint& x0);

/// Non-throwing variant for hot loops.
std::optional<NormalizedPoint> try_expected_point(const RotationVector& theta, const ScaledTranslation& rbar,
                                                  const NormalizedPoint& x0);

struct LinearSystem {
  Eigen::MatrixXd A;  // 2k x 6, or 2k x 3 without translation
  Eigen::VectorXd b;
};

/// Stacks the two linear equations of every correspondence, unknowns ordered
/// (theta1, theta2, theta3, rbar1, rbar2, rbar3). Throws
/// InsufficientCorrespondences below min_correspondences.
LinearSystem build_linear_system(std::span<const Correspondence> corr, bool with_translation = true,
                                 std::size_t min_correspondences = 3);

inline constexpr double kMaxSampleCondition = 1e10;

/// Minimum-norm solve of a minimal sample; nullopt when the system's condition
/// number exceeds kMaxSampleCondition (collinear or repeated points).
std::optional<SmallMotion> solve_sample(std::span<const Correspondence> sample, bool with_translation = true);

/// Least-squares solve over all correspondences. Throws Step1Failure when rank deficient.
SmallMotion solve_least_squares(std::span<const Correspondence> corr, bool with_translation = true);

struct RansacResult {
  SmallMotion motion;                // re-fit on the full inlier set
  std::vector<std::size_t> inliers;  // indices into tracks.tracks, sorted
  double inlier_rms_px = 0.0;        // of the winning hypothesis
  std::size_t covisible = 0;
  int hypotheses = 0;
  int best_iteration = -1;
};

/// Standard RANSAC trial count for the given confidence and inlier ratio.
int ransac_iterations_for_confidence(double confidence, double inlier_ratio, int sample_size);

RansacResult ransac_frame_pair(const FeatureTracks& tracks, int frame_a, int frame_b, const Step1Config& cfg,
                               Execution exec = Execution::parallel);

struct FrameMotionEstimate {
  SmallMotion motion;
  double rms_residual_px = 0.0;
};

struct SmallMotionEstimate {
  std::vector<FrameMotionEstimate> frames;  // entry k is frame k + 1
  std::vector<std::size_t> inliers;
  std::size_t covisible = 0;
  int hypotheses = 0;
};

/// Per-frame least-squares solve over the inlier set for frames 1..n.
SmallMotionEstimate estimate_all_frames(const FeatureTracks& tracks, const std::vector<std::size_t>& inliers,
                                        const Step1Config& cfg);

/// RANSAC between frames 0 and n followed by estimate_all_frames.
SmallMotionEstimate run_step1(const FeatureTracks& tracks, const Step1Config& cfg,
                              Execution exec = Execution::parallel);

}  // namespace sfsm
