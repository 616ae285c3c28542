#include "sfsm/step2.hpp"

#include <cmath>
#include <limits>

#include "sfsm/errors.hpp"

namespace sfsm {

double InverseDepthModel::parameter_for(double w) const {
  if (!(w > 0.0)) throw NonPositiveDepth("inverse depth must be positive");
  return kind == DepthParameterization::softplus ? softplus_inverse(w, softplus) : w;
}

namespace {

constexpr double kMinProjectedDepth = 1e-9;

/// d(pixel residual)/dq for residual = p - <K q>.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& q, const CameraModel& cam) {
  const double iz = 1.0 / q.z();
  Eigen::Matrix<double, 2, 3> P;
  P << -cam.fx() * iz, 0.0, cam.fx() * q.x() * iz * iz,
       0.0, -cam.fy() * iz, cam.fy() * q.y() * iz * iz;
  return P;
}

}  // namespace

bool Step2Residual::evaluate(std::span<const double* const> params, double* residual,
                             std::span<double* const> jacobians) const {
  const Eigen::Map<const Vec3> theta(params[0]);
  const Eigen::Map<const Vec3> r(params[1]);
  const double p = params[2][0];
  const double w = depth_.value(p);
  const Vec3 x0 = reference_.homogeneous();
  const Vec3 q = x0 + theta.cross(x0) + w * r;
  if (!(q.z() > kMinProjectedDepth)) return false;
  residual[0] = measured_.u - (cam_.fx() * q.x() / q.z() + cam_.cx());
  residual[1] = measured_.v - (cam_.fy() * q.y() / q.z() + cam_.cy());
  if (jacobians.empty()) return true;
  const Eigen::Matrix<double, 2, 3> P = projection_jacobian(q, cam_);
  using Row23 = Eigen::Matrix<double, 2, 3, Eigen::RowMajor>;
  if (jacobians[0]) Eigen::Map<Row23>{jacobians[0]} = -P * skew(x0);
  if (jacobians[1]) Eigen::Map<Row23>{jacobians[1]} = P * w;
  if (jacobians[2]) Eigen::Map<Vec2>{jacobians[2]} = P * r * depth_.derivative(p);
  return true;
}

Vec2 step2_residual(const Vec3& translation, double depth_parameter, const RotationVector& rotation,
                    const NormalizedPoint& reference, const PixelPoint& measured, const CameraModel& cam,
                    const InverseDepthModel& depth) {
  const Step2Residual f(reference, measured, cam, depth);
  const double* params[3] = {rotation.data(), translation.data(), &depth_parameter};
  Vec2 out;
  if (!f.evaluate(params, out.data(), {})) throw DegenerateDepth("step2: landmark projects behind the camera");
  return out;
}

Step2Problem init_step2(const SmallMotionEstimate& est, const FeatureTracks& tracks, const Step2Config& cfg) {
  if (est.frames.empty()) throw ValidationError("step2: estimate has no frames");
  if (est.inliers.empty()) throw ValidationError("step2: estimate has no inlier landmarks");
  if (!(cfg.nominal_inverse_depth > 0.0)) throw ValidationError("step2: nominal inverse depth must be positive");
  if (static_cast<int>(est.frames.size()) != tracks.n_frames - 1)
    throw ValidationError("step2: frame count does not match the tracks");

  Step2Problem sp;
  sp.depth_model = cfg.depth;
  sp.landmark_tracks = est.inliers;
  for (const FrameMotionEstimate& f : est.frames) {
    sp.rotations.push_back(sp.problem.add_euclidean(Eigen::VectorXd(f.motion.rotation), true));
    sp.translations.push_back(
        sp.problem.add_euclidean(Eigen::VectorXd(f.motion.scaled_translation / cfg.nominal_inverse_depth)));
  }
  const double p0 = cfg.depth.parameter_for(cfg.nominal_inverse_depth);
  for (std::size_t j = 0; j < est.inliers.size(); ++j) {
    sp.depths.push_back(sp.problem.add_euclidean(Eigen::VectorXd::Constant(1, p0), false, true));
    sp.problem.block(sp.depths.back()).lower_bound = cfg.depth.lower_bound();
  }

  for (std::size_t j = 0; j < est.inliers.size(); ++j) {
    const Track& tr = tracks.tracks[est.inliers[j]];
    const NormalizedPoint x0 = pixel_to_camera(tracks.camera, tr.at(0));
    for (std::size_t k = 0; k < est.frames.size(); ++k) {
      const int frame = static_cast<int>(k) + 1;
      if (!tr.observed_in(frame)) break;
      sp.problem.add_residual(std::make_shared<Step2Residual>(x0, tr.at(frame), tracks.camera, cfg.depth),
                              {sp.rotations[k], sp.translations[k], sp.depths[j]}, cfg.measurement_covariance);
    }
  }
  return sp;
}

double rms_residual_px(const Problem& problem) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < problem.residuals().size(); ++r) {
    Eigen::VectorXd res(problem.residuals()[r].function->dimension());
    if (!problem.evaluate_residual(r, res.data(), {})) return std::numeric_limits<double>::infinity();
    sum += res.squaredNorm();
    ++n;
  }
  return n ? std::sqrt(sum / static_cast<double>(n)) : 0.0;
}

Step2Solution solve_step2(Step2Problem& sp, const LmConfig& lm, Execution exec) {
  Step2Solution out;
  out.landmark_tracks = sp.landmark_tracks;
  out.initial_rms_px = rms_residual_px(sp.problem);

  auto count_violations = [&](const Problem& p) {
    for (BlockId id : sp.depths)
      if (!(sp.depth_model.value(p.block(id).value[0]) > 0.0)) ++out.cheirality_violations;
  };
  count_violations(sp.problem);
  out.report = solve(sp.problem, lm, exec, count_violations);
  if (out.report.termination == Termination::diverged) throw Step2Failure("step2: optimizer diverged");

  for (BlockId id : sp.translations) out.translations.push_back(sp.problem.vector(id));
  for (std::size_t j = 0; j < sp.depths.size(); ++j) {
    const double p = sp.problem.block(sp.depths[j]).value[0];
    out.depth_parameters.push_back(p);
    out.inverse_depths.push_back(sp.depth_model.value(p));
    if (out.inverse_depths.back() < kMinInverseDepth) out.extreme_landmarks.push_back(j);
  }
  out.final_rms_px = rms_residual_px(sp.problem);
  return out;
}

}  // namespace sfsm
