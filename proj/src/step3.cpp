#include "sfsm/step3.hpp"

#include <cmath>
#include <limits>

#include "sfsm/errors.hpp"

namespace sfsm {

std::string to_string(LandmarkModel m) {
  return m == LandmarkModel::azimuth_elevation ? "azimuth-elevation" : "anchored-inverse-depth";
}

namespace {

constexpr double kMinProjectedDepth = 1e-9;

using Row23 = Eigen::Matrix<double, 2, 3, Eigen::RowMajor>;

Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& q, const CameraModel& cam) {
  const double iz = 1.0 / q.z();
  Eigen::Matrix<double, 2, 3> P;
  P << -cam.fx() * iz, 0.0, cam.fx() * q.x() * iz * iz,
       0.0, -cam.fy() * iz, cam.fy() * q.y() * iz * iz;
  return P;
}

bool project_residual(const Vec3& q, const PixelPoint& measured, const CameraModel& cam, double* residual) {
  if (!(q.z() > kMinProjectedDepth)) return false;
  residual[0] = measured.u - (cam.fx() * q.x() / q.z() + cam.cx());
  residual[1] = measured.v - (cam.fy() * q.y() / q.z() + cam.cy());
  return true;
}

}  // namespace

bool AzElResidual::evaluate(std::span<const double* const> params, double* residual,
                            std::span<double* const> jacobians) const {
  const Eigen::Map<const Mat3> R(params[0]);
  const Eigen::Map<const Vec3> r(params[1]);
  const double omega = params[2][0], psi = params[2][1], phi = params[2][2];
  const Vec3 m = direction_vector(psi, phi);
  const double rho = depth_.value(omega);
  const Vec3 Rm = R * m;
  const Vec3 q = Rm + rho * r;
  if (!project_residual(q, measured_, cam_, residual)) return false;
  if (jacobians.empty()) return true;
  const Eigen::Matrix<double, 2, 3> P = projection_jacobian(q, cam_);
  // R exp(d) m ~ R m - R [m]x d
  if (jacobians[0]) Eigen::Map<Row23>{jacobians[0]} = -P * R * skew(m);
  if (jacobians[1]) Eigen::Map<Row23>{jacobians[1]} = P * rho;
  if (jacobians[2]) {
    Eigen::Matrix<double, 3, 3> dq;
    dq.col(0) = r * depth_.derivative(omega);
    dq.rightCols<2>() = R * direction_vector_jacobian(psi, phi);
    Eigen::Map<Row23>{jacobians[2]} = P * dq;
  }
  return true;
}

bool DirectionPriorResidual::evaluate(std::span<const double* const> params, double* residual,
                                      std::span<double* const> jacobians) const {
  const double psi = params[0][1], phi = params[0][2];
  const Vec3 m = direction_vector(psi, phi);
  if (!project_residual(m, measured_, cam_, residual)) return false;
  if (jacobians.empty() || !jacobians[0]) return true;
  Eigen::Matrix<double, 3, 3> dq;
  dq.col(0).setZero();
  dq.rightCols<2>() = direction_vector_jacobian(psi, phi);
  Eigen::Map<Row23>{jacobians[0]} = projection_jacobian(m, cam_) * dq;
  return true;
}

bool AnchoredResidual::evaluate(std::span<const double* const> params, double* residual,
                                std::span<double* const> jacobians) const {
  const Eigen::Map<const Mat3> R(params[0]);
  const Eigen::Map<const Vec3> r(params[1]);
  const double p = params[2][0];
  const double w = depth_.value(p);
  const Vec3 x0 = reference_.homogeneous();
  const Vec3 q = R * x0 + w * r;
  if (!project_residual(q, measured_, cam_, residual)) return false;
  if (jacobians.empty()) return true;
  const Eigen::Matrix<double, 2, 3> P = projection_jacobian(q, cam_);
  if (jacobians[0]) Eigen::Map<Row23>{jacobians[0]} = -P * R * skew(x0);
  if (jacobians[1]) Eigen::Map<Row23>{jacobians[1]} = P * w;
  if (jacobians[2]) Eigen::Map<Vec2>{jacobians[2]} = P * r * depth_.derivative(p);
  return true;
}

Vec2 step3_residual(const Mat3& R, const Vec3& r, double omega, double psi, double phi, const PixelPoint& measured,
                    const CameraModel& cam, const SoftPlusParams& sp) {
  InverseDepthModel depth;
  depth.softplus = sp;
  const AzElResidual f(measured, cam, depth);
  const double lm[3] = {omega, psi, phi};
  const double* params[3] = {R.data(), r.data(), lm};
  Vec2 out;
  if (!f.evaluate(params, out.data(), {})) throw DegenerateDepth("step3: landmark projects behind the camera");
  return out;
}

Vec2 prior_residual(double psi, double phi, const PixelPoint& measured, const CameraModel& cam) {
  const DirectionPriorResidual f(measured, cam);
  const double lm[3] = {0.0, psi, phi};
  const double* params[1] = {lm};
  Vec2 out;
  if (!f.evaluate(params, out.data(), {})) throw DegenerateDepth("step3: direction perpendicular to the boresight");
  return out;
}

Step3Problem init_step3(const SmallMotionEstimate& step1, const Step2Solution& step2, const FeatureTracks& tracks,
                        const Step3Config& cfg) {
  if (step1.frames.size() != step2.translations.size() || step2.landmark_tracks.size() != step2.inverse_depths.size())
    throw ValidationError("step3: step-1 and step-2 index sets disagree");
  if (static_cast<int>(step1.frames.size()) != tracks.n_frames - 1)
    throw ValidationError("step3: frame count does not match the tracks");

  Step3Problem sp;
  sp.config = cfg;
  sp.camera = tracks.camera;
  Problem& P = sp.problem;
  sp.rotations.push_back(P.add_so3(Mat3::Identity(), true));
  sp.translations.push_back(P.add_euclidean(Eigen::VectorXd(Vec3::Zero()), true));
  for (std::size_t k = 0; k < step1.frames.size(); ++k) {
    sp.rotations.push_back(P.add_so3(exact_rotation(step1.frames[k].motion.rotation)));
    sp.translations.push_back(P.add_euclidean(Eigen::VectorXd(step2.translations[k])));
  }

  for (std::size_t j = 0; j < step2.landmark_tracks.size(); ++j) {
    const Track& tr = tracks.tracks[step2.landmark_tracks[j]];
    const double w = step2.inverse_depths[j];
    if (!(w > cfg.min_inverse_depth)) {
      sp.dropped_track_ids.push_back(tr.id);
      continue;
    }
    const NormalizedPoint x0 = pixel_to_camera(tracks.camera, tr.at(0));
    BlockId lm;
    if (cfg.landmark_model == LandmarkModel::azimuth_elevation) {
      const AzimuthElevation ae = point_to_azel(x0.homogeneous() / w);
      lm = P.add_euclidean(Eigen::VectorXd(Vec3(cfg.depth.parameter_for(ae.rho), ae.psi, ae.phi)), false, true);
      P.add_residual(std::make_shared<DirectionPriorResidual>(tr.at(0), tracks.camera), {lm}, cfg.prior_covariance);
    } else {
      lm = P.add_euclidean(Eigen::VectorXd::Constant(1, cfg.depth.parameter_for(w)), false, true);
      P.block(lm).lower_bound = cfg.depth.lower_bound();
    }
    for (int i = 1; i < tracks.n_frames && tr.observed_in(i); ++i) {
      const auto ii = static_cast<std::size_t>(i);
      std::shared_ptr<const ResidualFunction> f;
      if (cfg.landmark_model == LandmarkModel::azimuth_elevation)
        f = std::make_shared<AzElResidual>(tr.at(i), tracks.camera, cfg.depth);
      else
        f = std::make_shared<AnchoredResidual>(x0, tr.at(i), tracks.camera, cfg.depth);
      P.add_residual(std::move(f), {sp.rotations[ii], sp.translations[ii], lm}, cfg.measurement_covariance);
    }
    sp.landmarks.push_back(lm);
    sp.landmark_tracks.push_back(step2.landmark_tracks[j]);
    sp.landmark_track_ids.push_back(tr.id);
    sp.anchors.push_back(x0);
  }
  return sp;
}

InitializationSolution extract_solution(const Step3Problem& sp) {
  InitializationSolution out;
  out.landmark_model = sp.config.landmark_model;
  out.dropped_track_ids = sp.dropped_track_ids;
  const Problem& P = sp.problem;
  for (std::size_t i = 0; i < sp.rotations.size(); ++i)
    out.poses.push_back({P.rotation(sp.rotations[i]), P.vector(sp.translations[i]), 0.0, 0});

  std::vector<int> landmark_of_block(P.blocks().size(), -1);
  std::vector<int> frame_of_block(P.blocks().size(), -1);
  for (std::size_t j = 0; j < sp.landmarks.size(); ++j)
    landmark_of_block[static_cast<std::size_t>(sp.landmarks[j].index)] = static_cast<int>(j);
  for (std::size_t i = 0; i < sp.rotations.size(); ++i)
    frame_of_block[static_cast<std::size_t>(sp.rotations[i].index)] = static_cast<int>(i);

  for (std::size_t j = 0; j < sp.landmarks.size(); ++j) {
    LandmarkEstimate le;
    le.track_id = sp.landmark_track_ids[j];
    const Eigen::VectorXd v = P.vector(sp.landmarks[j]);
    le.omega = v(0);
    le.inverse_depth = sp.config.depth.value(v(0));
    if (sp.config.landmark_model == LandmarkModel::azimuth_elevation) {
      le.psi = v(1);
      le.phi = v(2);
      le.point = direction_vector(le.psi, le.phi) / le.inverse_depth;
    } else {
      le.point = sp.anchors[j].homogeneous() / le.inverse_depth;
      le.psi = std::atan2(le.point.x(), le.point.z());
      le.phi = std::atan2(-le.point.y(), std::hypot(le.point.x(), le.point.z()));
    }
    out.landmarks.push_back(le);
  }

  std::vector<double> pose_sq(sp.rotations.size(), 0.0), lm_sq(sp.landmarks.size(), 0.0);
  double total_sq = 0.0;
  for (std::size_t r = 0; r < P.residuals().size(); ++r) {
    Vec2 res;
    if (!P.evaluate_residual(r, res.data(), {})) res.setConstant(std::numeric_limits<double>::infinity());
    const double s = res.squaredNorm();
    total_sq += s;
    int frame = 0;  // the direction prior observes frame 0
    int landmark = -1;
    for (BlockId id : P.residuals()[r].blocks) {
      const auto b = static_cast<std::size_t>(id.index);
      if (frame_of_block[b] >= 0) frame = frame_of_block[b];
      if (landmark_of_block[b] >= 0) landmark = landmark_of_block[b];
    }
    pose_sq[static_cast<std::size_t>(frame)] += s;
    out.poses[static_cast<std::size_t>(frame)].observations++;
    if (landmark >= 0) {
      lm_sq[static_cast<std::size_t>(landmark)] += s;
      out.landmarks[static_cast<std::size_t>(landmark)].observations++;
    }
  }
  for (std::size_t i = 0; i < out.poses.size(); ++i)
    if (out.poses[i].observations)
      out.poses[i].rms_residual_px = std::sqrt(pose_sq[i] / out.poses[i].observations);
  for (std::size_t j = 0; j < out.landmarks.size(); ++j)
    if (out.landmarks[j].observations)
      out.landmarks[j].rms_residual_px = std::sqrt(lm_sq[j] / out.landmarks[j].observations);
  out.final_rms_px = P.residuals().empty() ? 0.0 : std::sqrt(total_sq / static_cast<double>(P.residuals().size()));
  return out;
}

InitializationSolution solve_step3(Step3Problem& sp, const LmConfig& lm, Execution exec) {
  if (sp.landmarks.size() < 3) throw Step3Failure("step3: fewer than 3 landmarks");
  if (sp.rotations.size() < 3) throw Step3Failure("step3: fewer than 2 non-reference frames");
  const double initial_rms = rms_residual_px(sp.problem);
  int violations = 0;
  auto count_violations = [&](const Problem& p) {
    for (BlockId id : sp.landmarks)
      if (!(sp.config.depth.value(p.block(id).value[0]) > 0.0)) ++violations;
  };
  count_violations(sp.problem);
  SolveReport report = solve(sp.problem, lm, exec, count_violations);
  if (report.termination == Termination::diverged) throw Step3Failure("step3: optimizer diverged");
  InitializationSolution out = extract_solution(sp);
  out.report = std::move(report);
  out.initial_rms_px = initial_rms;
  out.cheirality_violations = violations;
  return out;
}

}  // namespace sfsm
