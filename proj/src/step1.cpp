#include "sfsm/step1.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include <Eigen/SVD>

#include "sfsm/errors.hpp"
#include "sfsm/kernels.hpp"

namespace sfsm {

namespace {

constexpr double kDenominatorEpsilon = 1e-9;
constexpr double kMaxSmallRotation = 0.35;
constexpr int kMaxRedraws = 100;

int unknowns(bool with_translation) { return with_translation ? 6 : 3; }

SmallMotion unpack(const Eigen::VectorXd& s) {
  SmallMotion m;
  m.rotation = s.head<3>();
  if (s.size() == 6) m.scaled_translation = s.tail<3>();
  return m;
}

double condition_number(const Eigen::JacobiSVD<Eigen::MatrixXd>& svd) {
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(sv.size() - 1) <= 0.0) return std::numeric_limits<double>::infinity();
  return sv(0) / sv(sv.size() - 1);
}

/// k distinct values from [0, n) by Floyd's algorithm, in draw order.
std::vector<std::size_t> draw_without_replacement(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> picked;
  picked.reserve(k);
  for (std::size_t j = n - k; j < n; ++j) {
    std::uniform_int_distribution<std::size_t> dist(0, j);
    const std::size_t t = dist(rng);
    if (std::find(picked.begin(), picked.end(), t) == picked.end())
      picked.push_back(t);
    else
      picked.push_back(j);
  }
  return picked;
}

}  // namespace

void validate(const Step1Config& cfg) {
  if (!(cfg.inlier_threshold_px > 0.0)) throw ValidationError("step1: inlier threshold must be positive");
  if (cfg.ransac_iterations < 1) throw ValidationError("step1: ransac_iterations must be >= 1");
  const int min_sample = cfg.estimate_translation ? 3 : 2;
  if (cfg.sample_size < min_sample)
    throw ValidationError("step1: sample_size must be >= " + std::to_string(min_sample));
  if (!(cfg.nominal_inverse_depth > 0.0)) throw ValidationError("step1: nominal inverse depth must be positive");
  if (cfg.adaptive && !(cfg.confidence > 0.0 && cfg.confidence < 1.0))
    throw ValidationError("step1: confidence must lie in (0, 1)");
}

std::optional<NormalizedPoint> try_expected_point(const RotationVector& t, const ScaledTranslation& r,
                                                  const NormalizedPoint& x0) {
  const double den = -t(1) * x0.x + t(0) * x0.y + 1.0 + r(2);
  if (!(std::abs(den) > kDenominatorEpsilon)) return std::nullopt;
  return NormalizedPoint{(x0.x - t(2) * x0.y + t(1) + r(0)) / den, (t(2) * x0.x + x0.y - t(0) + r(1)) / den};
}

NormalizedPoint expected_point(const RotationVector& theta, const ScaledTranslation& rbar,
                               const NormalizedPoint& x0) {
  const auto p = try_expected_point(theta, rbar, x0);
  if (!p) throw DegenerateDepth("expected_point: projection denominator vanishes");
  return *p;
}

LinearSystem build_linear_system(std::span<const Correspondence> corr, bool with_translation,
                                 std::size_t min_correspondences) {
  if (corr.size() < min_correspondences)
    throw InsufficientCorrespondences("step1: need " + std::to_string(min_correspondences) +
                                      " correspondences, got " + std::to_string(corr.size()));
  const int cols = unknowns(with_translation);
  LinearSystem sys{Eigen::MatrixXd::Zero(2 * static_cast<Eigen::Index>(corr.size()), cols),
                   Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(corr.size()))};
  for (std::size_t j = 0; j < corr.size(); ++j) {
    const double x0 = corr[j].reference.x, y0 = corr[j].reference.y;
    const double xi = corr[j].current.x, yi = corr[j].current.y;
    const auto r = 2 * static_cast<Eigen::Index>(j);
    // Cross-multiplied expected_point equations, linear in (theta, rbar).
    sys.A(r, 0) = xi * y0;
    sys.A(r, 1) = -xi * x0 - 1.0;
    sys.A(r, 2) = y0;
    sys.A(r + 1, 0) = yi * y0 + 1.0;
    sys.A(r + 1, 1) = -yi * x0;
    sys.A(r + 1, 2) = -x0;
    if (with_translation) {
      sys.A(r, 3) = -1.0;
      sys.A(r, 5) = xi;
      sys.A(r + 1, 4) = -1.0;
      sys.A(r + 1, 5) = yi;
    }
    sys.b(r) = x0 - xi;
    sys.b(r + 1) = y0 - yi;
  }
  return sys;
}

std::optional<SmallMotion> solve_sample(std::span<const Correspondence> sample, bool with_translation) {
  const LinearSystem sys = build_linear_system(sample, with_translation, with_translation ? 3 : 2);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(sys.A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (!(condition_number(svd) <= kMaxSampleCondition)) return std::nullopt;
  return unpack(svd.solve(sys.b));
}

SmallMotion solve_least_squares(std::span<const Correspondence> corr, bool with_translation) {
  const LinearSystem sys = build_linear_system(corr, with_translation, with_translation ? 3 : 2);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(sys.A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (!(condition_number(svd) <= kMaxSampleCondition))
    throw Step1Failure("step1: least-squares system is rank deficient");
  return unpack(svd.solve(sys.b));
}

int ransac_iterations_for_confidence(double confidence, double inlier_ratio, int sample_size) {
  if (inlier_ratio >= 1.0) return 1;
  const double good = std::pow(inlier_ratio, sample_size);
  if (good <= 0.0) return std::numeric_limits<int>::max();
  const double n = std::log(1.0 - confidence) / std::log(1.0 - good);
  return static_cast<int>(std::ceil(n - 1e-9));
}

RansacResult ransac_frame_pair(const FeatureTracks& tracks, int frame_a, int frame_b, const Step1Config& cfg,
                               Execution exec) {
  validate(cfg);
  const bool with_t = cfg.estimate_translation;
  const auto sample_size = static_cast<std::size_t>(cfg.sample_size);

  RansacResult result;
  const std::vector<std::size_t> covis = covisible_subset(tracks, frame_a, frame_b);
  result.covisible = covis.size();
  if (covis.size() < sample_size)
    throw RansacFailure("step1: insufficient covisible tracks (" + std::to_string(covis.size()) + ")");

  std::vector<Correspondence> corr(covis.size());
  std::vector<NormalizedPoint> reference(covis.size());
  std::vector<PixelPoint> measured(covis.size());
  for (std::size_t k = 0; k < covis.size(); ++k) {
    const Track& tr = tracks.tracks[covis[k]];
    reference[k] = pixel_to_camera(tracks.camera, tr.at(frame_a));
    measured[k] = tr.at(frame_b);
    corr[k] = {reference[k], pixel_to_camera(tracks.camera, measured[k])};
  }

  std::mt19937_64 rng(cfg.rng_seed);
  std::vector<Correspondence> sample(sample_size);
  auto draw_hypothesis = [&]() {
    kernels::Hypothesis h;
    for (int attempt = 0; attempt < kMaxRedraws && !h.valid; ++attempt) {
      const auto idx = draw_without_replacement(rng, corr.size(), sample_size);
      for (std::size_t s = 0; s < sample_size; ++s) sample[s] = corr[idx[s]];
      if (auto m = solve_sample(sample, with_t)) {
        h.motion = *m;
        h.valid = true;
      }
    }
    return h;
  };

  kernels::HypothesisScore best_score;
  int best_index = -1;
  SmallMotion best_motion;
  int total = 0;
  int target = cfg.ransac_iterations;
  while (total < target) {
    std::vector<kernels::Hypothesis> batch(static_cast<std::size_t>(target - total));
    for (auto& h : batch) h = draw_hypothesis();
    const auto scores =
        kernels::score_hypotheses(batch, reference, measured, tracks.camera, cfg.inlier_threshold_px, exec);
    for (std::size_t h = 0; h < batch.size(); ++h) {
      const auto& s = scores[h];
      if (!batch[h].valid) continue;
      const bool better = best_index < 0 || s.inliers > best_score.inliers ||
                          (s.inliers == best_score.inliers && s.rms_px() < best_score.rms_px());
      if (better) {
        best_score = s;
        best_index = total + static_cast<int>(h);
        best_motion = batch[h].motion;
      }
    }
    total += static_cast<int>(batch.size());
    if (cfg.adaptive && best_index >= 0) {
      const double ratio = static_cast<double>(best_score.inliers) / static_cast<double>(covis.size());
      const int needed = ransac_iterations_for_confidence(cfg.confidence, ratio, cfg.sample_size);
      target = std::clamp(needed, cfg.ransac_iterations, std::max(cfg.ransac_iterations, cfg.max_adaptive_iterations));
    }
  }
  result.hypotheses = total;
  result.best_iteration = best_index;

  const double min_inliers = std::max(6.0, 0.2 * static_cast<double>(covis.size()));
  if (best_index < 0 || best_score.inliers < min_inliers)
    throw RansacFailure("step1: best hypothesis has " + std::to_string(best_score.inliers) + " inliers of " +
                        std::to_string(covis.size()) + " covisible tracks");

  std::vector<Correspondence> inlier_corr;
  for (std::size_t k = 0; k < covis.size(); ++k) {
    const double e = kernels::reprojection_error_px(best_motion, reference[k], measured[k], tracks.camera);
    if (e >= 0.0 && e < cfg.inlier_threshold_px) {
      result.inliers.push_back(covis[k]);
      inlier_corr.push_back(corr[k]);
    }
  }
  result.inlier_rms_px = best_score.rms_px();
  try {
    result.motion = solve_least_squares(inlier_corr, with_t);
  } catch (const Step1Failure& e) {
    throw RansacFailure(e.what());
  }
  return result;
}

SmallMotionEstimate estimate_all_frames(const FeatureTracks& tracks, const std::vector<std::size_t>& inliers,
                                        const Step1Config& cfg) {
  validate(cfg);
  SmallMotionEstimate est;
  est.inliers = inliers;
  std::vector<Correspondence> corr(inliers.size());
  for (int i = 1; i < tracks.n_frames; ++i) {
    for (std::size_t k = 0; k < inliers.size(); ++k) {
      const Track& tr = tracks.tracks[inliers[k]];
      if (!tr.observed_in(i))
        throw Step1Failure("step1: frame " + std::to_string(i) + ": inlier track " + std::to_string(tr.id) +
                           " not observed");
      corr[k] = {pixel_to_camera(tracks.camera, tr.at(0)), pixel_to_camera(tracks.camera, tr.at(i))};
    }
    FrameMotionEstimate fm;
    try {
      fm.motion = solve_least_squares(corr, cfg.estimate_translation);
    } catch (const Error& e) {
      throw Step1Failure("step1: frame " + std::to_string(i) + ": " + e.what());
    }
    if (!fm.motion.rotation.allFinite() || !fm.motion.scaled_translation.allFinite())
      throw Step1Failure("step1: frame " + std::to_string(i) + ": non-finite solution");
    if (fm.motion.rotation.norm() >= kMaxSmallRotation)
      throw Step1Failure("step1: frame " + std::to_string(i) + ": rotation exceeds the small-motion range");
    double sum_sq = 0.0;
    for (std::size_t k = 0; k < inliers.size(); ++k) {
      const Track& tr = tracks.tracks[inliers[k]];
      const double e = kernels::reprojection_error_px(fm.motion, corr[k].reference, tr.at(i), tracks.camera);
      if (e < 0.0) throw Step1Failure("step1: frame " + std::to_string(i) + ": degenerate projection");
      sum_sq += e * e;
    }
    fm.rms_residual_px = inliers.empty() ? 0.0 : std::sqrt(sum_sq / static_cast<double>(inliers.size()));
    est.frames.push_back(fm);
  }
  return est;
}

SmallMotionEstimate run_step1(const FeatureTracks& tracks, const Step1Config& cfg, Execution exec) {
  const RansacResult ransac = ransac_frame_pair(tracks, 0, tracks.last_frame(), cfg, exec);
  SmallMotionEstimate est = estimate_all_frames(tracks, ransac.inliers, cfg);
  est.covisible = ransac.covisible;
  est.hypotheses = ransac.hypotheses;
  return est;
}

}  // namespace sfsm
