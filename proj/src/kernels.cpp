#include "sfsm/kernels.hpp"

#include <cmath>

namespace sfsm::kernels {

double reprojection_error_px(const SmallMotion& m, const NormalizedPoint& x0, const PixelPoint& measured,
                             const CameraModel& cam) {
  const auto pred = try_expected_point(m.rotation, m.scaled_translation, x0);
  if (!pred) return -1.0;
  const PixelPoint p = camera_to_pixel(cam, *pred);
  return std::hypot(measured.u - p.u, measured.v - p.v);
}

namespace {

HypothesisScore score_one(const Hypothesis& h, std::span<const NormalizedPoint> reference,
                          std::span<const PixelPoint> measured, const CameraModel& cam, double threshold_px) {
  HypothesisScore s;
  if (!h.valid) return s;
  for (std::size_t j = 0; j < reference.size(); ++j) {
    const double e = reprojection_error_px(h.motion, reference[j], measured[j], cam);
    if (e >= 0.0 && e < threshold_px) {
      ++s.inliers;
      s.sum_sq_px += e * e;
    }
  }
  return s;
}

}  // namespace

std::vector<HypothesisScore> score_hypotheses_serial(std::span<const Hypothesis> hypotheses,
                                                     std::span<const NormalizedPoint> reference,
                                                     std::span<const PixelPoint> measured,
                                                     const CameraModel& cam, double threshold_px) {
  std::vector<HypothesisScore> out(hypotheses.size());
  for (std::size_t h = 0; h < hypotheses.size(); ++h)
    out[h] = score_one(hypotheses[h], reference, measured, cam, threshold_px);
  return out;
}

std::vector<HypothesisScore> score_hypotheses_parallel(std::span<const Hypothesis> hypotheses,
                                                       std::span<const NormalizedPoint> reference,
                                                       std::span<const PixelPoint> measured,
                                                       const CameraModel& cam, double threshold_px) {
  std::vector<HypothesisScore> out(hypotheses.size());
  const auto n = static_cast<long>(hypotheses.size());
#pragma omp parallel for schedule(static)
  for (long h = 0; h < n; ++h) out[h] = score_one(hypotheses[h], reference, measured, cam, threshold_px);
  return out;
}

}  // namespace sfsm::kernels

namespace sfsm::kernels {

std::vector<BlockEvaluation> make_evaluation_storage(const Problem& problem) {
  std::vector<BlockEvaluation> out(problem.residuals().size());
  for (std::size_t r = 0; r < out.size(); ++r) {
    const ResidualBlock& rb = problem.residuals()[r];
    const int dim = rb.function->dimension();
    out[r].residual.resize(dim);
    out[r].jacobians.resize(rb.blocks.size());
    for (std::size_t k = 0; k < rb.blocks.size(); ++k)
      out[r].jacobians[k].resize(dim, problem.block(rb.blocks[k]).tangent_dim());
  }
  return out;
}

namespace {

void evaluate_one(const Problem& problem, std::size_t r, bool with_jacobians, BlockEvaluation& ev) {
  std::vector<double*> jac(ev.jacobians.size(), nullptr);
  if (with_jacobians)
    for (std::size_t k = 0; k < jac.size(); ++k) jac[k] = ev.jacobians[k].data();
  ev.ok = problem.evaluate_residual(r, ev.residual.data(), jac);
}

}  // namespace

bool evaluate_residuals_serial(const Problem& problem, bool with_jacobians, std::vector<BlockEvaluation>& out) {
  bool ok = true;
  for (std::size_t r = 0; r < out.size(); ++r) {
    evaluate_one(problem, r, with_jacobians, out[r]);
    ok = ok && out[r].ok;
  }
  return ok;
}

bool evaluate_residuals_parallel(const Problem& problem, bool with_jacobians, std::vector<BlockEvaluation>& out) {
  const auto n = static_cast<long>(out.size());
#pragma omp parallel for schedule(static)
  for (long r = 0; r < n; ++r) evaluate_one(problem, static_cast<std::size_t>(r), with_jacobians, out[r]);
  for (const auto& ev : out)
    if (!ev.ok) return false;
  return true;
}

}  // namespace sfsm::kernels
