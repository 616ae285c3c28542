#include "sfsm/optimizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "sfsm/errors.hpp"
#include "sfsm/kernels.hpp"

namespace sfsm {

using kernels::BlockEvaluation;

// ---------------------------------------------------------------------------
// Problem

BlockId Problem::add_euclidean(std::span<const double> init, bool constant, bool eliminate) {
  if (init.empty()) throw ValidationError("problem: empty parameter block");
  ParameterBlock b;
  b.kind = ParameterKind::euclidean;
  b.value.assign(init.begin(), init.end());
  b.constant = constant;
  b.eliminate = eliminate;
  blocks_.push_back(std::move(b));
  return BlockId{static_cast<int>(blocks_.size()) - 1};
}

BlockId Problem::add_euclidean(const Eigen::VectorXd& init, bool constant, bool eliminate) {
  return add_euclidean(std::span<const double>(init.data(), static_cast<std::size_t>(init.size())), constant,
                       eliminate);
}

BlockId Problem::add_so3(const Mat3& R, bool constant) {
  ParameterBlock b;
  b.kind = ParameterKind::so3;
  b.value.assign(R.data(), R.data() + 9);
  b.constant = constant;
  blocks_.push_back(std::move(b));
  return BlockId{static_cast<int>(blocks_.size()) - 1};
}

void Problem::add_residual(std::shared_ptr<const ResidualFunction> fn, std::vector<BlockId> ids,
                           const Eigen::MatrixXd& covariance, bool robust) {
  if (!fn) throw ValidationError("problem: null residual function");
  const int dim = fn->dimension();
  if (covariance.rows() != dim || covariance.cols() != dim)
    throw ValidationError("problem: covariance shape does not match residual dimension");
  if (!covariance.isApprox(covariance.transpose(), 1e-12))
    throw ValidationError("problem: covariance is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) throw ValidationError("problem: covariance is not positive definite");
  for (std::size_t a = 0; a < ids.size(); ++a) {
    if (ids[a].index < 0 || ids[a].index >= static_cast<int>(blocks_.size()))
      throw ValidationError("problem: unknown parameter block");
    for (std::size_t b = a + 1; b < ids.size(); ++b)
      if (ids[a] == ids[b]) throw ValidationError("problem: residual references a block twice");
  }
  ResidualBlock rb;
  rb.function = std::move(fn);
  rb.blocks = std::move(ids);
  rb.sqrt_information = llt.matrixL().solve(Eigen::MatrixXd::Identity(dim, dim));
  rb.robust = robust;
  residuals_.push_back(std::move(rb));
}

Eigen::VectorXd Problem::vector(BlockId id) const {
  const auto& v = block(id).value;
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Mat3 Problem::rotation(BlockId id) const {
  const ParameterBlock& b = block(id);
  if (b.kind != ParameterKind::so3) throw ValidationError("problem: block is not a rotation");
  return Eigen::Map<const Mat3>(b.value.data());
}

void Problem::set_vector(BlockId id, const Eigen::VectorXd& v) {
  ParameterBlock& b = block(id);
  if (b.kind != ParameterKind::euclidean || static_cast<Eigen::Index>(b.value.size()) != v.size())
    throw ValidationError("problem: set_vector shape mismatch");
  std::copy(v.data(), v.data() + v.size(), b.value.begin());
}

void Problem::set_rotation(BlockId id, const Mat3& R) {
  ParameterBlock& b = block(id);
  if (b.kind != ParameterKind::so3) throw ValidationError("problem: block is not a rotation");
  std::copy(R.data(), R.data() + 9, b.value.begin());
}

void Problem::retract(BlockId id, std::span<const double> delta) {
  ParameterBlock& b = block(id);
  if (b.kind == ParameterKind::euclidean) {
    for (std::size_t k = 0; k < b.value.size(); ++k) b.value[k] = std::max(b.value[k] + delta[k], b.lower_bound);
  } else {
    const Mat3 R = Eigen::Map<const Mat3>(b.value.data()) * exact_rotation(Vec3(delta[0], delta[1], delta[2]));
    std::copy(R.data(), R.data() + 9, b.value.begin());
  }
}

bool Problem::evaluate_residual(std::size_t r, double* residual, std::span<double* const> jacobians) const {
  const ResidualBlock& rb = residuals_[r];
  // At most a handful of blocks per residual; avoid heap traffic in the hot loop.
  std::array<const double*, 8> params{};
  if (rb.blocks.size() > params.size()) throw ValidationError("problem: too many blocks in one residual");
  for (std::size_t k = 0; k < rb.blocks.size(); ++k) params[k] = block(rb.blocks[k]).value.data();
  return rb.function->evaluate(std::span<const double* const>(params.data(), rb.blocks.size()), residual,
                               jacobians);
}

void Problem::validate() const {
  if (residuals_.empty()) throw ValidationError("problem: no residual blocks");
  const bool any_free = std::any_of(blocks_.begin(), blocks_.end(), [](const auto& b) { return !b.constant; });
  if (!any_free) throw ValidationError("problem: every parameter block is constant");
}

// ---------------------------------------------------------------------------
// Configuration and reporting

void validate(const LmConfig& c) {
  if (c.max_iterations < 1) throw ValidationError("lm: max_iterations must be >= 1");
  if (!(c.initial_damping > 0.0)) throw ValidationError("lm: initial damping must be positive");
  if (!(c.damping_up > 1.0) || !(c.damping_down > 0.0 && c.damping_down < 1.0))
    throw ValidationError("lm: damping factors must satisfy up > 1 > down > 0");
  if (!(c.max_damping > c.initial_damping)) throw ValidationError("lm: max damping must exceed initial damping");
  if (!(c.absolute_cost_tolerance > 0.0) || !(c.relative_cost_tolerance > 0.0) || !(c.gradient_tolerance > 0.0))
    throw ValidationError("lm: tolerances must be positive");
  if (!(c.huber_threshold > 0.0)) throw ValidationError("lm: huber threshold must be positive");
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::converged_cost: return "converged-cost";
    case Termination::converged_gradient: return "converged-gradient";
    case Termination::max_iterations: return "max-iterations";
    case Termination::diverged: return "diverged";
  }
  return "unknown";
}

Termination termination_from_string(const std::string& s) {
  for (auto t : {Termination::converged_cost, Termination::converged_gradient, Termination::max_iterations,
                 Termination::diverged})
    if (to_string(t) == s) return t;
  throw ParseError("unknown termination reason '" + s + "'");
}

double huber_cost(double s, double threshold) {
  const double e = std::sqrt(s);
  if (e <= threshold) return s;
  return 2.0 * threshold * e - threshold * threshold;
}

namespace {

double robust_weight(double s, const LmConfig& cfg, bool robust) {
  if (!robust || !cfg.use_huber) return 1.0;
  const double e = std::sqrt(s);
  return e <= cfg.huber_threshold ? 1.0 : cfg.huber_threshold / e;
}

double block_cost(double s, const LmConfig& cfg, bool robust) {
  return (robust && cfg.use_huber) ? huber_cost(s, cfg.huber_threshold) : s;
}

void check_finite(const std::vector<BlockEvaluation>& evals, bool jacobians) {
  for (std::size_t r = 0; r < evals.size(); ++r) {
    if (!evals[r].ok) continue;
    bool finite = evals[r].residual.allFinite();
    if (jacobians)
      for (const auto& J : evals[r].jacobians) finite = finite && J.allFinite();
    if (!finite) throw NumericalFailure("optimizer: non-finite residual or Jacobian in block " + std::to_string(r));
  }
}

double cost_of(const Problem& p, const std::vector<BlockEvaluation>& evals, const LmConfig& cfg) {
  double cost = 0.0;
  for (std::size_t r = 0; r < evals.size(); ++r) {
    const ResidualBlock& rb = p.residuals()[r];
    const double s = (rb.sqrt_information * evals[r].residual).squaredNorm();
    cost += block_cost(s, cfg, rb.robust);
  }
  return cost;
}

struct Layout {
  std::vector<int> offset;    // reduced-system offset, -1 if constant or eliminated
  std::vector<int> landmark;  // landmark slot, -1 unless eliminated
  std::vector<int> landmark_block;
  int reduced_dim = 0;
};

Layout make_layout(const Problem& p, const LmConfig& cfg) {
  Layout L;
  const auto n = p.blocks().size();
  L.offset.assign(n, -1);
  L.landmark.assign(n, -1);
  for (std::size_t b = 0; b < n; ++b) {
    const ParameterBlock& pb = p.blocks()[b];
    if (pb.constant) continue;
    if (cfg.use_schur && pb.eliminate) {
      L.landmark[b] = static_cast<int>(L.landmark_block.size());
      L.landmark_block.push_back(static_cast<int>(b));
    } else {
      L.offset[b] = L.reduced_dim;
      L.reduced_dim += pb.tangent_dim();
    }
  }
  for (const ResidualBlock& rb : p.residuals()) {
    int eliminated = 0;
    for (BlockId id : rb.blocks) eliminated += L.landmark[static_cast<std::size_t>(id.index)] >= 0;
    if (eliminated > 1) throw ValidationError("optimizer: residual couples two eliminated blocks");
  }
  return L;
}

struct LandmarkSystem {
  Eigen::MatrixXd H;
  Eigen::VectorXd b;
  std::vector<std::pair<int, Eigen::MatrixXd>> coupling;  // (block index, d_p x d_l)
};

struct NormalEquations {
  Eigen::MatrixXd H;  // reduced (non-eliminated) block
  Eigen::VectorXd b;
  std::vector<LandmarkSystem> landmarks;
  double gradient_norm = 0.0;
};

Eigen::MatrixXd& coupling_for(LandmarkSystem& ls, int block, int rows) {
  for (auto& [id, W] : ls.coupling)
    if (id == block) return W;
  ls.coupling.emplace_back(block, Eigen::MatrixXd::Zero(rows, ls.H.rows()));
  return ls.coupling.back().second;
}

/// Gauss-Newton system of the IRLS-weighted, whitened residuals. Accumulation
/// follows residual order, so the sums do not depend on the evaluation schedule.
void assemble(const Problem& p, const Layout& L, const std::vector<BlockEvaluation>& evals, const LmConfig& cfg,
              NormalEquations& ne) {
  ne.H.setZero(L.reduced_dim, L.reduced_dim);
  ne.b.setZero(L.reduced_dim);
  ne.landmarks.resize(L.landmark_block.size());
  for (std::size_t l = 0; l < L.landmark_block.size(); ++l) {
    const int d = p.blocks()[static_cast<std::size_t>(L.landmark_block[l])].tangent_dim();
    ne.landmarks[l].H.setZero(d, d);
    ne.landmarks[l].b.setZero(d);
    ne.landmarks[l].coupling.clear();
  }

  std::vector<Eigen::MatrixXd> Jw;
  for (std::size_t r = 0; r < evals.size(); ++r) {
    const ResidualBlock& rb = p.residuals()[r];
    const Eigen::VectorXd rw = rb.sqrt_information * evals[r].residual;
    const double w = robust_weight(rw.squaredNorm(), cfg, rb.robust);
    const std::size_t nb = rb.blocks.size();
    Jw.resize(nb);
    for (std::size_t k = 0; k < nb; ++k) Jw[k] = rb.sqrt_information * evals[r].jacobians[k];

    for (std::size_t k1 = 0; k1 < nb; ++k1) {
      const auto b1 = static_cast<std::size_t>(rb.blocks[k1].index);
      const int o1 = L.offset[b1], l1 = L.landmark[b1];
      if (o1 < 0 && l1 < 0) continue;
      const Eigen::VectorXd g = w * Jw[k1].transpose() * rw;
      if (o1 >= 0)
        ne.b.segment(o1, g.size()) += g;
      else
        ne.landmarks[static_cast<std::size_t>(l1)].b += g;

      for (std::size_t k2 = 0; k2 < nb; ++k2) {
        const auto b2 = static_cast<std::size_t>(rb.blocks[k2].index);
        const int o2 = L.offset[b2], l2 = L.landmark[b2];
        if (o2 < 0 && l2 < 0) continue;
        if (o1 >= 0 && o2 >= 0) {
          ne.H.block(o1, o2, Jw[k1].cols(), Jw[k2].cols()).noalias() += w * Jw[k1].transpose() * Jw[k2];
        } else if (l1 >= 0 && l2 >= 0) {
          ne.landmarks[static_cast<std::size_t>(l1)].H.noalias() += w * Jw[k1].transpose() * Jw[k2];
        } else if (o1 >= 0 && l2 >= 0) {
          auto& ls = ne.landmarks[static_cast<std::size_t>(l2)];
          coupling_for(ls, static_cast<int>(b1), static_cast<int>(Jw[k1].cols())).noalias() +=
              w * Jw[k1].transpose() * Jw[k2];
        }
      }
    }
  }

  double g = ne.b.size() ? ne.b.cwiseAbs().maxCoeff() : 0.0;
  for (const auto& ls : ne.landmarks)
    if (ls.b.size()) g = std::max(g, ls.b.cwiseAbs().maxCoeff());
  ne.gradient_norm = g;
}

constexpr double kMinDiagonal = 1e-6;
constexpr double kMaxDiagonal = 1e32;

void damp(Eigen::MatrixXd& H, const Eigen::MatrixXd& undamped, double lambda) {
  for (Eigen::Index i = 0; i < H.rows(); ++i)
    H(i, i) += lambda * std::clamp(undamped(i, i), kMinDiagonal, kMaxDiagonal);
}

/// Per-block increments; empty vectors for constant blocks.
bool solve_step(const Problem& p, const Layout& L, const NormalEquations& ne, double lambda,
                std::vector<Eigen::VectorXd>& delta) {
  Eigen::MatrixXd S = ne.H;
  damp(S, ne.H, lambda);
  Eigen::VectorXd rhs = -ne.b;

  std::vector<Eigen::MatrixXd> Hinv(ne.landmarks.size());
  for (std::size_t l = 0; l < ne.landmarks.size(); ++l) {
    const LandmarkSystem& ls = ne.landmarks[l];
    Eigen::MatrixXd Hl = ls.H;
    damp(Hl, ls.H, lambda);
    Eigen::LLT<Eigen::MatrixXd> llt(Hl);
    if (llt.info() != Eigen::Success) return false;
    Hinv[l] = llt.solve(Eigen::MatrixXd::Identity(Hl.rows(), Hl.cols()));
    for (const auto& [ba, Wa] : ls.coupling) {
      const int oa = L.offset[static_cast<std::size_t>(ba)];
      const Eigen::MatrixXd WaHinv = Wa * Hinv[l];
      rhs.segment(oa, Wa.rows()).noalias() += WaHinv * ls.b;
      for (const auto& [bc, Wc] : ls.coupling) {
        const int oc = L.offset[static_cast<std::size_t>(bc)];
        S.block(oa, oc, Wa.rows(), Wc.rows()).noalias() -= WaHinv * Wc.transpose();
      }
    }
  }

  Eigen::VectorXd dp;
  if (S.rows() > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) return false;
    dp = llt.solve(rhs);
    if (!dp.allFinite()) return false;
  }

  delta.assign(p.blocks().size(), Eigen::VectorXd());
  for (std::size_t b = 0; b < p.blocks().size(); ++b)
    if (L.offset[b] >= 0) delta[b] = dp.segment(L.offset[b], p.blocks()[b].tangent_dim());
  for (std::size_t l = 0; l < ne.landmarks.size(); ++l) {
    const LandmarkSystem& ls = ne.landmarks[l];
    Eigen::VectorXd t = -ls.b;
    for (const auto& [ba, Wa] : ls.coupling) t.noalias() -= Wa.transpose() * delta[static_cast<std::size_t>(ba)];
    Eigen::VectorXd dl = Hinv[l] * t;
    if (!dl.allFinite()) return false;
    delta[static_cast<std::size_t>(L.landmark_block[l])] = std::move(dl);
  }
  return true;
}

double predicted_reduction(const Problem& p, const std::vector<BlockEvaluation>& evals, const LmConfig& cfg,
                           const std::vector<Eigen::VectorXd>& delta) {
  double pred = 0.0;
  for (std::size_t r = 0; r < evals.size(); ++r) {
    const ResidualBlock& rb = p.residuals()[r];
    Eigen::VectorXd lin = evals[r].residual;
    for (std::size_t k = 0; k < rb.blocks.size(); ++k) {
      const auto& d = delta[static_cast<std::size_t>(rb.blocks[k].index)];
      if (d.size()) lin.noalias() += evals[r].jacobians[k] * d;
    }
    const Eigen::VectorXd rw = rb.sqrt_information * evals[r].residual;
    const double w = robust_weight(rw.squaredNorm(), cfg, rb.robust);
    pred += w * (rw.squaredNorm() - (rb.sqrt_information * lin).squaredNorm());
  }
  return pred;
}

}  // namespace

std::optional<double> total_cost(const Problem& problem, const LmConfig& cfg) {
  auto evals = kernels::make_evaluation_storage(problem);
  if (!kernels::evaluate_residuals_serial(problem, false, evals)) return std::nullopt;
  return cost_of(problem, evals, cfg);
}

SolveReport solve(Problem& problem, const LmConfig& cfg, Execution exec, const IterationCallback& on_accept) {
  validate(cfg);
  problem.validate();
  const Layout layout = make_layout(problem, cfg);

  auto current = kernels::make_evaluation_storage(problem);
  auto trial = current;
  if (!kernels::evaluate_residuals(problem, true, current, exec))
    throw NumericalFailure("optimizer: initial point outside the residual domain");
  check_finite(current, true);

  SolveReport report;
  double cost = cost_of(problem, current, cfg);
  if (!std::isfinite(cost)) throw NumericalFailure("optimizer: non-finite initial cost");
  report.initial_cost = cost;
  report.cost_trace.push_back(cost);

  NormalEquations ne;
  std::vector<Eigen::VectorXd> delta;
  std::vector<std::vector<double>> saved(problem.blocks().size());
  double lambda = cfg.initial_damping;
  bool relinearize = true;

  while (true) {
    if (relinearize) {
      assemble(problem, layout, current, cfg, ne);
      relinearize = false;
    }
    report.final_gradient_norm = ne.gradient_norm;
    if (ne.gradient_norm <= cfg.gradient_tolerance) {
      report.termination = Termination::converged_gradient;
      break;
    }
    if (cost <= cfg.absolute_cost_tolerance) {
      report.termination = Termination::converged_cost;
      break;
    }
    if (report.iterations >= cfg.max_iterations) {
      report.termination = Termination::max_iterations;
      break;
    }
    ++report.iterations;

    if (!solve_step(problem, layout, ne, lambda, delta)) {
      lambda *= cfg.damping_up;
      if (lambda > cfg.max_damping) {
        report.termination = Termination::diverged;
        break;
      }
      continue;
    }
    const double predicted = predicted_reduction(problem, current, cfg, delta);

    for (std::size_t b = 0; b < problem.blocks().size(); ++b) {
      if (delta[b].size() == 0) continue;
      saved[b] = problem.blocks()[b].value;
      problem.retract(BlockId{static_cast<int>(b)},
                      std::span<const double>(delta[b].data(), static_cast<std::size_t>(delta[b].size())));
    }
    const bool in_domain = kernels::evaluate_residuals(problem, true, trial, exec);
    double new_cost = std::numeric_limits<double>::infinity();
    if (in_domain) {
      check_finite(trial, true);
      new_cost = cost_of(problem, trial, cfg);
    }

    if (in_domain && new_cost < cost) {
      const double decrease = cost - new_cost;
      const double old_cost = cost;
      cost = new_cost;
      std::swap(current, trial);
      relinearize = true;
      ++report.accepted_steps;
      report.cost_trace.push_back(cost);
      lambda = std::max(lambda * cfg.damping_down, 1e-300);
      if (on_accept) on_accept(problem);
      if (decrease <= cfg.relative_cost_tolerance * old_cost) {
        assemble(problem, layout, current, cfg, ne);
        report.final_gradient_norm = ne.gradient_norm;
        report.termination = Termination::converged_cost;
        break;
      }
      continue;
    }

    for (std::size_t b = 0; b < problem.blocks().size(); ++b)
      if (delta[b].size()) problem.block(BlockId{static_cast<int>(b)}).value = saved[b];
    const double tol = cfg.relative_cost_tolerance * cost + cfg.absolute_cost_tolerance;
    if (in_domain && predicted <= tol && std::abs(new_cost - cost) <= tol) {
      report.termination = Termination::converged_cost;
      break;
    }
    lambda *= cfg.damping_up;
    if (lambda > cfg.max_damping) {
      report.termination = Termination::diverged;
      break;
    }
  }
  report.final_cost = cost;
  return report;
}

JacobianCheckReport check_jacobians(const Problem& problem, double step) {
  JacobianCheckReport report;
  for (std::size_t r = 0; r < problem.residuals().size(); ++r) {
    const ResidualBlock& rb = problem.residuals()[r];
    const int dim = rb.function->dimension();
    const std::size_t nb = rb.blocks.size();

    std::vector<std::vector<double>> values(nb);
    for (std::size_t k = 0; k < nb; ++k) values[k] = problem.block(rb.blocks[k]).value;
    std::vector<kernels::RowMatrix> analytic(nb);
    std::vector<double*> jac(nb);
    for (std::size_t k = 0; k < nb; ++k) {
      analytic[k].resize(dim, problem.block(rb.blocks[k]).tangent_dim());
      jac[k] = analytic[k].data();
    }
    auto eval = [&](double* res, std::span<double* const> j) {
      std::vector<const double*> params(nb);
      for (std::size_t k = 0; k < nb; ++k) params[k] = values[k].data();
      return rb.function->evaluate(params, res, j);
    };
    Eigen::VectorXd res(dim), plus(dim), minus(dim);
    if (!eval(res.data(), jac)) continue;
    const std::vector<double*> none(nb, nullptr);

    for (std::size_t k = 0; k < nb; ++k) {
      const ParameterBlock& pb = problem.block(rb.blocks[k]);
      const std::vector<double> base = values[k];
      kernels::RowMatrix numeric(dim, pb.tangent_dim());
      bool ok = true;
      for (int t = 0; t < pb.tangent_dim() && ok; ++t) {
        for (double sign : {1.0, -1.0}) {
          values[k] = base;
          if (pb.kind == ParameterKind::euclidean) {
            values[k][static_cast<std::size_t>(t)] += sign * step;
          } else {
            Vec3 d = Vec3::Zero();
            d(t) = sign * step;
            const Mat3 R = Eigen::Map<const Mat3>(base.data()) * exact_rotation(d);
            std::copy(R.data(), R.data() + 9, values[k].begin());
          }
          ok = ok && eval(sign > 0 ? plus.data() : minus.data(), none);
        }
        numeric.col(t) = (plus - minus) / (2.0 * step);
      }
      values[k] = base;
      if (!ok) continue;
      const double err = (analytic[k] - numeric).norm() / std::max(numeric.norm(), 1e-12);
      ++report.checked_blocks;
      if (err > report.max_relative_error || report.worst_block < 0) {
        report.max_relative_error = std::max(err, report.max_relative_error);
        report.worst_residual = r;
        report.worst_block = static_cast<int>(k);
      }
    }
  }
  return report;
}

}  // namespace sfsm
