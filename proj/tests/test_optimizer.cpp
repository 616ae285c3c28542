#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "sfsm/errors.hpp"
#include "sfsm/optimizer.hpp"

using namespace sfsm;

namespace {

/// r = a^T x - b for a block of size n.
class LinearResidual final : public ResidualFunction {
 public:
  LinearResidual(Eigen::VectorXd a, double b) : a_(std::move(a)), b_(b) {}
  int dimension() const override { return 1; }
  bool evaluate(std::span<const double* const> p, double* r, std::span<double* const> J) const override {
    r[0] = -b_;
    for (Eigen::Index k = 0; k < a_.size(); ++k) r[0] += a_[k] * p[0][k];
    if (!J.empty() && J[0])
      for (Eigen::Index k = 0; k < a_.size(); ++k) J[0][k] = a_[k];
    return true;
  }

 private:
  Eigen::VectorXd a_;
  double b_;
};

class Rosenbrock final : public ResidualFunction {
 public:
  int dimension() const override { return 2; }
  bool evaluate(std::span<const double* const> p, double* r, std::span<double* const> J) const override {
    const double x = p[0][0], y = p[0][1];
    r[0] = 10.0 * (y - x * x);
    r[1] = 1.0 - x;
    if (!J.empty() && J[0]) {
      J[0][0] = -20.0 * x;
      J[0][1] = 10.0;
      J[0][2] = -1.0;
      J[0][3] = 0.0;
    }
    return true;
  }
};

/// r = R v - target, on an SO3 block; Jacobian -R [v]x.
class RotateResidual final : public ResidualFunction {
 public:
  RotateResidual(Vec3 v, Vec3 target) : v_(v), t_(target) {}
  int dimension() const override { return 3; }
  bool evaluate(std::span<const double* const> p, double* r, std::span<double* const> J) const override {
    const Eigen::Map<const Mat3> R(p[0]);
    Eigen::Map<Vec3>{r} = R * v_ - t_;
    if (!J.empty() && J[0]) Eigen::Map<Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>{J[0]} = -R * skew(v_);
    return true;
  }

 private:
  Vec3 v_, t_;
};

/// r = s * l - m, coupling a Euclidean "pose" scalar s and a landmark scalar l.
class ProductResidual final : public ResidualFunction {
 public:
  explicit ProductResidual(double m) : m_(m) {}
  int dimension() const override { return 1; }
  bool evaluate(std::span<const double* const> p, double* r, std::span<double* const> J) const override {
    r[0] = p[0][0] * p[1][0] - m_;
    if (!J.empty()) {
      if (J[0]) J[0][0] = p[1][0];
      if (J[1]) J[1][0] = p[0][0];
    }
    return true;
  }

 private:
  double m_;
};

Eigen::MatrixXd eye(int n) { return Eigen::MatrixXd::Identity(n, n); }

bool non_increasing(const std::vector<double>& t) {
  for (std::size_t k = 1; k < t.size(); ++k)
    if (t[k] > t[k - 1]) return false;
  return true;
}

}  // namespace

TEST_CASE("huber cost") {
  CHECK(huber_cost(0.0, 1.0) == 0.0);
  CHECK(huber_cost(0.25, 1.0) == 0.25);
  CHECK(huber_cost(4.0, 1.0) == 3.0);
  const double k = 1.345;
  CHECK(huber_cost(k * k, k) == doctest::Approx(k * k));
  const double h = 1e-6;
  const double left = (huber_cost(std::pow(k - h, 2), k) - huber_cost(std::pow(k - 2 * h, 2), k)) / h;
  const double right = (huber_cost(std::pow(k + 2 * h, 2), k) - huber_cost(std::pow(k + h, 2), k)) / h;
  CHECK(left == doctest::Approx(right).epsilon(1e-5));
}

TEST_CASE("config validation") {
  LmConfig c;
  CHECK_NOTHROW(validate(c));
  c.damping_up = 0.9;
  CHECK_THROWS_AS(validate(c), ValidationError);
  c = {};
  c.damping_down = 1.5;
  CHECK_THROWS_AS(validate(c), ValidationError);
  c = {};
  c.huber_threshold = 0;
  CHECK_THROWS_AS(validate(c), ValidationError);
  CHECK(termination_from_string(to_string(Termination::converged_gradient)) == Termination::converged_gradient);
  CHECK_THROWS_AS(termination_from_string("nope"), ParseError);
}

TEST_CASE("1D linear residual") {
  Problem p;
  const BlockId x = p.add_euclidean(Eigen::VectorXd::Zero(1));
  p.add_residual(std::make_shared<LinearResidual>(Eigen::VectorXd::Ones(1), 3.0), {x}, eye(1), false);
  const SolveReport r = solve(p, LmConfig{});
  CHECK(std::abs(p.vector(x)[0] - 3.0) < 1e-10);
  CHECK(r.iterations <= 3);
  CHECK(converged(r.termination));
  CHECK(r.cost_trace.front() == 9.0);
}

TEST_CASE("Rosenbrock") {
  Problem p;
  const BlockId x = p.add_euclidean(Eigen::Vector2d(-1.2, 1.0));
  p.add_residual(std::make_shared<Rosenbrock>(), {x}, eye(2), false);
  const SolveReport r = solve(p, LmConfig{});
  CHECK((p.vector(x) - Eigen::Vector2d(1, 1)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(converged(r.termination));
  CHECK(non_increasing(r.cost_trace));
  CHECK(r.cost_trace.size() == static_cast<std::size_t>(r.accepted_steps) + 1);
}

TEST_CASE("linear least squares in one accepted step") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  const int n = 5, m = 20;
  Eigen::MatrixXd A(m, n);
  Eigen::VectorXd b(m);
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < n; ++k) A(i, k) = g(rng);
    b[i] = g(rng);
  }
  Problem p;
  const BlockId x = p.add_euclidean(Eigen::VectorXd::Zero(n));
  for (int i = 0; i < m; ++i) p.add_residual(std::make_shared<LinearResidual>(A.row(i).transpose(), b[i]), {x}, eye(1));
  LmConfig cfg;
  cfg.use_huber = false;
  cfg.initial_damping = 1e-12;
  const SolveReport r = solve(p, cfg);
  const Eigen::VectorXd ref = (A.transpose() * A).ldlt().solve(A.transpose() * b);
  CHECK((p.vector(x) - ref).cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE(r.cost_trace.size() >= 2);
  CHECK(r.cost_trace[1] == doctest::Approx((A * ref - b).squaredNorm()).epsilon(1e-10));
}

TEST_CASE("whitening scales the quadratic cost") {
  for (double c : {0.5, 2.0, 10.0}) {
    Problem p;
    const BlockId x = p.add_euclidean(Eigen::VectorXd::Constant(1, 0.3));
    p.add_residual(std::make_shared<LinearResidual>(Eigen::VectorXd::Ones(1), 0.0), {x}, eye(1));
    Problem q;
    const BlockId y = q.add_euclidean(Eigen::VectorXd::Constant(1, 0.3));
    q.add_residual(std::make_shared<LinearResidual>(Eigen::VectorXd::Ones(1), 0.0), {y}, eye(1) * c * c);
    CHECK(*total_cost(q, LmConfig{}) == doctest::Approx(*total_cost(p, LmConfig{}) / (c * c)).epsilon(1e-14));
  }
}

TEST_CASE("Huber down-weights a gross outlier") {
  Problem p;
  const BlockId x = p.add_euclidean(Eigen::VectorXd::Zero(1));
  for (int i = 0; i < 10; ++i)
    p.add_residual(std::make_shared<LinearResidual>(Eigen::VectorXd::Ones(1), 1.0 + 0.01 * (i - 4.5)), {x}, eye(1));
  p.add_residual(std::make_shared<LinearResidual>(Eigen::VectorXd::Ones(1), 100.0), {x}, eye(1));
  Problem q = p;
  LmConfig robust, plain;
  plain.use_huber = false;
  solve(p, robust);
  solve(q, plain);
  CHECK(std::abs(p.vector(x)[0] - 1.0) < 0.2);
  CHECK(q.vector(x)[0] > 9.0);
}

TEST_CASE("all-constant problems are rejected") {
  Problem p;
  const BlockId x = p.add_euclidean(Eigen::VectorXd::Zero(1), true);
  p.add_residual(std::make_shared<LinearResidual>(Eigen::VectorXd::Ones(1), 3.0), {x}, eye(1));
  CHECK_THROWS_AS(p.validate(), ValidationError);
  CHECK_THROWS_AS(solve(p, LmConfig{}), ValidationError);
  Problem empty;
  empty.add_euclidean(Eigen::VectorXd::Zero(1));
  CHECK_THROWS_AS(empty.validate(), ValidationError);
}

TEST_CASE("covariance must be SPD") {
  Problem p;
  const BlockId x = p.add_euclidean(Eigen::VectorXd::Zero(1));
  CHECK_THROWS_AS(p.add_residual(std::make_shared<LinearResidual>(Eigen::VectorXd::Ones(1), 3.0), {x}, -eye(1)),
                  ValidationError);
  CHECK_THROWS_AS(p.add_residual(std::make_shared<LinearResidual>(Eigen::VectorXd::Ones(1), 3.0), {x}, eye(2)),
                  ValidationError);
}

TEST_CASE("SO3 blocks stay on the manifold") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  Problem p;
  const BlockId R = p.add_so3(exact_rotation(Vec3(0.3, -0.2, 0.1)));
  const Mat3 truth = exact_rotation(Vec3(-0.5, 0.4, 0.9));
  for (int k = 0; k < 6; ++k) {
    const Vec3 v(g(rng), g(rng), g(rng));
    p.add_residual(std::make_shared<RotateResidual>(v, truth * v), {R}, eye(3));
  }
  int checks = 0;
  const SolveReport r = solve(p, LmConfig{}, Execution::serial, [&](const Problem& q) {
    const Mat3 M = q.rotation(R);
    CHECK((M.transpose() * M - Mat3::Identity()).norm() < 1e-9);
    CHECK(M.determinant() == doctest::Approx(1.0));
    ++checks;
  });
  CHECK(checks == r.accepted_steps);
  CHECK((p.rotation(R) - truth).norm() < 1e-9);
  CHECK(check_jacobians(p).max_relative_error < 1e-6);
}

TEST_CASE("lower bounds project the update") {
  Problem p;
  const BlockId x = p.add_euclidean(Eigen::VectorXd::Constant(1, 1.0));
  p.block(x).lower_bound = 0.5;
  p.add_residual(std::make_shared<LinearResidual>(Eigen::VectorXd::Ones(1), -2.0), {x}, eye(1));
  const SolveReport r = solve(p, LmConfig{});
  CHECK(p.vector(x)[0] == 0.5);
  CHECK(non_increasing(r.cost_trace));
}

TEST_CASE("Schur elimination matches the dense solve") {
  auto build = [](bool schur, Problem& p, std::vector<BlockId>& s, std::vector<BlockId>& l) {
    std::mt19937_64 local(9);
    std::uniform_real_distribution<double> v(0.5, 2.0);
    s.push_back(p.add_euclidean(Eigen::VectorXd::Constant(1, 1.0), true));
    for (int i = 0; i < 3; ++i) s.push_back(p.add_euclidean(Eigen::VectorXd::Constant(1, 1.0)));
    for (int j = 0; j < 5; ++j) l.push_back(p.add_euclidean(Eigen::VectorXd::Constant(1, 1.0), false, schur));
    for (BlockId a : s)
      for (BlockId b : l) p.add_residual(std::make_shared<ProductResidual>(v(local)), {a, b}, eye(1));
  };
  Problem a, b;
  std::vector<BlockId> sa, la, sb, lb;
  build(true, a, sa, la);
  build(false, b, sb, lb);
  LmConfig with, without;
  without.use_schur = false;
  const SolveReport ra = solve(a, with), rb = solve(b, without);
  CHECK(ra.final_cost == doctest::Approx(rb.final_cost).epsilon(1e-8));
  for (std::size_t k = 0; k < sa.size(); ++k)
    CHECK(a.vector(sa[k])[0] == doctest::Approx(b.vector(sb[k])[0]).epsilon(1e-6));
  CHECK(non_increasing(ra.cost_trace));
}

TEST_CASE("gradient tolerance is honoured at convergence") {
  Problem p;
  const BlockId x = p.add_euclidean(Eigen::Vector2d(-1.2, 1.0));
  p.add_residual(std::make_shared<Rosenbrock>(), {x}, eye(2), false);
  LmConfig cfg;
  cfg.relative_cost_tolerance = 1e-30;
  cfg.absolute_cost_tolerance = 1e-300;
  cfg.gradient_tolerance = 1e-9;
  const SolveReport r = solve(p, cfg);
  if (r.termination == Termination::converged_gradient) CHECK(r.final_gradient_norm <= cfg.gradient_tolerance);
  CHECK(converged(r.termination));
}

TEST_CASE("check_jacobians flags a wrong Jacobian") {
  class Wrong final : public ResidualFunction {
   public:
    int dimension() const override { return 1; }
    bool evaluate(std::span<const double* const> p, double* r, std::span<double* const> J) const override {
      r[0] = p[0][0] * p[0][0];
      if (!J.empty() && J[0]) J[0][0] = p[0][0];
      return true;
    }
  };
  Problem p;
  const BlockId x = p.add_euclidean(Eigen::VectorXd::Constant(1, 2.0));
  p.add_residual(std::make_shared<Wrong>(), {x}, eye(1));
  CHECK(check_jacobians(p).max_relative_error == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("serial and parallel solves agree bit for bit") {
  auto build = [](Problem& p) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> v(0.5, 2.0);
    std::vector<BlockId> s, l;
    s.push_back(p.add_euclidean(Eigen::VectorXd::Constant(1, 1.0), true));
    for (int i = 0; i < 4; ++i) s.push_back(p.add_euclidean(Eigen::VectorXd::Constant(1, 1.0)));
    for (int j = 0; j < 30; ++j) l.push_back(p.add_euclidean(Eigen::VectorXd::Constant(1, 1.0), false, true));
    for (BlockId a : s)
      for (BlockId b : l) p.add_residual(std::make_shared<ProductResidual>(v(rng)), {a, b}, eye(1));
  };
  Problem a, b;
  build(a);
  build(b);
  const SolveReport ra = solve(a, LmConfig{}, Execution::serial);
  const SolveReport rb = solve(b, LmConfig{}, Execution::parallel);
  CHECK(ra.cost_trace == rb.cost_trace);
  for (std::size_t k = 0; k < a.blocks().size(); ++k) CHECK(a.blocks()[k].value == b.blocks()[k].value);
}
