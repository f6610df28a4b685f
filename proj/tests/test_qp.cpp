#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "carbontrace/qp.hpp"

using namespace ctrace;

namespace {

// Brute-force LP oracle: enumerate all basic solutions (vertices) formed by
// activating n constraints out of {equalities, inequality sides, bounds},
// keep the feasible ones, return the best objective value and a minimizer.
// Independent of the interior point path.
struct VertexOracle {
  Eigen::VectorXd best_x;
  double best_obj = kInf;
  bool found = false;
};

VertexOracle enumerate_vertices(const QuadraticProgram& qp) {
  const Eigen::Index n = qp.num_vars();
  struct Hyperplane {
    Eigen::VectorXd a;
    double b;
  };
  std::vector<Hyperplane> planes;
  for (Eigen::Index i = 0; i < qp.eq_rhs.size(); ++i)
    planes.push_back({qp.eq_coeffs.row(i).transpose(), qp.eq_rhs(i)});
  const std::size_t num_eq = planes.size();
  for (Eigen::Index i = 0; i < qp.ineq_lower.size(); ++i) {
    if (std::isfinite(qp.ineq_lower(i)))
      planes.push_back({qp.ineq_coeffs.row(i).transpose(), qp.ineq_lower(i)});
    if (std::isfinite(qp.ineq_upper(i)))
      planes.push_back({qp.ineq_coeffs.row(i).transpose(), qp.ineq_upper(i)});
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e(i) = 1.0;
    if (std::isfinite(qp.lower(i))) planes.push_back({e, qp.lower(i)});
    if (std::isfinite(qp.upper(i))) planes.push_back({e, qp.upper(i)});
  }

  auto feasible = [&qp](const Eigen::VectorXd& x) {
    const double tol = 1e-7;
    if (qp.eq_rhs.size() &&
        (qp.eq_coeffs * x - qp.eq_rhs).cwiseAbs().maxCoeff() > tol)
      return false;
    if (qp.ineq_lower.size()) {
      Eigen::VectorXd cx = qp.ineq_coeffs * x;
      for (Eigen::Index i = 0; i < cx.size(); ++i) {
        if (cx(i) < qp.ineq_lower(i) - tol) return false;
        if (cx(i) > qp.ineq_upper(i) + tol) return false;
      }
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x(i) < qp.lower(i) - tol) return false;
      if (x(i) > qp.upper(i) + tol) return false;
    }
    return true;
  };

  VertexOracle out;
  std::vector<std::size_t> idx(static_cast<std::size_t>(n));
  // combinations: equalities are always in the active set
  std::vector<std::size_t> choose(planes.size() - num_eq);
  std::iota(choose.begin(), choose.end(), num_eq);
  const auto k = static_cast<std::size_t>(n) - num_eq;
  if (k > choose.size()) return out;

  std::vector<std::size_t> comb(k);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start,
                                                          std::size_t depth) {
    if (depth == k) {
      Eigen::MatrixXd M(n, n);
      Eigen::VectorXd b(n);
      for (std::size_t i = 0; i < num_eq; ++i) {
        M.row(static_cast<Eigen::Index>(i)) = planes[i].a.transpose();
        b(static_cast<Eigen::Index>(i)) = planes[i].b;
      }
      for (std::size_t i = 0; i < k; ++i) {
        M.row(static_cast<Eigen::Index>(num_eq + i)) =
            planes[comb[i]].a.transpose();
        b(static_cast<Eigen::Index>(num_eq + i)) = planes[comb[i]].b;
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
      if (lu.rank() < n) return;
      Eigen::VectorXd x = lu.solve(b);
      if (!feasible(x)) return;
      double obj = qp.objective_value(x);
      if (obj < out.best_obj - 1e-12) {
        out.best_obj = obj;
        out.best_x = x;
        out.found = true;
      }
      return;
    }
    for (std::size_t i = start; i < choose.size(); ++i) {
      comb[depth] = choose[i];
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
  return out;
}

}  // namespace

TEST_CASE("min x^2 subject to x >= 3") {
  auto qp = QuadraticProgram::make(1);
  qp.quadratic_diag(0) = 1.0;
  qp.lower(0) = 3.0;
  Solution s = solve_qp(qp);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.values(0) == Catch::Approx(3.0).margin(1e-6));
  CHECK(s.objective == Catch::Approx(9.0).margin(1e-5));
  CHECK(check_kkt(qp, s, 1e-6).pass);
}

TEST_CASE("2-variable box LP with one equality matches vertex enumeration") {
  // min 3x + 2y  s.t. x + y = 3, 0 <= x <= 2, 0 <= y <= 4
  auto qp = QuadraticProgram::make(2);
  qp.linear << 3.0, 2.0;
  qp.add_eq((Eigen::VectorXd(2) << 1.0, 1.0).finished(), 3.0);
  qp.lower << 0.0, 0.0;
  qp.upper << 2.0, 4.0;

  auto oracle = enumerate_vertices(qp);
  REQUIRE(oracle.found);
  // hand enumeration: feasible vertices (0,3) cost 6 and (2,1) cost 8
  CHECK(oracle.best_obj == Catch::Approx(6.0));

  Solution s = solve_qp(qp);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.objective == Catch::Approx(oracle.best_obj).margin(1e-6));
  CHECK(s.values(0) == Catch::Approx(0.0).margin(1e-6));
  CHECK(s.values(1) == Catch::Approx(3.0).margin(1e-6));
}

TEST_CASE("equality-infeasible program is flagged infeasible") {
  auto qp = QuadraticProgram::make(1);
  qp.add_eq((Eigen::VectorXd(1) << 1.0).finished(), 1.0);
  qp.add_eq((Eigen::VectorXd(1) << 1.0).finished(), 2.0);
  Solution s = solve_qp(qp);
  CHECK(s.status == SolveStatus::infeasible);
}

TEST_CASE("kkt check rejects a perturbed optimum") {
  auto qp = QuadraticProgram::make(1);
  qp.quadratic_diag(0) = 1.0;
  qp.lower(0) = 3.0;
  Solution s = solve_qp(qp);
  REQUIRE(s.status == SolveStatus::optimal);
  REQUIRE(check_kkt(qp, s, 1e-8).pass);
  s.values(0) += 0.1;
  auto rep = check_kkt(qp, s, 1e-8);
  CHECK_FALSE(rep.pass);
  CHECK(rep.stationarity_residual > 1e-8);
}

TEST_CASE("random LPs match vertex enumeration") {
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 4);
    auto qp = QuadraticProgram::make(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      qp.linear(i) = u(rng);
      qp.lower(i) = -1.0 - std::abs(u(rng));
      qp.upper(i) = 1.0 + std::abs(u(rng));
    }
    Eigen::VectorXd row(n);
    for (Eigen::Index i = 0; i < n; ++i) row(i) = 0.5 + std::abs(u(rng));
    qp.add_eq(row, 0.2);
    Eigen::VectorXd row2(n);
    for (Eigen::Index i = 0; i < n; ++i) row2(i) = u(rng);
    qp.add_ineq(row2, -2.0, 2.0);

    auto oracle = enumerate_vertices(qp);
    Solution s = solve_qp(qp);
    if (!oracle.found) {
      CHECK(s.status != SolveStatus::optimal);
      continue;
    }
    REQUIRE(s.status == SolveStatus::optimal);
    CHECK(s.objective == Catch::Approx(oracle.best_obj).margin(1e-5));
    CHECK(check_kkt(qp, s, 1e-6).pass);
  }
}

TEST_CASE("random strictly convex QPs satisfy KKT and projection oracle") {
  // min sum q_i (x_i - t_i)^2 with box bounds decouples: x_i = clamp(t_i)
  std::mt19937_64 rng(999);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 3;
    auto qp = QuadraticProgram::make(n);
    Eigen::VectorXd target(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double q = 0.5 + std::abs(u(rng));
      target(i) = u(rng);
      qp.quadratic_diag(i) = q;
      qp.linear(i) = -2.0 * q * target(i);
      qp.lower(i) = -1.0;
      qp.upper(i) = 1.0;
    }
    Solution s = solve_qp(qp);
    REQUIRE(s.status == SolveStatus::optimal);
    for (Eigen::Index i = 0; i < n; ++i) {
      double expect = std::clamp(target(i), -1.0, 1.0);
      CHECK(s.values(i) == Catch::Approx(expect).margin(1e-6));
    }
    CHECK(check_kkt(qp, s, 1e-6).pass);
  }
}

TEST_CASE("scaling the objective leaves the argmin unchanged") {
  auto qp = QuadraticProgram::make(2);
  qp.quadratic_diag << 1.0, 2.0;
  qp.linear << -2.0, 1.0;
  qp.add_ineq((Eigen::VectorXd(2) << 1.0, 1.0).finished(), -kInf, 1.5);
  qp.lower << 0.0, 0.0;
  qp.upper << 5.0, 5.0;
  Solution s1 = solve_qp(qp);
  REQUIRE(s1.status == SolveStatus::optimal);
  qp.quadratic_diag *= 7.0;
  qp.linear *= 7.0;
  Solution s2 = solve_qp(qp);
  REQUIRE(s2.status == SolveStatus::optimal);
  CHECK((s1.values - s2.values).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("determinism: identical program yields identical solution bytes") {
  auto qp = QuadraticProgram::make(3);
  qp.linear << 1.0, -1.0, 0.5;
  qp.add_eq((Eigen::VectorXd(3) << 1.0, 1.0, 1.0).finished(), 1.0);
  qp.lower.setZero();
  qp.upper.setConstant(1.0);
  Solution a = solve_qp(qp);
  Solution b = solve_qp(qp);
  REQUIRE(a.status == SolveStatus::optimal);
  REQUIRE(b.status == SolveStatus::optimal);
  CHECK(a.values == b.values);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("two-sided row with equal bounds is honored as an equality") {
  auto qp = QuadraticProgram::make(2);
  qp.quadratic_diag << 1.0, 1.0;
  qp.add_ineq((Eigen::VectorXd(2) << 1.0, 1.0).finished(), 2.0, 2.0);
  Solution s = solve_qp(qp);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.values(0) == Catch::Approx(1.0).margin(1e-6));
  CHECK(s.values(1) == Catch::Approx(1.0).margin(1e-6));
  CHECK(check_kkt(qp, s, 1e-6).pass);
}

TEST_CASE("unbounded LP is not reported optimal") {
  auto qp = QuadraticProgram::make(1);
  qp.linear(0) = -1.0;  // min -x, x free
  Solution s = solve_qp(qp);
  CHECK(s.status != SolveStatus::optimal);
  CHECK(s.status != SolveStatus::infeasible);
}
