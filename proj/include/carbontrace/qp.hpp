#pragma once

// Convex QP/LP kernel: diagonal-Hessian objective, equality rows, two-sided
// inequality rows, variable bounds. Solved by a dense Mehrotra
// predictor-corrector interior point method; an elastic phase-1 LP classifies
// non-converged problems as infeasible vs numeric failure. Deterministic:
// no randomization anywhere.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctrace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDefaultTol = 1e-8;

struct QuadraticProgram {
  // objective: sum_i quadratic_diag[i]*x[i]^2 + linear[i]*x[i] + constant
  Eigen::VectorXd quadratic_diag;
  Eigen::VectorXd linear;
  double constant = 0.0;

  Eigen::MatrixXd eq_coeffs;  // me x n
  Eigen::VectorXd eq_rhs;

  Eigen::MatrixXd ineq_coeffs;  // mi x n, lower <= C x <= upper
  Eigen::VectorXd ineq_lower;
  Eigen::VectorXd ineq_upper;

  Eigen::VectorXd lower;  // var bounds, +-inf allowed
  Eigen::VectorXd upper;

  Eigen::Index num_vars() const { return linear.size(); }

  static QuadraticProgram make(Eigen::Index n) {
    QuadraticProgram qp;
    qp.quadratic_diag = Eigen::VectorXd::Zero(n);
    qp.linear = Eigen::VectorXd::Zero(n);
    qp.eq_coeffs.resize(0, n);
    qp.eq_rhs.resize(0);
    qp.ineq_coeffs.resize(0, n);
    qp.ineq_lower.resize(0);
    qp.ineq_upper.resize(0);
    qp.lower = Eigen::VectorXd::Constant(n, -kInf);
    qp.upper = Eigen::VectorXd::Constant(n, kInf);
    return qp;
  }

  void add_eq(const Eigen::VectorXd& coeffs, double rhs) {
    eq_coeffs.conservativeResize(eq_coeffs.rows() + 1, num_vars());
    eq_coeffs.row(eq_coeffs.rows() - 1) = coeffs.transpose();
    eq_rhs.conservativeResize(eq_rhs.size() + 1);
    eq_rhs(eq_rhs.size() - 1) = rhs;
  }
  void add_ineq(const Eigen::VectorXd& coeffs, double lo, double hi) {
    ineq_coeffs.conservativeResize(ineq_coeffs.rows() + 1, num_vars());
    ineq_coeffs.row(ineq_coeffs.rows() - 1) = coeffs.transpose();
    ineq_lower.conservativeResize(ineq_lower.size() + 1);
    ineq_upper.conservativeResize(ineq_upper.size() + 1);
    ineq_lower(ineq_lower.size() - 1) = lo;
    ineq_upper(ineq_upper.size() - 1) = hi;
  }

  void validate() const {
    for (Eigen::Index i = 0; i < quadratic_diag.size(); ++i)
      if (quadratic_diag(i) < 0)
        throw std::invalid_argument("quadratic_diag must be >= 0 (convexity)");
    for (Eigen::Index i = 0; i < lower.size(); ++i)
      if (lower(i) > upper(i))
        throw std::invalid_argument("variable bound lower > upper at index " +
                                    std::to_string(i));
    for (Eigen::Index i = 0; i < ineq_lower.size(); ++i)
      if (ineq_lower(i) > ineq_upper(i))
        throw std::invalid_argument("constraint lower > upper at row " +
                                    std::to_string(i));
  }

  double objective_value(const Eigen::VectorXd& x) const {
    return quadratic_diag.dot(x.cwiseProduct(x)) + linear.dot(x) + constant;
  }
  Eigen::VectorXd objective_gradient(const Eigen::VectorXd& x) const {
    return 2.0 * quadratic_diag.cwiseProduct(x) + linear;
  }
};

enum class SolveStatus { optimal, infeasible, unbounded, numeric_failure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    default: return "numeric_failure";
  }
}

struct Solution {
  Eigen::VectorXd values;
  double objective = 0.0;
  SolveStatus status = SolveStatus::numeric_failure;
  Eigen::VectorXd eq_duals;          // y, one per equality row
  Eigen::VectorXd ineq_dual_lower;   // zl >= 0 per inequality row
  Eigen::VectorXd ineq_dual_upper;   // zu >= 0 per inequality row
  Eigen::VectorXd bound_dual_lower;  // wl >= 0 per variable
  Eigen::VectorXd bound_dual_upper;  // wu >= 0 per variable
  int iterations = 0;
  double wall_time = 0.0;
  std::string message;
};

struct KktReport {
  double primal_residual = 0.0;
  double stationarity_residual = 0.0;
  double complementarity_residual = 0.0;
  bool pass = false;
};

namespace ipm_detail {

struct Work {
  // slack/dual pairs; entries for infinite sides stay at benign values and
  // contribute nothing (mask arrays gate them)
  Eigen::VectorXd x, y;
  Eigen::VectorXd sl, su, zl, zu;  // general rows
  Eigen::VectorXd tl, tu, wl, wu;  // variable bounds
};

inline double inf_norm(const Eigen::VectorXd& v) {
  return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
}

// max alpha in (0,1] with v + alpha*dv >= (1-frac)*v, over masked entries
inline double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv,
                       const Eigen::Array<bool, Eigen::Dynamic, 1>& mask) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!mask(i)) continue;
    if (dv(i) < 0) alpha = std::min(alpha, -v(i) / dv(i));
  }
  return alpha;
}

}  // namespace ipm_detail

inline Solution solve_qp(const QuadraticProgram& qp, double tol = kDefaultTol);

namespace ipm_detail {

// Core interior point loop. Returns optimal on convergence; otherwise
// numeric_failure (caller classifies via the elastic phase).
inline Solution ipm_solve(const QuadraticProgram& qp0, double tol,
                          int max_iter = 200) {
  QuadraticProgram qp = qp0;  // rows with lower==upper become equalities
  {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < qp.ineq_lower.size(); ++i) {
      if (qp.ineq_upper(i) - qp.ineq_lower(i) < 1e-14 *
              (1.0 + std::abs(qp.ineq_lower(i)))) {
        qp.add_eq(qp.ineq_coeffs.row(i).transpose(), qp.ineq_lower(i));
      } else {
        keep.push_back(i);
      }
    }
    if (keep.size() != static_cast<std::size_t>(qp.ineq_lower.size())) {
      Eigen::MatrixXd C(keep.size(), qp.num_vars());
      Eigen::VectorXd lo(keep.size()), hi(keep.size());
      for (std::size_t k = 0; k < keep.size(); ++k) {
        C.row(k) = qp.ineq_coeffs.row(keep[k]);
        lo(k) = qp.ineq_lower(keep[k]);
        hi(k) = qp.ineq_upper(keep[k]);
      }
      qp.ineq_coeffs = C;
      qp.ineq_lower = lo;
      qp.ineq_upper = hi;
    }
  }

  const Eigen::Index n = qp.num_vars();
  const Eigen::Index me = qp.eq_rhs.size();
  const Eigen::Index mi = qp.ineq_lower.size();
  const Eigen::MatrixXd& A = qp.eq_coeffs;
  const Eigen::MatrixXd& C = qp.ineq_coeffs;

  Eigen::Array<bool, Eigen::Dynamic, 1> has_il(mi), has_iu(mi), has_bl(n),
      has_bu(n);
  for (Eigen::Index i = 0; i < mi; ++i) {
    has_il(i) = std::isfinite(qp.ineq_lower(i));
    has_iu(i) = std::isfinite(qp.ineq_upper(i));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    has_bl(i) = std::isfinite(qp.lower(i));
    has_bu(i) = std::isfinite(qp.upper(i));
  }

  Work w;
  w.x = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (has_bl(i) && has_bu(i))
      w.x(i) = 0.5 * (qp.lower(i) + qp.upper(i));
    else if (has_bl(i))
      w.x(i) = qp.lower(i) + 1.0;
    else if (has_bu(i))
      w.x(i) = qp.upper(i) - 1.0;
  }
  w.y = Eigen::VectorXd::Zero(me);
  auto init_slack = [](double raw) { return std::max(1.0, raw); };
  Eigen::VectorXd cx = mi ? Eigen::VectorXd(C * w.x) : Eigen::VectorXd(0);
  w.sl.resize(mi);
  w.su.resize(mi);
  w.zl = Eigen::VectorXd::Ones(mi);
  w.zu = Eigen::VectorXd::Ones(mi);
  for (Eigen::Index i = 0; i < mi; ++i) {
    w.sl(i) = has_il(i) ? init_slack(cx(i) - qp.ineq_lower(i)) : 1.0;
    w.su(i) = has_iu(i) ? init_slack(qp.ineq_upper(i) - cx(i)) : 1.0;
    if (!has_il(i)) w.zl(i) = 0.0;
    if (!has_iu(i)) w.zu(i) = 0.0;
  }
  w.tl.resize(n);
  w.tu.resize(n);
  w.wl = Eigen::VectorXd::Ones(n);
  w.wu = Eigen::VectorXd::Ones(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    w.tl(i) = has_bl(i) ? init_slack(w.x(i) - qp.lower(i)) : 1.0;
    w.tu(i) = has_bu(i) ? init_slack(qp.upper(i) - w.x(i)) : 1.0;
    if (!has_bl(i)) w.wl(i) = 0.0;
    if (!has_bu(i)) w.wu(i) = 0.0;
  }

  const double obj_scale = 1.0 + inf_norm(qp.linear) +
                           inf_norm(qp.quadratic_diag);
  double rhs_scale = 1.0 + inf_norm(qp.eq_rhs);
  for (Eigen::Index i = 0; i < mi; ++i) {
    if (has_il(i)) rhs_scale = std::max(rhs_scale, 1.0 + std::abs(qp.ineq_lower(i)));
    if (has_iu(i)) rhs_scale = std::max(rhs_scale, 1.0 + std::abs(qp.ineq_upper(i)));
  }

  const auto t0 = std::chrono::steady_clock::now();
  Solution sol;
  sol.message = "iteration limit reached";

  const Eigen::Index num_pairs =
      has_il.count() + has_iu.count() + has_bl.count() + has_bu.count();

  for (int iter = 0; iter <= max_iter; ++iter) {
    // residuals
    Eigen::VectorXd grad = qp.objective_gradient(w.x);
    Eigen::VectorXd rd = grad;
    if (me) rd += A.transpose() * w.y;
    if (mi) rd += C.transpose() * (w.zu - w.zl);
    rd += w.wu - w.wl;

    Eigen::VectorXd rp_eq = me ? Eigen::VectorXd(A * w.x - qp.eq_rhs)
                               : Eigen::VectorXd(0);
    if (mi) cx = C * w.x;
    Eigen::VectorXd r_sl(mi), r_su(mi);
    for (Eigen::Index i = 0; i < mi; ++i) {
      r_sl(i) = has_il(i) ? cx(i) - w.sl(i) - qp.ineq_lower(i) : 0.0;
      r_su(i) = has_iu(i) ? cx(i) + w.su(i) - qp.ineq_upper(i) : 0.0;
    }
    Eigen::VectorXd r_tl(n), r_tu(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      r_tl(i) = has_bl(i) ? w.x(i) - w.tl(i) - qp.lower(i) : 0.0;
      r_tu(i) = has_bu(i) ? w.x(i) + w.tu(i) - qp.upper(i) : 0.0;
    }

    double gap = 0.0;
    if (num_pairs > 0) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < mi; ++i) {
        if (has_il(i)) s += w.sl(i) * w.zl(i);
        if (has_iu(i)) s += w.su(i) * w.zu(i);
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        if (has_bl(i)) s += w.tl(i) * w.wl(i);
        if (has_bu(i)) s += w.tu(i) * w.wu(i);
      }
      gap = s / static_cast<double>(num_pairs);
    }

    const double prim_res =
        std::max({inf_norm(rp_eq), inf_norm(r_sl), inf_norm(r_su),
                  inf_norm(r_tl), inf_norm(r_tu)});
    const double dual_res = inf_norm(rd);

    if (prim_res <= tol * rhs_scale && dual_res <= tol * obj_scale &&
        gap <= tol * obj_scale) {
      sol.status = SolveStatus::optimal;
      sol.message = "converged";
      sol.iterations = iter;
      break;
    }
    if (iter == max_iter) {
      sol.iterations = iter;
      break;
    }
    // divergence guard: unbounded rays blow up x while staying feasible
    if (inf_norm(w.x) > 1e10 * rhs_scale && prim_res <= 1e-6 * rhs_scale) {
      sol.status = SolveStatus::unbounded;
      sol.message = "iterates diverging along a feasible ray";
      sol.iterations = iter;
      break;
    }

    // normal matrix H = 2Q + diag terms + C' D C
    Eigen::VectorXd dxdiag = 2.0 * qp.quadratic_diag;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (has_bl(i)) dxdiag(i) += w.wl(i) / w.tl(i);
      if (has_bu(i)) dxdiag(i) += w.wu(i) / w.tu(i);
    }
    Eigen::VectorXd drow = Eigen::VectorXd::Zero(mi);
    for (Eigen::Index i = 0; i < mi; ++i) {
      if (has_il(i)) drow(i) += w.zl(i) / w.sl(i);
      if (has_iu(i)) drow(i) += w.zu(i) / w.su(i);
    }

    const double reg = 1e-12 * (1.0 + obj_scale);
    Eigen::MatrixXd M(n + me, n + me);
    M.setZero();
    M.topLeftCorner(n, n) = dxdiag.asDiagonal();
    if (mi) M.topLeftCorner(n, n) += C.transpose() * drow.asDiagonal() * C;
    M.topLeftCorner(n, n) += reg * Eigen::MatrixXd::Identity(n, n);
    if (me) {
      M.topRightCorner(n, me) = A.transpose();
      M.bottomLeftCorner(me, n) = A;
      M.bottomRightCorner(me, me) = -reg * Eigen::MatrixXd::Identity(me, me);
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);

    // assembles the reduced rhs and recovers slack/dual steps
    struct Step {
      Eigen::VectorXd dx, dy, dsl, dsu, dzl, dzu, dtl, dtu, dwl, dwu;
    };
    auto solve_step = [&](const Eigen::VectorXd& rc_sl,
                          const Eigen::VectorXd& rc_su,
                          const Eigen::VectorXd& rc_tl,
                          const Eigen::VectorXd& rc_tu) {
      Step st;
      Eigen::VectorXd rx = -rd;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (has_bl(i)) rx(i) += (rc_tl(i) - w.wl(i) * r_tl(i)) / w.tl(i);
        if (has_bu(i)) rx(i) -= (rc_tu(i) + w.wu(i) * r_tu(i)) / w.tu(i);
      }
      if (mi) {
        Eigen::VectorXd rrow = Eigen::VectorXd::Zero(mi);
        for (Eigen::Index i = 0; i < mi; ++i) {
          if (has_il(i)) rrow(i) += (rc_sl(i) - w.zl(i) * r_sl(i)) / w.sl(i);
          if (has_iu(i)) rrow(i) -= (rc_su(i) + w.zu(i) * r_su(i)) / w.su(i);
        }
        rx += C.transpose() * rrow;
      }
      Eigen::VectorXd rhs(n + me);
      rhs.head(n) = rx;
      if (me) rhs.tail(me) = -rp_eq;
      Eigen::VectorXd sol_v = lu.solve(rhs);
      st.dx = sol_v.head(n);
      st.dy = me ? Eigen::VectorXd(sol_v.tail(me)) : Eigen::VectorXd(0);

      Eigen::VectorXd cdx = mi ? Eigen::VectorXd(C * st.dx)
                               : Eigen::VectorXd(0);
      st.dsl.resize(mi);
      st.dsu.resize(mi);
      st.dzl = Eigen::VectorXd::Zero(mi);
      st.dzu = Eigen::VectorXd::Zero(mi);
      for (Eigen::Index i = 0; i < mi; ++i) {
        st.dsl(i) = has_il(i) ? cdx(i) + r_sl(i) : 0.0;
        st.dsu(i) = has_iu(i) ? -cdx(i) - r_su(i) : 0.0;
        if (has_il(i))
          st.dzl(i) = (rc_sl(i) - w.zl(i) * st.dsl(i)) / w.sl(i);
        if (has_iu(i))
          st.dzu(i) = (rc_su(i) - w.zu(i) * st.dsu(i)) / w.su(i);
      }
      st.dtl.resize(n);
      st.dtu.resize(n);
      st.dwl = Eigen::VectorXd::Zero(n);
      st.dwu = Eigen::VectorXd::Zero(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        st.dtl(i) = has_bl(i) ? st.dx(i) + r_tl(i) : 0.0;
        st.dtu(i) = has_bu(i) ? -st.dx(i) - r_tu(i) : 0.0;
        if (has_bl(i)) st.dwl(i) = (rc_tl(i) - w.wl(i) * st.dtl(i)) / w.tl(i);
        if (has_bu(i)) st.dwu(i) = (rc_tu(i) - w.wu(i) * st.dtu(i)) / w.tu(i);
      }
      return st;
    };

    // predictor (affine scaling)
    Eigen::VectorXd rc_sl(mi), rc_su(mi), rc_tl(n), rc_tu(n);
    for (Eigen::Index i = 0; i < mi; ++i) {
      rc_sl(i) = -w.sl(i) * w.zl(i);
      rc_su(i) = -w.su(i) * w.zu(i);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      rc_tl(i) = -w.tl(i) * w.wl(i);
      rc_tu(i) = -w.tu(i) * w.wu(i);
    }
    Step aff = solve_step(rc_sl, rc_su, rc_tl, rc_tu);

    auto primal_step = [&](const Step& st) {
      double a = 1.0;
      a = std::min(a, max_step(w.sl, st.dsl, has_il));
      a = std::min(a, max_step(w.su, st.dsu, has_iu));
      a = std::min(a, max_step(w.tl, st.dtl, has_bl));
      a = std::min(a, max_step(w.tu, st.dtu, has_bu));
      return a;
    };
    auto dual_step = [&](const Step& st) {
      double a = 1.0;
      a = std::min(a, max_step(w.zl, st.dzl, has_il));
      a = std::min(a, max_step(w.zu, st.dzu, has_iu));
      a = std::min(a, max_step(w.wl, st.dwl, has_bl));
      a = std::min(a, max_step(w.wu, st.dwu, has_bu));
      return a;
    };

    double ap_aff = primal_step(aff);
    double ad_aff = dual_step(aff);
    double gap_aff = 0.0;
    if (num_pairs > 0) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < mi; ++i) {
        if (has_il(i))
          s += (w.sl(i) + ap_aff * aff.dsl(i)) * (w.zl(i) + ad_aff * aff.dzl(i));
        if (has_iu(i))
          s += (w.su(i) + ap_aff * aff.dsu(i)) * (w.zu(i) + ad_aff * aff.dzu(i));
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        if (has_bl(i))
          s += (w.tl(i) + ap_aff * aff.dtl(i)) * (w.wl(i) + ad_aff * aff.dwl(i));
        if (has_bu(i))
          s += (w.tu(i) + ap_aff * aff.dtu(i)) * (w.wu(i) + ad_aff * aff.dwu(i));
      }
      gap_aff = s / static_cast<double>(num_pairs);
    }

    double sigma = 0.0;
    if (gap > 1e-300) {
      double ratio = gap_aff / gap;
      sigma = std::min(1.0, std::max(0.0, ratio * ratio * ratio));
    }
    const double mu_target = sigma * gap;

    // corrector
    for (Eigen::Index i = 0; i < mi; ++i) {
      rc_sl(i) = has_il(i)
                     ? mu_target - w.sl(i) * w.zl(i) - aff.dsl(i) * aff.dzl(i)
                     : 0.0;
      rc_su(i) = has_iu(i)
                     ? mu_target - w.su(i) * w.zu(i) - aff.dsu(i) * aff.dzu(i)
                     : 0.0;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      rc_tl(i) = has_bl(i)
                     ? mu_target - w.tl(i) * w.wl(i) - aff.dtl(i) * aff.dwl(i)
                     : 0.0;
      rc_tu(i) = has_bu(i)
                     ? mu_target - w.tu(i) * w.wu(i) - aff.dtu(i) * aff.dwu(i)
                     : 0.0;
    }
    Step st = solve_step(rc_sl, rc_su, rc_tl, rc_tu);

    const double frac = 0.99995;
    double ap = frac * primal_step(st);
    double ad = frac * dual_step(st);
    if (!std::isfinite(ap) || !std::isfinite(ad)) {
      sol.message = "non-finite step";
      sol.iterations = iter;
      break;
    }

    w.x += ap * st.dx;
    w.sl += ap * st.dsl;
    w.su += ap * st.dsu;
    w.tl += ap * st.dtl;
    w.tu += ap * st.dtu;
    w.y += ad * st.dy;
    w.zl += ad * st.dzl;
    w.zu += ad * st.dzu;
    w.wl += ad * st.dwl;
    w.wu += ad * st.dwu;
  }

  sol.values = w.x;
  sol.objective = qp.objective_value(w.x);
  sol.eq_duals = w.y.head(qp0.eq_rhs.size());
  // map general-row duals back to the caller's row indexing
  sol.ineq_dual_lower = Eigen::VectorXd::Zero(qp0.ineq_lower.size());
  sol.ineq_dual_upper = Eigen::VectorXd::Zero(qp0.ineq_lower.size());
  {
    Eigen::Index k = 0;           // surviving two-sided rows in order
    Eigen::Index eq_extra = qp0.eq_rhs.size();  // converted rows appended here
    for (Eigen::Index i = 0; i < qp0.ineq_lower.size(); ++i) {
      if (qp0.ineq_upper(i) - qp0.ineq_lower(i) <
          1e-14 * (1.0 + std::abs(qp0.ineq_lower(i)))) {
        double y = w.y(eq_extra++);
        // equality dual split into the sign-appropriate side
        if (y >= 0)
          sol.ineq_dual_upper(i) = y;
        else
          sol.ineq_dual_lower(i) = -y;
      } else {
        sol.ineq_dual_lower(i) = w.zl(k);
        sol.ineq_dual_upper(i) = w.zu(k);
        ++k;
      }
    }
  }
  sol.bound_dual_lower = w.wl;
  sol.bound_dual_upper = w.wu;
  sol.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return sol;
}

// Elastic feasibility LP: minimum total constraint relaxation. A strictly
// positive optimum certifies infeasibility of the original program.
inline double min_infeasibility(const QuadraticProgram& qp,
                                std::string* detail = nullptr) {
  const Eigen::Index n = qp.num_vars();
  const Eigen::Index me = qp.eq_rhs.size();
  const Eigen::Index mi = qp.ineq_lower.size();
  // vars: x, t_eq+ (me), t_eq- (me), t_ineq (mi)
  const Eigen::Index ntot = n + 2 * me + mi;
  QuadraticProgram e = QuadraticProgram::make(ntot);
  e.linear.segment(n, 2 * me + mi).setOnes();
  e.lower.head(n) = qp.lower;
  e.upper.head(n) = qp.upper;
  e.lower.segment(n, 2 * me + mi).setZero();

  e.eq_coeffs = Eigen::MatrixXd::Zero(me, ntot);
  e.eq_coeffs.topLeftCorner(me, n) = qp.eq_coeffs;
  for (Eigen::Index i = 0; i < me; ++i) {
    e.eq_coeffs(i, n + i) = 1.0;
    e.eq_coeffs(i, n + me + i) = -1.0;
  }
  e.eq_rhs = qp.eq_rhs;

  e.ineq_coeffs = Eigen::MatrixXd::Zero(2 * mi, ntot);
  e.ineq_lower.resize(2 * mi);
  e.ineq_upper.resize(2 * mi);
  for (Eigen::Index i = 0; i < mi; ++i) {
    // C x + t >= l  and  C x - t <= u
    e.ineq_coeffs.block(2 * i, 0, 1, n) = qp.ineq_coeffs.row(i);
    e.ineq_coeffs(2 * i, n + 2 * me + i) = 1.0;
    e.ineq_lower(2 * i) = qp.ineq_lower(i);
    e.ineq_upper(2 * i) = kInf;
    e.ineq_coeffs.block(2 * i + 1, 0, 1, n) = qp.ineq_coeffs.row(i);
    e.ineq_coeffs(2 * i + 1, n + 2 * me + i) = -1.0;
    e.ineq_lower(2 * i + 1) = -kInf;
    e.ineq_upper(2 * i + 1) = qp.ineq_upper(i);
  }

  Solution s = ipm_solve(e, 1e-9);
  if (s.status != SolveStatus::optimal)
    return -1.0;  // classification unavailable
  if (detail != nullptr) {
    std::ostringstream os;
    for (Eigen::Index i = 0; i < me; ++i) {
      double t = s.values(n + i) + s.values(n + me + i);
      if (t > 1e-6) os << " eq[" << i << "] needs " << t << ";";
    }
    for (Eigen::Index i = 0; i < mi; ++i) {
      double t = s.values(n + 2 * me + i);
      if (t > 1e-6) os << " ineq[" << i << "] needs " << t << ";";
    }
    *detail = os.str();
  }
  return s.objective;
}

}  // namespace ipm_detail

inline Solution solve_qp(const QuadraticProgram& qp, double tol) {
  qp.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Solution s = ipm_detail::ipm_solve(qp, tol);
  if (s.status != SolveStatus::optimal &&
      s.status != SolveStatus::unbounded) {
    std::string detail;
    double infeas = ipm_detail::min_infeasibility(qp, &detail);
    double scale = 1.0 + ipm_detail::inf_norm(qp.eq_rhs);
    if (infeas > 1e-6 * scale) {
      s.status = SolveStatus::infeasible;
      s.message = "constraints cannot be satisfied; minimum relaxation " +
                  std::to_string(infeas) + ";" + detail;
    } else if (infeas >= 0.0) {
      s.status = SolveStatus::numeric_failure;
      s.message = "feasible but did not converge: " + s.message;
    }
  }
  s.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return s;
}

// Residuals evaluated from the solution's primal and dual values alone;
// independent of the solver's internal state.
inline KktReport check_kkt(const QuadraticProgram& qp, const Solution& sol,
                           double tol = 1e-6) {
  KktReport rep;
  const Eigen::Index n = qp.num_vars();
  const Eigen::VectorXd& x = sol.values;

  double prim = 0.0;
  if (qp.eq_rhs.size())
    prim = ipm_detail::inf_norm(qp.eq_coeffs * x - qp.eq_rhs);
  Eigen::VectorXd cx;
  if (qp.ineq_lower.size()) {
    cx = qp.ineq_coeffs * x;
    for (Eigen::Index i = 0; i < cx.size(); ++i) {
      if (std::isfinite(qp.ineq_lower(i)))
        prim = std::max(prim, qp.ineq_lower(i) - cx(i));
      if (std::isfinite(qp.ineq_upper(i)))
        prim = std::max(prim, cx(i) - qp.ineq_upper(i));
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isfinite(qp.lower(i))) prim = std::max(prim, qp.lower(i) - x(i));
    if (std::isfinite(qp.upper(i))) prim = std::max(prim, x(i) - qp.upper(i));
  }
  rep.primal_residual = prim;

  Eigen::VectorXd rd = qp.objective_gradient(x);
  if (qp.eq_rhs.size()) rd += qp.eq_coeffs.transpose() * sol.eq_duals;
  if (qp.ineq_lower.size())
    rd += qp.ineq_coeffs.transpose() *
          (sol.ineq_dual_upper - sol.ineq_dual_lower);
  rd += sol.bound_dual_upper - sol.bound_dual_lower;
  rep.stationarity_residual = ipm_detail::inf_norm(rd);

  double comp = 0.0;
  for (Eigen::Index i = 0; i < qp.ineq_lower.size(); ++i) {
    if (std::isfinite(qp.ineq_lower(i)))
      comp = std::max(comp,
                      std::abs(sol.ineq_dual_lower(i) *
                               (cx(i) - qp.ineq_lower(i))));
    if (std::isfinite(qp.ineq_upper(i)))
      comp = std::max(comp,
                      std::abs(sol.ineq_dual_upper(i) *
                               (qp.ineq_upper(i) - cx(i))));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isfinite(qp.lower(i)))
      comp = std::max(comp,
                      std::abs(sol.bound_dual_lower(i) * (x(i) - qp.lower(i))));
    if (std::isfinite(qp.upper(i)))
      comp = std::max(comp,
                      std::abs(sol.bound_dual_upper(i) * (qp.upper(i) - x(i))));
  }
  rep.complementarity_residual = comp;

  const double obj_scale =
      1.0 + ipm_detail::inf_norm(qp.linear) + std::abs(sol.objective);
  rep.pass = prim <= tol * (1.0 + ipm_detail::inf_norm(qp.eq_rhs)) &&
             rep.stationarity_residual <= tol * obj_scale &&
             comp <= tol * obj_scale;
  return rep;
}

}  // namespace ctrace
