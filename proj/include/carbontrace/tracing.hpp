#pragma once

// Generator-to-load distribution factor fitting and the derived per-bus
// emission signals: nodal emissions, average rate (ANCE), marginal rate
// (LMCE), plus a finite-difference sensitivity oracle for validation.

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <optional>
#include <vector>

#include "carbontrace/dispatch.hpp"
#include "carbontrace/ptdf.hpp"
#include "carbontrace/qp.hpp"
#include "carbontrace/sampler.hpp"
#include "carbontrace/tracing_types.hpp"

namespace ctrace {

enum class FitMode {
  per_generator,  // column-wise regression, sum-to-one only
  joint,          // coupled residual, sum-to-one and [0,1] bounds
};

class RankDeficientFitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FitOptions {
  FitMode mode = FitMode::joint;
  double tol = 1e-10;
  double rank_tol = 1e-12;      // relative eigenvalue cutoff for collinearity
  double regularization = 1e-10;  // relative ridge on the dispatch Gram matrix
  double zero_output_tol = 1e-9;  // MW; generators never above this are dropped
  // Collinear dispatch is an error by default. Datasets sampled with a
  // shared system scale factor are legitimately low-rank; callers opt out
  // and accept the ridge-regularized minimum-norm fit instead.
  bool require_full_rank = true;
};

namespace fit_detail {

struct Design {
  Eigen::MatrixXd M;   // Gram matrix sum_s p p^T over active generators
  Eigen::MatrixXd R;   // N x Ga, rows r_n = sum_s d_n^s p^s
  Eigen::VectorXd avg_load_share;  // for columns excluded from the fit
  std::vector<int> active;         // active generator indices
  std::vector<int> dropped;
  std::vector<Eigen::Index> loaded;  // buses with nonzero load in some sample
  double dsq = 0.0;                  // sum_s |d^s|^2, for the objective value
  Eigen::Index N = 0, S = 0;
};

inline Design build_design(const Dataset& train, double zero_output_tol) {
  if (train.size() == 0) throw std::invalid_argument("empty training dataset");
  const auto G = train.dispatches[0].size();
  const auto N = train.loads[0].size();
  Design dz;
  dz.N = N;
  dz.S = static_cast<Eigen::Index>(train.size());

  Eigen::VectorXd peak = Eigen::VectorXd::Zero(G);
  for (const auto& p : train.dispatches)
    peak = peak.cwiseMax(p.cwiseAbs());
  for (Eigen::Index g = 0; g < G; ++g) {
    if (peak(g) > zero_output_tol)
      dz.active.push_back(static_cast<int>(g));
    else
      dz.dropped.push_back(static_cast<int>(g));
  }
  if (dz.active.empty())
    throw std::invalid_argument("all generator outputs are identically zero");

  const auto Ga = static_cast<Eigen::Index>(dz.active.size());
  dz.M = Eigen::MatrixXd::Zero(Ga, Ga);
  dz.R = Eigen::MatrixXd::Zero(N, Ga);
  Eigen::VectorXd dsum = Eigen::VectorXd::Zero(N);
  Eigen::VectorXd pa(Ga);
  for (std::size_t s = 0; s < train.size(); ++s) {
    for (Eigen::Index k = 0; k < Ga; ++k)
      pa(k) = train.dispatches[s](dz.active[static_cast<std::size_t>(k)]);
    dz.M.noalias() += pa * pa.transpose();
    dz.R.noalias() += train.loads[s] * pa.transpose();
    dz.dsq += train.loads[s].squaredNorm();
    dsum += train.loads[s];
  }
  // buses with zero load across every sample receive no power; pin their
  // factor rows to zero instead of letting the fit spread slack onto them
  for (Eigen::Index n = 0; n < N; ++n)
    if (dsum(n) > 1e-9) dz.loaded.push_back(n);
  double total = dsum.sum();
  dz.avg_load_share = total > 0 ? Eigen::VectorXd(dsum / total)
                                : Eigen::VectorXd(Eigen::VectorXd::Constant(
                                      N, 1.0 / static_cast<double>(N)));
  return dz;
}

inline void check_rank(const Design& dz, double rank_tol) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dz.M);
  const auto& ev = es.eigenvalues();
  double emax = ev.maxCoeff();
  if (!(emax > 0) || ev.minCoeff() < rank_tol * emax) {
    // name the generators involved in the near-null direction
    Eigen::VectorXd v = es.eigenvectors().col(0);
    double vmax = v.cwiseAbs().maxCoeff();
    std::string group;
    for (Eigen::Index k = 0; k < v.size(); ++k)
      if (std::abs(v(k)) > 0.1 * vmax) {
        if (!group.empty()) group += ", ";
        group += std::to_string(dz.active[static_cast<std::size_t>(k)] + 1);
      }
    throw RankDeficientFitError(
        "dispatch samples are collinear across generators {" + group +
        "}; the regression is not identifiable");
  }
}

// Joint fit: min sum_n [a_n' M a_n - 2 r_n' a_n] s.t. column sums = 1,
// 0 <= a <= 1. Primal-dual interior point exploiting the per-node block
// structure: each Newton solve factors N small (Ga x Ga) SPD blocks and one
// Ga x Ga Schur complement for the column-sum duals.
inline Eigen::MatrixXd solve_joint(const Design& dz, double reg, double tol,
                                   int max_iter = 300) {
  const auto N = static_cast<Eigen::Index>(dz.loaded.size());
  const auto Ga = static_cast<Eigen::Index>(dz.active.size());
  if (N == 0) throw std::invalid_argument("all sampled loads are zero");
  Eigen::MatrixXd R(N, Ga);
  for (Eigen::Index n = 0; n < N; ++n)
    R.row(n) = dz.R.row(dz.loaded[static_cast<std::size_t>(n)]);
  Eigen::MatrixXd H2 = 2.0 * dz.M;
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dz.M);
    H2 += 2.0 * reg * std::max(es.eigenvalues().maxCoeff(), 1.0) *
          Eigen::MatrixXd::Identity(Ga, Ga);
  }

  Eigen::MatrixXd a = Eigen::MatrixXd::Constant(N, Ga, 0.5);
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(Ga);
  Eigen::MatrixXd wl = Eigen::MatrixXd::Ones(N, Ga);
  Eigen::MatrixXd wu = Eigen::MatrixXd::Ones(N, Ga);
  // slacks: tl = a, tu = 1 - a (kept implicitly through a)

  const double scale = 1.0 + H2.cwiseAbs().maxCoeff() +
                       R.cwiseAbs().maxCoeff();
  double best_gap = std::numeric_limits<double>::infinity();
  int stall = 0;

  for (int iter = 0; iter < max_iter; ++iter) {
    Eigen::MatrixXd tl = a;
    Eigen::MatrixXd tu = Eigen::MatrixXd::Constant(N, Ga, 1.0) - a;

    Eigen::MatrixXd rd = a * H2 - 2.0 * R + wu - wl;
    rd.rowwise() += lam.transpose();
    Eigen::VectorXd rp = a.colwise().sum().transpose() -
                         Eigen::VectorXd::Ones(Ga);

    // total complementarity, judged against the residual objective so exact
    // fits (objective near zero) are solved to absolute accuracy
    double gap = tl.cwiseProduct(wl).sum() + tu.cwiseProduct(wu).sum();
    double obj = 0.5 * (a * H2).cwiseProduct(a).sum() -
                 2.0 * R.cwiseProduct(a).sum() + dz.dsq;
    double prim = rp.cwiseAbs().maxCoeff();
    double dual = rd.cwiseAbs().maxCoeff();
    if (prim <= 1e-9 && dual <= tol * scale &&
        gap <= std::max(tol * 10.0, tol * std::abs(obj)))
      break;
    if (gap < 0.7 * best_gap) {
      best_gap = gap;
      stall = 0;
    } else if (++stall >= 8) {
      break;  // numerical floor reached
    }

    auto newton = [&](const Eigen::MatrixXd& rc_l, const Eigen::MatrixXd& rc_u,
                      Eigen::MatrixXd& da, Eigen::VectorXd& dlam,
                      Eigen::MatrixXd& dwl, Eigen::MatrixXd& dwu) {
      // per-node systems (H2 + D_n) da_n + dlam = rhs_n; sum_n da_n = -rp
      std::vector<Eigen::LLT<Eigen::MatrixXd>> llts;
      llts.reserve(static_cast<std::size_t>(N));
      Eigen::MatrixXd rhs(N, Ga);
      Eigen::MatrixXd schur = Eigen::MatrixXd::Zero(Ga, Ga);
      Eigen::VectorXd srhs = -rp;
      for (Eigen::Index n = 0; n < N; ++n) {
        Eigen::VectorXd D = (wl.row(n).cwiseQuotient(tl.row(n)) +
                             wu.row(n).cwiseQuotient(tu.row(n)))
                                .transpose();
        Eigen::MatrixXd Hn = H2;
        Hn.diagonal() += D;
        llts.emplace_back(Hn);
        // rhs_n = -rd_n + rc_l/tl - rc_u/tu (lower adds, upper subtracts)
        Eigen::VectorXd rn =
            (-rd.row(n) + rc_l.row(n).cwiseQuotient(tl.row(n)) -
             rc_u.row(n).cwiseQuotient(tu.row(n)))
                .transpose();
        rhs.row(n) = rn.transpose();
        Eigen::MatrixXd inv_cols = llts.back().solve(
            Eigen::MatrixXd::Identity(Ga, Ga));
        schur += inv_cols;
        srhs -= llts.back().solve(rn);
      }
      dlam = schur.ldlt().solve(-srhs);
      // (H+D) da_n = rhs_n - dlam
      da.resize(N, Ga);
      for (Eigen::Index n = 0; n < N; ++n)
        da.row(n) =
            llts[static_cast<std::size_t>(n)]
                .solve(rhs.row(n).transpose() - dlam)
                .transpose();
      // dtl = da, dtu = -da
      dwl = (rc_l - wl.cwiseProduct(da)).cwiseQuotient(tl);
      dwu = (rc_u + wu.cwiseProduct(da)).cwiseQuotient(tu);
    };

    auto max_step = [](const Eigen::MatrixXd& v, const Eigen::MatrixXd& dv) {
      double alpha = 1.0;
      for (Eigen::Index i = 0; i < v.rows(); ++i)
        for (Eigen::Index j = 0; j < v.cols(); ++j)
          if (dv(i, j) < 0) alpha = std::min(alpha, -v(i, j) / dv(i, j));
      return alpha;
    };

    // predictor
    Eigen::MatrixXd rc_l = -tl.cwiseProduct(wl);
    Eigen::MatrixXd rc_u = -tu.cwiseProduct(wu);
    Eigen::MatrixXd da, dwl, dwu;
    Eigen::VectorXd dlam;
    newton(rc_l, rc_u, da, dlam, dwl, dwu);
    double ap = std::min(max_step(tl, da), max_step(tu, -da));
    double ad = std::min(max_step(wl, dwl), max_step(wu, dwu));
    const auto pairs = static_cast<double>(2 * N * Ga);
    double gap_aff = (tl + ap * da).cwiseProduct(wl + ad * dwl).sum() +
                     (tu - ap * da).cwiseProduct(wu + ad * dwu).sum();
    double ratio = gap > 0 ? gap_aff / gap : 0.0;
    double mu_t = std::min(1.0, ratio * ratio * ratio) * gap / pairs;

    // corrector
    rc_l = (mu_t - 0.0) * Eigen::MatrixXd::Ones(N, Ga) -
           tl.cwiseProduct(wl) - da.cwiseProduct(dwl);
    rc_u = mu_t * Eigen::MatrixXd::Ones(N, Ga) - tu.cwiseProduct(wu) +
           da.cwiseProduct(dwu);
    newton(rc_l, rc_u, da, dlam, dwl, dwu);

    const double frac = 0.99995;
    ap = frac * std::min(max_step(tl, da), max_step(tu, -da));
    ad = frac * std::min(max_step(wl, dwl), max_step(wu, dwu));
    a += ap * da;
    lam += ad * dlam;
    wl += ad * dwl;
    wu += ad * dwu;
  }
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(dz.N, Ga);
  for (Eigen::Index n = 0; n < N; ++n)
    full.row(dz.loaded[static_cast<std::size_t>(n)]) = a.row(n);
  return full;
}

// Literal column-wise regression: for generator g, regress every d_n on
// p_g alone with the sum-to-one tie across buses. Routed through the
// generic QP kernel (diagonal objective, one equality).
inline Eigen::VectorXd solve_per_generator(const Dataset& train,
                                           Eigen::Index g, double tol) {
  const auto N = train.loads[0].size();
  double q = 0.0;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(N);
  for (std::size_t s = 0; s < train.size(); ++s) {
    const double pg = train.dispatches[s](g);
    q += pg * pg;
    c -= 2.0 * pg * train.loads[s];
  }
  auto qp = QuadraticProgram::make(N);
  qp.quadratic_diag.setConstant(q);
  qp.linear = c;
  qp.add_eq(Eigen::VectorXd::Ones(N), 1.0);
  Solution s = solve_qp(qp, tol);
  if (s.status != SolveStatus::optimal)
    throw std::runtime_error("per-generator regression failed: " + s.message);
  return s.values;
}

}  // namespace fit_detail

// d_hat = alpha * p
inline Eigen::VectorXd reconstruct_loads(const FactorMatrix& factors,
                                         const Eigen::VectorXd& p_g) {
  if (p_g.size() != factors.alpha.cols())
    throw std::invalid_argument("dispatch length does not match factor count");
  return factors.alpha * p_g;
}

inline FactorMatrix fit_distribution_factors(const Dataset& train,
                                             const FitOptions& opt = {}) {
  auto dz = fit_detail::build_design(train, opt.zero_output_tol);
  if (opt.require_full_rank) fit_detail::check_rank(dz, opt.rank_tol);
  const Eigen::Index N = dz.N;
  const auto G = train.dispatches[0].size();
  const auto Ga = static_cast<Eigen::Index>(dz.active.size());

  Eigen::MatrixXd alpha_active(N, Ga);
  if (opt.mode == FitMode::joint) {
    alpha_active = fit_detail::solve_joint(dz, opt.regularization, opt.tol);
  } else {
    // build a reduced dataset view over active generators
    Dataset reduced = train;
    if (Ga != G) {
      for (auto& p : reduced.dispatches) {
        Eigen::VectorXd pa(Ga);
        for (Eigen::Index k = 0; k < Ga; ++k)
          pa(k) = p(dz.active[static_cast<std::size_t>(k)]);
        p = pa;
      }
    }
    for (Eigen::Index k = 0; k < Ga; ++k)
      alpha_active.col(k) =
          fit_detail::solve_per_generator(reduced, k, opt.tol);
  }

  FactorMatrix fm;
  fm.alpha = Eigen::MatrixXd::Zero(N, G);
  for (Eigen::Index k = 0; k < Ga; ++k)
    fm.alpha.col(dz.active[static_cast<std::size_t>(k)]) =
        alpha_active.col(k);
  // unidentifiable (never-dispatched) columns get the average load share,
  // keeping the column-sum structure; they contribute nothing at p_g = 0
  for (int g : dz.dropped) fm.alpha.col(g) = dz.avg_load_share;
  fm.dropped_generators = dz.dropped;
  fm.network_fingerprint = train.network_fingerprint;

  fm.per_bus_mae = Eigen::VectorXd::Zero(N);
  fm.per_bus_max_ae = Eigen::VectorXd::Zero(N);
  for (std::size_t s = 0; s < train.size(); ++s) {
    Eigen::VectorXd err =
        (fm.alpha * train.dispatches[s] - train.loads[s]).cwiseAbs();
    fm.per_bus_mae += err;
    fm.per_bus_max_ae = fm.per_bus_max_ae.cwiseMax(err);
  }
  fm.per_bus_mae /= static_cast<double>(train.size());
  return fm;
}

// e_n = sum_g alpha_{n,g} gamma_g p_g
inline Eigen::VectorXd nodal_emissions(const FactorMatrix& factors,
                                       const Eigen::VectorXd& gamma,
                                       const Eigen::VectorXd& p_g) {
  if (gamma.size() != factors.alpha.cols() || p_g.size() != gamma.size())
    throw std::invalid_argument("gamma/dispatch length mismatch");
  return factors.alpha * gamma.cwiseProduct(p_g);
}

constexpr double kLoadDefinedThresholdMw = 1e-6;

// delta_n = e_n / d_n where load is present; nullopt elsewhere
inline std::vector<std::optional<double>> ance(const Eigen::VectorXd& e_n,
                                               const Eigen::VectorXd& d_n) {
  if (e_n.size() != d_n.size())
    throw std::invalid_argument("emission/load length mismatch");
  std::vector<std::optional<double>> out(static_cast<std::size_t>(e_n.size()));
  for (Eigen::Index i = 0; i < e_n.size(); ++i)
    if (d_n(i) > kLoadDefinedThresholdMw)
      out[static_cast<std::size_t>(i)] = e_n(i) / d_n(i);
  return out;
}

// mu_n = sum_{g in service} alpha^2 gamma / sum alpha^2; nullopt where no
// in-service generator contributes
inline std::vector<std::optional<double>> lmce(
    const FactorMatrix& factors, const Eigen::VectorXd& gamma,
    const std::vector<int>& in_service) {
  if (gamma.size() != factors.alpha.cols())
    throw std::invalid_argument("gamma length mismatch");
  if (in_service.empty())
    throw std::invalid_argument("in-service generator set is empty");
  const Eigen::Index N = factors.alpha.rows();
  std::vector<std::optional<double>> out(static_cast<std::size_t>(N));
  for (Eigen::Index n = 0; n < N; ++n) {
    double num = 0.0, den = 0.0;
    for (int g : in_service) {
      const double a = factors.alpha(n, g);
      num += a * a * gamma(g);
      den += a * a;
    }
    if (den > 1e-18) out[static_cast<std::size_t>(n)] = num / den;
  }
  return out;
}

// Same quantity through the gradient-projection route: the emission and
// demand gradients with respect to dispatch, combined as a projection
// (dot(grad_e, grad_d) / |grad_d|^2). Kept as a distinct code path so tests
// can compare the two expressions.
inline std::optional<double> lmce_via_gradients(const Eigen::VectorXd& alpha_row,
                                                const Eigen::VectorXd& gamma) {
  Eigen::VectorXd grad_e = alpha_row.cwiseProduct(gamma);
  const Eigen::VectorXd& grad_d = alpha_row;
  double den = grad_d.squaredNorm();
  if (den <= 1e-18) return std::nullopt;
  return grad_e.dot(grad_d) / den;
}

inline std::vector<int> in_service_generators(const Eigen::VectorXd& p_g,
                                              double tol = 1e-6) {
  std::vector<int> out;
  for (Eigen::Index g = 0; g < p_g.size(); ++g)
    if (p_g(g) > tol) out.push_back(static_cast<int>(g));
  return out;
}

struct SensitivityOptions {
  double delta_mw = 1.0;
  bool central = false;
  double tol = kDefaultTol;
};

// Finite-difference benchmark: marginal system emission with respect to the
// load at one bus, from re-solved OPF optima.
inline double lmce_sensitivity_oracle(const Network& net,
                                      const PtdfMatrix& ptdf,
                                      const Eigen::VectorXd& loads,
                                      int bus_external_id,
                                      const SensitivityOptions& opt = {}) {
  const int idx = net.bus_index(bus_external_id);
  auto total_emission = [&](const Eigen::VectorXd& d) {
    DispatchResult r;
    try {
      r = solve_baseline(net, d, ptdf, 0.0, opt.tol);
    } catch (const InfeasibleDispatchError&) {
      r.status = SolveStatus::infeasible;
    }
    if (r.status != SolveStatus::optimal)
      throw InfeasibleDispatchError(
          "perturbed OPF infeasible at bus " +
          std::to_string(bus_external_id) +
          "; retry with a smaller perturbation");
    return r.total_emission_lbs;
  };
  Eigen::VectorXd up = loads;
  up(idx) += opt.delta_mw;
  const double e_up = total_emission(up);
  if (!opt.central)
    return (e_up - total_emission(loads)) / opt.delta_mw;
  Eigen::VectorXd dn = loads;
  dn(idx) -= opt.delta_mw;
  return (e_up - total_emission(dn)) / (2.0 * opt.delta_mw);
}

// Full per-bus report for one operating point.
inline CarbonReport carbon_report(const Network& net,
                                  const FactorMatrix& factors,
                                  const Eigen::VectorXd& p_g,
                                  const Eigen::VectorXd& loads) {
  Eigen::VectorXd gamma = dispatch_detail::gamma_vector(net);
  CarbonReport rep;
  rep.e_n = nodal_emissions(factors, gamma, p_g);
  rep.ance = ance(rep.e_n, loads);
  rep.in_service_set = in_service_generators(p_g);
  if (rep.in_service_set.empty())
    rep.lmce.assign(static_cast<std::size_t>(factors.alpha.rows()),
                    std::nullopt);
  else
    rep.lmce = lmce(factors, gamma, rep.in_service_set);
  return rep;
}

}  // namespace ctrace
