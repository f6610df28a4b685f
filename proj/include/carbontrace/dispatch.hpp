#pragma once

// Baseline DC-OPF and its carbon-aware extension: nodal emission variables
// tied to dispatch through generator-to-load distribution factors, plus a
// system-wide emission cap and optional per-node caps.

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "carbontrace/network.hpp"
#include "carbontrace/ptdf.hpp"
#include "carbontrace/qp.hpp"
#include "carbontrace/tracing_types.hpp"

namespace ctrace {

struct CarbonOpfConfig {
  double permit_price = 0.0;                  // $/lbs CO2
  double total_cap_lbs = kInf;                // system-wide cap
  std::optional<Eigen::VectorXd> node_caps;   // per-node horizon caps, lbs
  int horizon = 1;                            // periods sharing node_caps
};

struct DispatchResult {
  Eigen::VectorXd p_g;           // MW per generator
  Eigen::VectorXd p_l;           // MW per line
  double power_cost = 0.0;       // $
  double carbon_cost = 0.0;      // $
  double total_cost = 0.0;       // $
  Eigen::VectorXd e_n;           // lbs per bus (carbon-aware only; else empty)
  double total_emission_lbs = 0.0;
  double solve_time = 0.0;       // s
  SolveStatus status = SolveStatus::numeric_failure;
  double emission_cap_dual = 0.0;  // dual of the system cap row, $/lbs
  std::string message;
};

class InfeasibleDispatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CostForm { quadratic, piecewise_linear };

namespace dispatch_detail {

inline Eigen::VectorXd gamma_vector(const Network& net) {
  Eigen::VectorXd g(static_cast<Eigen::Index>(net.num_generators()));
  for (std::size_t i = 0; i < net.num_generators(); ++i)
    g(static_cast<Eigen::Index>(i)) = net.generators()[i].emission_rate;
  return g;
}

// PTDF rows restricted to generator columns, and the load-driven offset:
// flow_l = (Gamma * Cg) p - Gamma * d
struct FlowMap {
  Eigen::MatrixXd gen_sens;   // L x G
  Eigen::VectorXd load_part;  // L, Gamma * d
};

inline FlowMap flow_map(const Network& net, const PtdfMatrix& ptdf,
                        const Eigen::VectorXd& loads) {
  const auto L = ptdf.values.rows();
  const auto G = static_cast<Eigen::Index>(net.num_generators());
  FlowMap fm;
  fm.gen_sens = Eigen::MatrixXd::Zero(L, G);
  for (Eigen::Index g = 0; g < G; ++g)
    fm.gen_sens.col(g) =
        ptdf.values.col(net.bus_index(net.generators()[g].bus));
  fm.load_part = ptdf.values * loads;
  return fm;
}

inline void check_load_vector(const Network& net, const Eigen::VectorXd& loads) {
  if (loads.size() != static_cast<Eigen::Index>(net.num_buses()))
    throw std::invalid_argument("load vector length does not match bus count");
  for (Eigen::Index i = 0; i < loads.size(); ++i)
    if (loads(i) < 0) throw std::invalid_argument("loads must be >= 0");
}

// tangent cuts of a*p^2 + b*p at k evenly spaced points; epigraph form
inline void add_pwl_cost(QuadraticProgram& qp, Eigen::Index p_var,
                         Eigen::Index t_var, const Generator& gen,
                         int segments) {
  const double lo = gen.p_min, hi = gen.p_max;
  for (int s = 0; s <= segments; ++s) {
    double p0 = lo + (hi - lo) * s / segments;
    double slope = 2.0 * gen.cost.a * p0 + gen.cost.b;
    double intercept = gen.cost.a * p0 * p0 + gen.cost.b * p0 - slope * p0;
    Eigen::VectorXd row = Eigen::VectorXd::Zero(qp.num_vars());
    row(t_var) = 1.0;
    row(p_var) = -slope;
    qp.add_ineq(row, intercept, kInf);  // t >= slope*p + intercept
  }
}

}  // namespace dispatch_detail

// Problem structure: variables p_g; one power balance equality; two-sided flow
// rows through the PTDF; generator box bounds; separable quadratic cost.
inline QuadraticProgram build_baseline_opf(const Network& net,
                                           const Eigen::VectorXd& loads,
                                           const PtdfMatrix& ptdf,
                                           CostForm cost_form = CostForm::quadratic,
                                           int pwl_segments = 10) {
  dispatch_detail::check_load_vector(net, loads);
  const auto G = static_cast<Eigen::Index>(net.num_generators());
  const double total_load = loads.sum();

  double pmin_sum = 0, pmax_sum = 0;
  for (const auto& g : net.generators()) {
    pmin_sum += g.p_min;
    pmax_sum += g.p_max;
  }
  if (total_load < pmin_sum - 1e-9 || total_load > pmax_sum + 1e-9)
    throw InfeasibleDispatchError(
        "total load " + std::to_string(total_load) +
        " MW outside dispatchable range [" + std::to_string(pmin_sum) + ", " +
        std::to_string(pmax_sum) + "] MW");

  const bool pwl = cost_form == CostForm::piecewise_linear;
  const Eigen::Index n_vars = pwl ? 2 * G : G;
  auto qp = QuadraticProgram::make(n_vars);

  for (Eigen::Index g = 0; g < G; ++g) {
    const auto& gen = net.generators()[g];
    qp.lower(g) = gen.p_min;
    qp.upper(g) = gen.p_max;
    if (pwl) {
      qp.constant += gen.cost.c;
      qp.linear(G + g) = 1.0;  // epigraph variable carries the cost
    } else {
      qp.quadratic_diag(g) = gen.cost.a;
      qp.linear(g) = gen.cost.b;
      qp.constant += gen.cost.c;
    }
  }

  Eigen::VectorXd balance = Eigen::VectorXd::Zero(n_vars);
  balance.head(G).setOnes();
  qp.add_eq(balance, total_load);

  auto fm = dispatch_detail::flow_map(net, ptdf, loads);
  for (std::size_t l = 0; l < net.num_lines(); ++l) {
    const double limit = net.lines()[l].flow_limit;
    if (!std::isfinite(limit)) continue;
    Eigen::VectorXd row = Eigen::VectorXd::Zero(n_vars);
    row.head(G) = fm.gen_sens.row(static_cast<Eigen::Index>(l)).transpose();
    const double off = fm.load_part(static_cast<Eigen::Index>(l));
    qp.add_ineq(row, -limit + off, limit + off);
  }

  if (pwl) {
    for (Eigen::Index g = 0; g < G; ++g)
      dispatch_detail::add_pwl_cost(qp, g, G + g, net.generators()[g],
                                    pwl_segments);
  }
  return qp;
}

namespace dispatch_detail {

inline DispatchResult extract_result(const Network& net,
                                     const Eigen::VectorXd& loads,
                                     const PtdfMatrix& ptdf,
                                     const Solution& sol, double permit_price) {
  const auto G = static_cast<Eigen::Index>(net.num_generators());
  DispatchResult r;
  r.status = sol.status;
  r.message = sol.message;
  r.solve_time = sol.wall_time;
  if (sol.status != SolveStatus::optimal) return r;

  r.p_g = sol.values.head(G);
  Eigen::VectorXd injections = -loads;
  for (Eigen::Index g = 0; g < G; ++g)
    injections(net.bus_index(net.generators()[g].bus)) += r.p_g(g);
  r.p_l = line_flows(ptdf, injections);

  r.power_cost = 0.0;
  for (Eigen::Index g = 0; g < G; ++g) {
    const auto& c = net.generators()[g].cost;
    r.power_cost += c.a * r.p_g(g) * r.p_g(g) + c.b * r.p_g(g) + c.c;
  }
  r.total_emission_lbs = gamma_vector(net).dot(r.p_g);
  r.carbon_cost = permit_price * r.total_emission_lbs;
  r.total_cost = r.power_cost + r.carbon_cost;
  return r;
}

}  // namespace dispatch_detail

inline DispatchResult solve_baseline(const Network& net,
                                     const Eigen::VectorXd& loads,
                                     const PtdfMatrix& ptdf,
                                     double permit_price = 0.0,
                                     double tol = kDefaultTol) {
  QuadraticProgram qp = build_baseline_opf(net, loads, ptdf);
  Solution sol = solve_qp(qp, tol);
  return dispatch_detail::extract_result(net, loads, ptdf, sol, permit_price);
}

// Minimum-emission dispatch, used to diagnose infeasible caps: the tightest
// cap any dispatch can meet under Eqs. of the baseline feasible set.
inline double min_achievable_emission(const Network& net,
                                      const Eigen::VectorXd& loads,
                                      const PtdfMatrix& ptdf) {
  QuadraticProgram qp = build_baseline_opf(net, loads, ptdf);
  qp.quadratic_diag.setZero();
  qp.constant = 0.0;
  qp.linear = dispatch_detail::gamma_vector(net);
  Solution sol = solve_qp(qp);
  if (sol.status != SolveStatus::optimal)
    throw InfeasibleDispatchError(
        "baseline feasible set is empty; no dispatch meets the constraints");
  return sol.objective;
}

// Full carbon-aware program: variables [p_g, e_n]; adds the nodal emission
// definition rows, the system cap, optional per-node caps, and the permit
// price term to the objective.
inline QuadraticProgram build_carbon_opf(const Network& net,
                                         const Eigen::VectorXd& loads,
                                         const PtdfMatrix& ptdf,
                                         const FactorMatrix& factors,
                                         const CarbonOpfConfig& cfg) {
  dispatch_detail::check_load_vector(net, loads);
  const auto G = static_cast<Eigen::Index>(net.num_generators());
  const auto N = static_cast<Eigen::Index>(net.num_buses());
  if (factors.alpha.rows() != N || factors.alpha.cols() != G)
    throw std::invalid_argument(
        "factor matrix shape does not match this network");
  if (cfg.permit_price < 0)
    throw std::invalid_argument("permit_price must be >= 0");
  if (!(cfg.total_cap_lbs > 0))
    throw std::invalid_argument("total emission cap must be > 0");

  QuadraticProgram base = build_baseline_opf(net, loads, ptdf);
  const Eigen::Index n_vars = G + N;
  auto qp = QuadraticProgram::make(n_vars);
  qp.quadratic_diag.head(G) = base.quadratic_diag;
  qp.linear.head(G) = base.linear;
  qp.constant = base.constant;
  qp.lower.head(G) = base.lower;
  qp.upper.head(G) = base.upper;

  const Eigen::VectorXd gamma = dispatch_detail::gamma_vector(net);
  qp.linear.head(G) += cfg.permit_price * gamma;  // f_carbon

  // carry over balance + flow rows, widened to the new variable vector
  qp.eq_coeffs = Eigen::MatrixXd::Zero(base.eq_coeffs.rows(), n_vars);
  qp.eq_coeffs.leftCols(G) = base.eq_coeffs;
  qp.eq_rhs = base.eq_rhs;
  qp.ineq_coeffs = Eigen::MatrixXd::Zero(base.ineq_coeffs.rows(), n_vars);
  qp.ineq_coeffs.leftCols(G) = base.ineq_coeffs;
  qp.ineq_lower = base.ineq_lower;
  qp.ineq_upper = base.ineq_upper;

  // e_n = sum_g alpha_{n,g} gamma_g p_g
  for (Eigen::Index nidx = 0; nidx < N; ++nidx) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(n_vars);
    for (Eigen::Index g = 0; g < G; ++g)
      row(g) = -factors.alpha(nidx, g) * gamma(g);
    row(G + nidx) = 1.0;
    qp.add_eq(row, 0.0);
  }

  // system cap
  if (std::isfinite(cfg.total_cap_lbs)) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(n_vars);
    row.tail(N).setOnes();
    qp.add_ineq(row, -kInf, cfg.total_cap_lbs);
  }

  // per-node caps (single-period degenerate form of the horizon constraint)
  if (cfg.node_caps) {
    if (cfg.node_caps->size() != N)
      throw std::invalid_argument("node_caps length does not match bus count");
    for (Eigen::Index nidx = 0; nidx < N; ++nidx) {
      double cap = (*cfg.node_caps)(nidx);
      if (!std::isfinite(cap)) continue;
      if (!(cap > 0)) throw std::invalid_argument("node caps must be > 0");
      Eigen::VectorXd row = Eigen::VectorXd::Zero(n_vars);
      row(G + nidx) = 1.0;
      qp.add_ineq(row, -kInf, cap);
    }
  }
  return qp;
}

inline DispatchResult solve_carbon_opf(const Network& net,
                                       const Eigen::VectorXd& loads,
                                       const PtdfMatrix& ptdf,
                                       const FactorMatrix& factors,
                                       const CarbonOpfConfig& cfg,
                                       double tol = kDefaultTol) {
  QuadraticProgram qp = build_carbon_opf(net, loads, ptdf, factors, cfg);
  Solution sol = solve_qp(qp, tol);
  const auto N = static_cast<Eigen::Index>(net.num_buses());

  if (sol.status == SolveStatus::infeasible &&
      std::isfinite(cfg.total_cap_lbs)) {
    double min_e = min_achievable_emission(net, loads, ptdf);
    if (cfg.total_cap_lbs < min_e - 1e-9)
      throw InfeasibleDispatchError(
          "emission cap " + std::to_string(cfg.total_cap_lbs) +
          " lbs is below the minimum achievable emission " +
          std::to_string(min_e) + " lbs for this load");
  }

  DispatchResult r =
      dispatch_detail::extract_result(net, loads, ptdf, sol, cfg.permit_price);
  if (sol.status == SolveStatus::optimal) {
    r.e_n = sol.values.tail(N);
    // inequality rows are [flows..., system cap, node caps...]
    if (std::isfinite(cfg.total_cap_lbs)) {
      Eigen::Index finite_node_caps = 0;
      if (cfg.node_caps)
        for (Eigen::Index i = 0; i < cfg.node_caps->size(); ++i)
          if (std::isfinite((*cfg.node_caps)(i))) ++finite_node_caps;
      const Eigen::Index cap_row =
          sol.ineq_dual_upper.size() - finite_node_caps - 1;
      r.emission_cap_dual = sol.ineq_dual_upper(cap_row);
    }
  }
  return r;
}

// Horizon batch: T independent single-period programs coupled only by the
// per-node horizon caps sum_t e_{n,t} <= cap_n (and an optional shared
// system cap per period). Variables stack as [p(1),e(1),...,p(T),e(T)].
inline std::vector<DispatchResult> solve_carbon_horizon(
    const Network& net, const std::vector<Eigen::VectorXd>& loads_per_period,
    const PtdfMatrix& ptdf, const FactorMatrix& factors,
    const CarbonOpfConfig& cfg, double tol = kDefaultTol) {
  const auto T = static_cast<Eigen::Index>(loads_per_period.size());
  if (T == 0) throw std::invalid_argument("horizon has no periods");
  const auto G = static_cast<Eigen::Index>(net.num_generators());
  const auto N = static_cast<Eigen::Index>(net.num_buses());
  const Eigen::Index blk = G + N;

  std::vector<QuadraticProgram> parts;
  for (const auto& d : loads_per_period) {
    CarbonOpfConfig per = cfg;
    per.node_caps.reset();  // coupled caps handled at the horizon level
    parts.push_back(build_carbon_opf(net, d, ptdf, factors, per));
  }

  auto qp = QuadraticProgram::make(T * blk);
  Eigen::Index eq_rows = 0, ineq_rows = 0;
  for (const auto& p : parts) {
    eq_rows += p.eq_rhs.size();
    ineq_rows += p.ineq_lower.size();
  }
  qp.eq_coeffs = Eigen::MatrixXd::Zero(eq_rows, T * blk);
  qp.eq_rhs.resize(eq_rows);
  qp.ineq_coeffs = Eigen::MatrixXd::Zero(ineq_rows, T * blk);
  qp.ineq_lower.resize(ineq_rows);
  qp.ineq_upper.resize(ineq_rows);
  Eigen::Index er = 0, ir = 0;
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& p = parts[static_cast<std::size_t>(t)];
    qp.quadratic_diag.segment(t * blk, blk) = p.quadratic_diag;
    qp.linear.segment(t * blk, blk) = p.linear;
    qp.constant += p.constant;
    qp.lower.segment(t * blk, blk) = p.lower;
    qp.upper.segment(t * blk, blk) = p.upper;
    qp.eq_coeffs.block(er, t * blk, p.eq_rhs.size(), blk) = p.eq_coeffs;
    qp.eq_rhs.segment(er, p.eq_rhs.size()) = p.eq_rhs;
    er += p.eq_rhs.size();
    qp.ineq_coeffs.block(ir, t * blk, p.ineq_lower.size(), blk) =
        p.ineq_coeffs;
    qp.ineq_lower.segment(ir, p.ineq_lower.size()) = p.ineq_lower;
    qp.ineq_upper.segment(ir, p.ineq_lower.size()) = p.ineq_upper;
    ir += p.ineq_lower.size();
  }

  if (cfg.node_caps) {
    if (cfg.node_caps->size() != N)
      throw std::invalid_argument("node_caps length does not match bus count");
    for (Eigen::Index nidx = 0; nidx < N; ++nidx) {
      double cap = (*cfg.node_caps)(nidx);
      if (!std::isfinite(cap)) continue;
      Eigen::VectorXd row = Eigen::VectorXd::Zero(T * blk);
      for (Eigen::Index t = 0; t < T; ++t) row(t * blk + G + nidx) = 1.0;
      qp.add_ineq(row, -kInf, cap);
    }
  }

  Solution sol = solve_qp(qp, tol);
  std::vector<DispatchResult> out;
  for (Eigen::Index t = 0; t < T; ++t) {
    Solution per = sol;
    per.values = sol.values.segment(t * blk, blk);
    DispatchResult r = dispatch_detail::extract_result(
        net, loads_per_period[static_cast<std::size_t>(t)], ptdf, per,
        cfg.permit_price);
    if (sol.status == SolveStatus::optimal)
      r.e_n = sol.values.segment(t * blk + G, N);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ctrace
