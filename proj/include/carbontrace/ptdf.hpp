#pragma once

// DC susceptance structure and the PTDF matrix mapping nodal injections to
// line flows (slack-referenced convention: slack column is zero).

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "carbontrace/network.hpp"

namespace ctrace {

class SingularNetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PtdfMatrix {
  Eigen::MatrixXd values;       // L x N, column order = bus order
  int slack_bus = 0;            // external id
  std::vector<int> bus_order;   // external bus id per column
  std::vector<int> line_order;  // line index per row (identity, kept explicit)

  Eigen::Index num_lines() const { return values.rows(); }
  Eigen::Index num_buses() const { return values.cols(); }
};

// Branch susceptance matrix B (N x N, per-unit) and the line incidence
// weighted by 1/x. Shared by PTDF construction and the angle-based oracle.
inline Eigen::MatrixXd susceptance_matrix(const Network& net) {
  const auto n = static_cast<Eigen::Index>(net.num_buses());
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
  for (const auto& l : net.lines()) {
    int i = net.bus_index(l.from_bus);
    int j = net.bus_index(l.to_bus);
    double b = 1.0 / l.reactance;
    B(i, i) += b;
    B(j, j) += b;
    B(i, j) -= b;
    B(j, i) -= b;
  }
  return B;
}

inline Eigen::MatrixXd compute_ptdf_values(const Network& net) {
  const auto n = static_cast<Eigen::Index>(net.num_buses());
  const auto m = static_cast<Eigen::Index>(net.num_lines());
  const int slack = net.slack_index();

  Eigen::MatrixXd B = susceptance_matrix(net);
  // reduced system: drop slack row/column
  Eigen::MatrixXd Br(n - 1, n - 1);
  {
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == slack) continue;
      Eigen::Index c = 0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == slack) continue;
        Br(r, c++) = B(i, j);
      }
      ++r;
    }
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(Br);
  // crude condition estimate via pivot extremes
  if (n > 1) {
    const auto& U = lu.matrixLU();
    double pmax = 0, pmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < Br.rows(); ++i) {
      double p = std::abs(U(i, i));
      pmax = std::max(pmax, p);
      pmin = std::min(pmin, p);
    }
    if (!(pmin > 0) || pmax / pmin > 1e12)
      throw SingularNetworkError(
          "reduced susceptance matrix is numerically singular "
          "(disconnected or degenerate network)");
  }

  // branch flow sensitivity to angles: f = Bf * theta
  Eigen::MatrixXd Bf = Eigen::MatrixXd::Zero(m, n);
  for (std::size_t k = 0; k < net.num_lines(); ++k) {
    const auto& l = net.lines()[k];
    double b = 1.0 / l.reactance;
    Bf(static_cast<Eigen::Index>(k), net.bus_index(l.from_bus)) = b;
    Bf(static_cast<Eigen::Index>(k), net.bus_index(l.to_bus)) = -b;
  }

  // solve Br * Theta = I (columns = injections at non-slack buses)
  Eigen::MatrixXd Theta = lu.solve(Eigen::MatrixXd::Identity(n - 1, n - 1));

  Eigen::MatrixXd ptdf = Eigen::MatrixXd::Zero(m, n);
  {
    Eigen::Index c = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == slack) continue;  // slack column stays zero
      Eigen::VectorXd theta = Eigen::VectorXd::Zero(n);
      Eigen::Index r = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (i == slack) continue;
        theta(i) = Theta(r++, c);
      }
      ptdf.col(j) = Bf * theta;
      ++c;
    }
  }
  return ptdf;
}

inline PtdfMatrix compute_ptdf(const Network& net) {
  require_valid(net);
  PtdfMatrix out;
  out.values = compute_ptdf_values(net);
  out.slack_bus = net.buses()[net.slack_index()].id;
  out.bus_order.reserve(net.num_buses());
  for (const auto& b : net.buses()) out.bus_order.push_back(b.id);
  out.line_order.resize(net.num_lines());
  for (std::size_t i = 0; i < net.num_lines(); ++i)
    out.line_order[i] = static_cast<int>(i);
  if (!out.values.allFinite())
    throw SingularNetworkError("PTDF contains non-finite entries");
  return out;
}

// f = Gamma * P for a per-bus MW injection vector.
inline Eigen::VectorXd line_flows(const PtdfMatrix& ptdf,
                                  const Eigen::VectorXd& injections) {
  if (injections.size() != ptdf.values.cols())
    throw std::invalid_argument(
        "injection vector length " + std::to_string(injections.size()) +
        " does not match bus count " + std::to_string(ptdf.values.cols()));
  return ptdf.values * injections;
}

// Independent oracle: solve B*theta = P directly and read branch flows off
// the angles. Used by tests and the PTDF equivalence acceptance check.
inline Eigen::VectorXd dc_flows_from_angles(const Network& net,
                                            const Eigen::VectorXd& injections) {
  const auto n = static_cast<Eigen::Index>(net.num_buses());
  if (injections.size() != n)
    throw std::invalid_argument("injection vector length mismatch");
  const int slack = net.slack_index();
  Eigen::MatrixXd B = susceptance_matrix(net);

  Eigen::MatrixXd Br(n - 1, n - 1);
  Eigen::VectorXd Pr(n - 1);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i == slack) continue;
    Pr(r) = injections(i);
    Eigen::Index c = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == slack) continue;
      Br(r, c++) = B(i, j);
    }
    ++r;
  }
  Eigen::VectorXd theta_r = Br.fullPivLu().solve(Pr);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(n);
  r = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (i != slack) theta(i) = theta_r(r++);

  Eigen::VectorXd f(static_cast<Eigen::Index>(net.num_lines()));
  for (std::size_t k = 0; k < net.num_lines(); ++k) {
    const auto& l = net.lines()[k];
    f(static_cast<Eigen::Index>(k)) =
        (theta(net.bus_index(l.from_bus)) - theta(net.bus_index(l.to_bus))) /
        l.reactance;
  }
  return f;
}

}  // namespace ctrace
