#pragma once

// CSV/JSON persistence for datasets, factor matrices, emission reports, and
// dispatch results. All writers are deterministic: fixed column order,
// round-trip-exact number formatting.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "carbontrace/dispatch.hpp"
#include "carbontrace/network.hpp"
#include "carbontrace/ptdf.hpp"
#include "carbontrace/sampler.hpp"
#include "carbontrace/tracing_types.hpp"

namespace ctrace {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
}

// ---- dataset ----

inline std::string dataset_to_csv(const Dataset& ds) {
  if (ds.size() == 0) throw std::invalid_argument("empty dataset");
  const auto G = ds.dispatches[0].size();
  const auto N = ds.loads[0].size();
  std::ostringstream os;
  for (Eigen::Index g = 0; g < G; ++g) os << "p_" << g + 1 << ",";
  for (Eigen::Index n = 0; n < N; ++n)
    os << "d_" << n + 1 << (n + 1 < N ? "," : "\n");
  for (std::size_t s = 0; s < ds.size(); ++s) {
    for (Eigen::Index g = 0; g < G; ++g) os << fmt(ds.dispatches[s](g)) << ",";
    for (Eigen::Index n = 0; n < N; ++n)
      os << fmt(ds.loads[s](n)) << (n + 1 < N ? "," : "\n");
  }
  return os.str();
}

inline nlohmann::ordered_json dataset_metadata(const Dataset& ds) {
  return nlohmann::ordered_json{
      {"samples", ds.size()},
      {"seed", ds.seed},
      {"network_fingerprint", ds.network_fingerprint},
      {"infeasible_redraws", ds.infeasible_redraws},
      {"scaling", ds.scaling == LoadScaling::per_bus ? "per_bus" : "system"},
  };
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline Dataset dataset_from_csv(const std::string& csv,
                                const nlohmann::json& meta) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("dataset csv is empty");
  auto header = split_csv_line(line);
  Eigen::Index G = 0, N = 0;
  for (const auto& h : header) {
    if (h.rfind("p_", 0) == 0)
      ++G;
    else if (h.rfind("d_", 0) == 0)
      ++N;
    else
      throw std::runtime_error("unexpected dataset column '" + h + "'");
  }
  if (G == 0 || N == 0)
    throw std::runtime_error("dataset csv needs p_* and d_* columns");
  Dataset ds;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (static_cast<Eigen::Index>(cells.size()) != G + N)
      throw std::runtime_error("dataset row has wrong column count");
    Eigen::VectorXd p(G), d(N);
    for (Eigen::Index g = 0; g < G; ++g) p(g) = std::stod(cells[g]);
    for (Eigen::Index n = 0; n < N; ++n) d(n) = std::stod(cells[G + n]);
    ds.dispatches.push_back(p);
    ds.loads.push_back(d);
  }
  if (meta.is_object()) {
    ds.seed = meta.value("seed", std::uint64_t{0});
    ds.network_fingerprint = meta.value("network_fingerprint",
                                        std::uint64_t{0});
    ds.infeasible_redraws = meta.value("infeasible_redraws", 0);
    if (meta.value("scaling", "per_bus") == std::string("system"))
      ds.scaling = LoadScaling::system;
  }
  return ds;
}

// ---- factor matrix ----

inline std::string factors_to_csv(const FactorMatrix& fm, const Network& net) {
  if (fm.alpha.rows() != static_cast<Eigen::Index>(net.num_buses()))
    throw std::invalid_argument("factor matrix does not match the network");
  std::ostringstream os;
  os << "bus";
  for (Eigen::Index g = 0; g < fm.alpha.cols(); ++g) os << ",g_" << g + 1;
  os << "\n";
  for (Eigen::Index n = 0; n < fm.alpha.rows(); ++n) {
    os << net.buses()[static_cast<std::size_t>(n)].id;
    for (Eigen::Index g = 0; g < fm.alpha.cols(); ++g)
      os << "," << fmt(fm.alpha(n, g));
    os << "\n";
  }
  return os.str();
}

inline FactorMatrix factors_from_csv(const std::string& csv,
                                     const Network& net) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("factor csv is empty");
  auto header = split_csv_line(line);
  if (header.empty() || header[0] != "bus")
    throw std::runtime_error("factor csv must start with a 'bus' column");
  const auto G = static_cast<Eigen::Index>(header.size()) - 1;
  FactorMatrix fm;
  fm.alpha.resize(static_cast<Eigen::Index>(net.num_buses()), G);
  fm.alpha.setZero();
  fm.network_fingerprint = net.fingerprint();
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (static_cast<Eigen::Index>(cells.size()) != G + 1)
      throw std::runtime_error("factor row has wrong column count");
    int bus = std::stoi(cells[0]);
    auto n = static_cast<Eigen::Index>(net.bus_index(bus));
    for (Eigen::Index g = 0; g < G; ++g)
      fm.alpha(n, g) = std::stod(cells[static_cast<std::size_t>(g) + 1]);
    ++rows;
  }
  if (rows != net.num_buses())
    throw std::runtime_error("factor csv row count does not match the network");
  return fm;
}

// ---- carbon report ----

inline std::string na_or(const std::optional<double>& v) {
  return v ? fmt(*v) : "NA";
}

// plot-ready per-bus table; optionally ordered by decreasing LMCE and
// extended with the finite-difference benchmark column
inline std::string carbon_report_to_csv(
    const CarbonReport& rep, const Network& net,
    const Eigen::VectorXd& loads, bool sorted_by_lmce = false,
    const std::vector<std::optional<double>>* oracle = nullptr) {
  const auto N = rep.e_n.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
  for (Eigen::Index n = 0; n < N; ++n) order[static_cast<std::size_t>(n)] = n;
  if (sorted_by_lmce)
    std::stable_sort(order.begin(), order.end(),
                     [&rep](Eigen::Index a, Eigen::Index b) {
                       double va = rep.lmce[static_cast<std::size_t>(a)]
                                       .value_or(-kInf);
                       double vb = rep.lmce[static_cast<std::size_t>(b)]
                                       .value_or(-kInf);
                       return va > vb;
                     });
  std::ostringstream os;
  os << "bus,load_mw,emission_lbs,ance_lbs_per_mwh,lmce_lbs_per_mwh";
  if (oracle) os << ",lmce_oracle_lbs_per_mwh";
  os << "\n";
  for (Eigen::Index n : order) {
    auto i = static_cast<std::size_t>(n);
    os << net.buses()[i].id << "," << fmt(loads(n)) << "," << fmt(rep.e_n(n))
       << "," << na_or(rep.ance[i]) << "," << na_or(rep.lmce[i]);
    if (oracle) os << "," << na_or((*oracle)[i]);
    os << "\n";
  }
  return os.str();
}

inline nlohmann::ordered_json carbon_report_to_json(
    const CarbonReport& rep, const Network& net, const Eigen::VectorXd& loads,
    const std::vector<std::optional<double>>* oracle = nullptr) {
  nlohmann::ordered_json buses = nlohmann::ordered_json::array();
  for (Eigen::Index n = 0; n < rep.e_n.size(); ++n) {
    auto i = static_cast<std::size_t>(n);
    nlohmann::ordered_json jb{
        {"bus", net.buses()[i].id},
        {"load_mw", loads(n)},
        {"emission_lbs", rep.e_n(n)},
    };
    jb["ance_lbs_per_mwh"] =
        rep.ance[i] ? nlohmann::ordered_json(*rep.ance[i])
                    : nlohmann::ordered_json(nullptr);
    jb["lmce_lbs_per_mwh"] =
        rep.lmce[i] ? nlohmann::ordered_json(*rep.lmce[i])
                    : nlohmann::ordered_json(nullptr);
    if (oracle)
      jb["lmce_oracle_lbs_per_mwh"] =
          (*oracle)[i] ? nlohmann::ordered_json(*(*oracle)[i])
                       : nlohmann::ordered_json(nullptr);
    buses.push_back(jb);
  }
  return nlohmann::ordered_json{
      {"total_emission_lbs", rep.e_n.sum()},
      {"in_service_generators", rep.in_service_set},
      {"buses", buses},
  };
}

// ---- dispatch result ----

inline nlohmann::ordered_json dispatch_to_json(const DispatchResult& r,
                                               const Network& net) {
  nlohmann::ordered_json gens = nlohmann::ordered_json::array();
  for (Eigen::Index g = 0; g < r.p_g.size(); ++g)
    gens.push_back({{"generator", g + 1},
                    {"bus", net.generators()[static_cast<std::size_t>(g)].bus},
                    {"p_mw", r.p_g(g)}});
  nlohmann::ordered_json lines = nlohmann::ordered_json::array();
  for (Eigen::Index l = 0; l < r.p_l.size(); ++l) {
    const auto& ln = net.lines()[static_cast<std::size_t>(l)];
    lines.push_back({{"line", l + 1},
                     {"from", ln.from_bus},
                     {"to", ln.to_bus},
                     {"flow_mw", r.p_l(l)},
                     {"limit_mw", std::isfinite(ln.flow_limit)
                                      ? nlohmann::ordered_json(ln.flow_limit)
                                      : nlohmann::ordered_json(nullptr)}});
  }
  nlohmann::ordered_json j{
      {"status", to_string(r.status)},
      {"power_cost_dollars", r.power_cost},
      {"carbon_cost_dollars", r.carbon_cost},
      {"total_cost_dollars", r.total_cost},
      {"total_emission_lbs", r.total_emission_lbs},
      {"total_emission_tons", r.total_emission_lbs / kLbsPerShortTon},
      {"solve_time_s", r.solve_time},
      {"generators", gens},
      {"lines", lines},
  };
  if (r.e_n.size() > 0) {
    nlohmann::ordered_json buses = nlohmann::ordered_json::array();
    for (Eigen::Index n = 0; n < r.e_n.size(); ++n)
      buses.push_back({{"bus", net.buses()[static_cast<std::size_t>(n)].id},
                       {"emission_lbs", r.e_n(n)}});
    j["nodal_emissions"] = buses;
    j["emission_cap_dual_dollars_per_lbs"] = r.emission_cap_dual;
  }
  return j;
}

inline std::string dispatch_to_csv(const DispatchResult& r,
                                   const Network& net) {
  std::ostringstream os;
  os << "section,index,bus_or_from,to,value\n";
  for (Eigen::Index g = 0; g < r.p_g.size(); ++g)
    os << "generator_mw," << g + 1 << ","
       << net.generators()[static_cast<std::size_t>(g)].bus << ",,"
       << fmt(r.p_g(g)) << "\n";
  for (Eigen::Index l = 0; l < r.p_l.size(); ++l) {
    const auto& ln = net.lines()[static_cast<std::size_t>(l)];
    os << "line_flow_mw," << l + 1 << "," << ln.from_bus << "," << ln.to_bus
       << "," << fmt(r.p_l(l)) << "\n";
  }
  for (Eigen::Index n = 0; n < r.e_n.size(); ++n)
    os << "bus_emission_lbs," << n + 1 << ","
       << net.buses()[static_cast<std::size_t>(n)].id << ",,"
       << fmt(r.e_n(n)) << "\n";
  return os.str();
}

// ---- ptdf ----

inline std::string ptdf_to_csv(const PtdfMatrix& ptdf, const Network& net) {
  std::ostringstream os;
  os << "line";
  for (const auto& b : net.buses()) os << ",bus_" << b.id;
  os << "\n";
  for (Eigen::Index l = 0; l < ptdf.values.rows(); ++l) {
    os << l + 1;
    for (Eigen::Index n = 0; n < ptdf.values.cols(); ++n)
      os << "," << fmt(ptdf.values(l, n));
    os << "\n";
  }
  return os.str();
}

}  // namespace ctrace
