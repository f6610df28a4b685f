#pragma once

// Case file readers/writers: native JSON schema and a MATPOWER .m subset
// (matrix literals only; bus/branch/gen/gencost tables). Emission rates for
// MATPOWER cases come from a sidecar JSON mapping generator index -> gamma.

#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "carbontrace/network.hpp"

namespace ctrace {

enum class CaseFormat { native_json, matpower_m };

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ParseResult {
  Network network;
  std::vector<Diagnostic> warnings;
};

// ---------------------------------------------------------------------------
// Native JSON

inline ParseResult parse_native_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("json syntax error: ") + e.what());
  }
  try {
    std::vector<Bus> buses;
    for (const auto& jb : j.at("buses")) {
      Bus b;
      b.id = jb.at("id").get<int>();
      b.base_load = jb.at("load_mw").get<double>();
      b.is_slack = jb.value("slack", false);
      buses.push_back(b);
    }
    std::vector<Line> lines;
    for (const auto& jl : j.at("lines")) {
      Line l;
      l.from_bus = jl.at("from").get<int>();
      l.to_bus = jl.at("to").get<int>();
      l.reactance = jl.at("x_pu").get<double>();
      if (jl.contains("limit_mw") && !jl.at("limit_mw").is_null())
        l.flow_limit = jl.at("limit_mw").get<double>();
      else
        l.flow_limit = std::numeric_limits<double>::infinity();
      lines.push_back(l);
    }
    std::vector<Generator> gens;
    for (const auto& jg : j.at("generators")) {
      Generator g;
      g.bus = jg.at("bus").get<int>();
      g.p_min = jg.at("pmin_mw").get<double>();
      g.p_max = jg.at("pmax_mw").get<double>();
      g.emission_rate = jg.at("gamma_lbs_per_mwh").get<double>();
      if (jg.contains("cost")) {
        g.cost.a = jg.at("cost").value("a", 0.0);
        g.cost.b = jg.at("cost").value("b", 0.0);
        g.cost.c = jg.at("cost").value("c", 0.0);
      }
      gens.push_back(g);
    }
    double base_mva = j.value("base_mva", 100.0);
    Network net(std::move(buses), std::move(lines), std::move(gens), base_mva);
    require_valid(net);
    return {std::move(net), {}};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("case schema error: ") + e.what());
  }
}

inline nlohmann::ordered_json network_to_json(const Network& net) {
  nlohmann::ordered_json j;
  j["base_mva"] = net.base_mva();
  j["buses"] = nlohmann::ordered_json::array();
  for (const auto& b : net.buses()) {
    nlohmann::ordered_json jb;
    jb["id"] = b.id;
    jb["load_mw"] = b.base_load;
    jb["slack"] = b.is_slack;
    j["buses"].push_back(jb);
  }
  j["lines"] = nlohmann::ordered_json::array();
  for (const auto& l : net.lines()) {
    nlohmann::ordered_json jl;
    jl["from"] = l.from_bus;
    jl["to"] = l.to_bus;
    jl["x_pu"] = l.reactance;
    if (std::isfinite(l.flow_limit))
      jl["limit_mw"] = l.flow_limit;
    else
      jl["limit_mw"] = nullptr;
    j["lines"].push_back(jl);
  }
  j["generators"] = nlohmann::ordered_json::array();
  for (const auto& g : net.generators()) {
    nlohmann::ordered_json jg;
    jg["bus"] = g.bus;
    jg["pmin_mw"] = g.p_min;
    jg["pmax_mw"] = g.p_max;
    jg["gamma_lbs_per_mwh"] = g.emission_rate;
    jg["cost"] = {{"a", g.cost.a}, {"b", g.cost.b}, {"c", g.cost.c}};
    j["generators"].push_back(jg);
  }
  return j;
}

inline std::string serialize_network(const Network& net) {
  return network_to_json(net).dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// MATPOWER .m subset

namespace mp {

struct Cursor {
  const std::string& text;
  std::size_t pos = 0;
  int line = 1;
  int col = 1;

  bool eof() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }
  void advance() {
    if (text[pos] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
    ++pos;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    std::ostringstream os;
    os << "matpower parse error at line " << line << ", column " << col << ": "
       << msg;
    throw ParseError(os.str());
  }
  void skip_ws_and_comments(bool stop_at_newline = false) {
    while (!eof()) {
      char c = peek();
      if (c == '%') {
        while (!eof() && peek() != '\n') advance();
      } else if (c == '\n' && stop_at_newline) {
        return;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else {
        return;
      }
    }
  }
};

inline double parse_number(Cursor& cur) {
  std::size_t start = cur.pos;
  int scol = cur.col, sline = cur.line;
  auto is_num_char = [](char c) {
    return (c >= '0' && c <= '9') || c == '+' || c == '-' || c == '.' ||
           c == 'e' || c == 'E';
  };
  while (!cur.eof() && is_num_char(cur.peek())) {
    // '+'/'-' only valid at start or after exponent
    char c = cur.peek();
    if ((c == '+' || c == '-') && cur.pos != start) {
      char prev = cur.text[cur.pos - 1];
      if (prev != 'e' && prev != 'E') break;
    }
    cur.advance();
  }
  if (cur.pos == start) cur.fail("expected a number");
  const std::string tok = cur.text.substr(start, cur.pos - start);
  try {
    std::size_t used = 0;
    double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    Cursor at{cur.text, start, sline, scol};
    at.fail("malformed number '" + tok + "'");
  }
}

// Parses "[ row; row; ... ];" where rows are whitespace/comma separated
// numbers and rows split on ';' or newline.
inline std::vector<std::vector<double>> parse_matrix(Cursor& cur) {
  cur.skip_ws_and_comments();
  if (cur.eof() || cur.peek() != '[') cur.fail("expected '[' starting a matrix");
  cur.advance();
  std::vector<std::vector<double>> rows;
  std::vector<double> row;
  auto flush_row = [&rows, &row]() {
    if (!row.empty()) {
      rows.push_back(row);
      row.clear();
    }
  };
  while (true) {
    // within a row, a bare newline also terminates the row
    while (!cur.eof()) {
      char c = cur.peek();
      if (c == '%') {
        while (!cur.eof() && cur.peek() != '\n') cur.advance();
      } else if (c == ' ' || c == '\t' || c == '\r' || c == ',') {
        cur.advance();
      } else {
        break;
      }
    }
    if (cur.eof()) cur.fail("unterminated matrix literal");
    char c = cur.peek();
    if (c == '\n' || c == ';') {
      cur.advance();
      flush_row();
      continue;
    }
    if (c == ']') {
      cur.advance();
      flush_row();
      break;
    }
    row.push_back(parse_number(cur));
  }
  cur.skip_ws_and_comments();
  if (!cur.eof() && cur.peek() == ';') cur.advance();
  return rows;
}

inline std::string parse_identifier(Cursor& cur) {
  std::size_t start = cur.pos;
  auto is_ident = [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           (c >= '0' && c <= '9') || c == '_' || c == '.';
  };
  while (!cur.eof() && is_ident(cur.peek())) cur.advance();
  return cur.text.substr(start, cur.pos - start);
}

}  // namespace mp

// Optional per-generator emission rates; aligned with the gen table rows.
inline ParseResult parse_matpower(
    const std::string& text,
    const std::vector<double>& emission_rates = {}) {
  mp::Cursor cur{text};
  std::vector<std::vector<double>> bus_tbl, branch_tbl, gen_tbl, gencost_tbl;
  double base_mva = 100.0;
  bool saw_base = false;

  while (true) {
    cur.skip_ws_and_comments();
    if (cur.eof()) break;
    char c = cur.peek();
    if (!((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')))
      cur.fail("expected a statement");
    mp::Cursor at = cur;  // for error reporting on unknown constructs
    std::string ident = mp::parse_identifier(cur);
    cur.skip_ws_and_comments();

    if (ident == "function") {
      // "function mpc = caseNN" -- consume the rest of the line
      while (!cur.eof() && cur.peek() != '\n') cur.advance();
      continue;
    }
    if (cur.eof() || cur.peek() != '=')
      at.fail("unsupported construct '" + ident + "' (matrix-literal subset only)");
    cur.advance();  // '='
    cur.skip_ws_and_comments();

    if (ident == "mpc.version") {
      if (!cur.eof() && cur.peek() == '\'') {
        cur.advance();
        while (!cur.eof() && cur.peek() != '\'') cur.advance();
        if (cur.eof()) cur.fail("unterminated string");
        cur.advance();
        cur.skip_ws_and_comments();
        if (!cur.eof() && cur.peek() == ';') cur.advance();
      } else {
        cur.fail("expected quoted version string");
      }
      continue;
    }
    if (ident == "mpc.baseMVA") {
      base_mva = mp::parse_number(cur);
      saw_base = true;
      cur.skip_ws_and_comments();
      if (!cur.eof() && cur.peek() == ';') cur.advance();
      continue;
    }
    if (ident == "mpc.bus")
      bus_tbl = mp::parse_matrix(cur);
    else if (ident == "mpc.branch")
      branch_tbl = mp::parse_matrix(cur);
    else if (ident == "mpc.gen")
      gen_tbl = mp::parse_matrix(cur);
    else if (ident == "mpc.gencost")
      gencost_tbl = mp::parse_matrix(cur);
    else if (ident.rfind("mpc.bus_name", 0) == 0 || ident == "mpc.areas")
      mp::parse_matrix(cur);  // accepted and ignored
    else
      at.fail("unsupported construct '" + ident + "' (matrix-literal subset only)");
  }

  if (bus_tbl.empty()) throw ParseError("matpower case has no mpc.bus table");
  if (gen_tbl.empty()) throw ParseError("matpower case has no mpc.gen table");
  if (!saw_base) throw ParseError("matpower case has no mpc.baseMVA");

  std::vector<Diagnostic> warnings;
  auto warn = [&warnings](std::string loc, std::string msg) {
    warnings.push_back(
        {Diagnostic::Severity::warning, std::move(loc), std::move(msg)});
  };

  std::vector<Bus> buses;
  bool any_slack = false;
  for (const auto& row : bus_tbl) {
    if (row.size() < 13) throw ParseError("mpc.bus row needs 13 columns");
    Bus b;
    b.id = static_cast<int>(row[0]);
    b.is_slack = static_cast<int>(row[1]) == 3;
    if (b.is_slack) any_slack = true;
    b.base_load = row[2];
    if (row[4] != 0 || row[5] != 0)
      warn("bus " + std::to_string(b.id), "shunt (GS/BS) ignored in DC model");
    buses.push_back(b);
  }
  if (!any_slack)
    throw ParseError("matpower case designates no slack (type-3) bus");

  std::vector<Line> lines;
  for (std::size_t i = 0; i < branch_tbl.size(); ++i) {
    const auto& row = branch_tbl[i];
    if (row.size() < 13) throw ParseError("mpc.branch row needs 13 columns");
    if (row.size() >= 11 && row[10] == 0) {
      warn("branch " + std::to_string(i + 1), "out-of-service branch skipped");
      continue;
    }
    Line l;
    l.from_bus = static_cast<int>(row[0]);
    l.to_bus = static_cast<int>(row[1]);
    if (row[2] != 0 || row[4] != 0)
      warn("branch " + std::to_string(i + 1),
           "resistance/charging ignored in DC model");
    l.reactance = row[3];
    l.flow_limit =
        row[5] > 0 ? row[5] : std::numeric_limits<double>::infinity();
    lines.push_back(l);
  }

  std::vector<Generator> gens;
  std::vector<std::size_t> gen_rows;  // surviving gen table rows
  for (std::size_t i = 0; i < gen_tbl.size(); ++i) {
    const auto& row = gen_tbl[i];
    if (row.size() < 10) throw ParseError("mpc.gen row needs 10 columns");
    if (row.size() >= 8 && row[7] <= 0) {
      warn("gen " + std::to_string(i + 1), "out-of-service generator skipped");
      continue;
    }
    Generator g;
    g.bus = static_cast<int>(row[0]);
    g.p_max = row[8];
    g.p_min = std::max(0.0, row[9]);
    if (row[9] < 0)
      warn("gen " + std::to_string(i + 1), "negative Pmin clamped to 0");
    if (!emission_rates.empty()) {
      if (i >= emission_rates.size())
        throw ParseError("emission sidecar has fewer entries than generators");
      g.emission_rate = emission_rates[i];
    }
    gens.push_back(g);
    gen_rows.push_back(i);
  }

  if (!gencost_tbl.empty()) {
    if (gencost_tbl.size() < gen_tbl.size())
      throw ParseError("mpc.gencost has fewer rows than mpc.gen");
    for (std::size_t k = 0; k < gens.size(); ++k) {
      const auto& row = gencost_tbl[gen_rows[k]];
      if (row.size() < 4) throw ParseError("mpc.gencost row needs 4+ columns");
      int model = static_cast<int>(row[0]);
      if (model != 2)
        throw ParseError(
            "only polynomial gencost (MODEL=2) is supported, got MODEL=" +
            std::to_string(model));
      int ncost = static_cast<int>(row[3]);
      if (row.size() < 4 + static_cast<std::size_t>(ncost))
        throw ParseError("mpc.gencost row shorter than NCOST");
      if (ncost > 3)
        throw ParseError("polynomial gencost degree > 2 not supported");
      CostModel cm;
      // coefficients highest order first
      if (ncost == 3) {
        cm.a = row[4];
        cm.b = row[5];
        cm.c = row[6];
      } else if (ncost == 2) {
        cm.b = row[4];
        cm.c = row[5];
      } else if (ncost == 1) {
        cm.c = row[4];
      }
      gens[k].cost = cm;
    }
  }

  Network net(std::move(buses), std::move(lines), std::move(gens), base_mva);
  require_valid(net);
  return {std::move(net), std::move(warnings)};
}

// Sidecar schema: {"emission_rates_lbs_per_mwh": [...]} aligned with the gen
// table, or an object {"1": gamma, ...} keyed by 1-based generator index.
inline std::vector<double> parse_emission_sidecar(const std::string& text,
                                                  std::size_t num_gens) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("emission sidecar: ") + e.what());
  }
  std::vector<double> gamma(num_gens, 0.0);
  if (j.is_object() && j.contains("emission_rates_lbs_per_mwh"))
    j = j["emission_rates_lbs_per_mwh"];
  if (j.is_array()) {
    if (j.size() < num_gens)
      throw ParseError("emission sidecar has fewer entries than generators");
    for (std::size_t i = 0; i < num_gens; ++i) gamma[i] = j[i].get<double>();
  } else if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      std::size_t idx = std::stoul(it.key());
      if (idx < 1 || idx > num_gens)
        throw ParseError("emission sidecar index " + it.key() +
                         " out of range");
      gamma[idx - 1] = it.value().get<double>();
    }
  } else {
    throw ParseError("emission sidecar must be an array or object");
  }
  for (double g : gamma)
    if (g < 0) throw ParseError("emission rate must be >= 0");
  return gamma;
}

inline ParseResult parse_case(const std::string& text, CaseFormat format,
                              const std::vector<double>& emission_rates = {}) {
  if (format == CaseFormat::native_json) return parse_native_json(text);
  return parse_matpower(text, emission_rates);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Loads a case from disk, inferring the format from the extension and picking
// up "<case>.emissions.json" next to a MATPOWER file when present.
inline ParseResult load_case_file(const std::string& path) {
  const std::string text = read_file(path);
  const bool is_m =
      path.size() > 2 && path.compare(path.size() - 2, 2, ".m") == 0;
  if (!is_m) return parse_native_json(text);

  std::string sidecar_path = path.substr(0, path.size() - 2) + ".emissions.json";
  std::vector<double> gamma;
  {
    std::ifstream probe(sidecar_path);
    if (probe) {
      // need the gen count first; parse once without rates
      ParseResult tmp = parse_matpower(text);
      // sidecar is aligned with raw gen table rows; recover that count by
      // parsing the sidecar with a generous bound, then re-parse the case
      std::ostringstream ss;
      ss << probe.rdbuf();
      // raw row count: surviving gens is a lower bound; use array length when
      // the sidecar is an array
      nlohmann::json j = nlohmann::json::parse(ss.str());
      std::size_t n = tmp.network.num_generators();
      if (j.is_object() && j.contains("emission_rates_lbs_per_mwh") &&
          j["emission_rates_lbs_per_mwh"].is_array())
        n = std::max(n, j["emission_rates_lbs_per_mwh"].size());
      else if (j.is_array())
        n = std::max(n, j.size());
      gamma = parse_emission_sidecar(ss.str(), n);
    }
  }
  return parse_matpower(text, gamma);
}

}  // namespace ctrace
