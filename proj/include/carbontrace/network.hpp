#pragma once

// Immutable grid description: buses, lines, generators, slack designation.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctrace {

constexpr double kLbsPerShortTon = 2000.0;

struct CostModel {
  double a = 0.0;  // $/MW^2 h
  double b = 0.0;  // $/MWh
  double c = 0.0;  // $/h
};

struct Bus {
  int id = 0;            // external 1-based id
  double base_load = 0;  // MW
  bool is_slack = false;
};

struct Line {
  int from_bus = 0;
  int to_bus = 0;
  double reactance = 0;   // per unit
  double flow_limit = 0;  // MW; infinity when unlimited
};

struct Generator {
  int bus = 0;
  double p_min = 0;  // MW
  double p_max = 0;  // MW
  double emission_rate = 0;  // lbs CO2 / MWh
  CostModel cost;
};

struct Diagnostic {
  enum class Severity { warning, error };
  Severity severity = Severity::error;
  std::string location;
  std::string message;
};

class Network {
 public:
  Network(std::vector<Bus> buses, std::vector<Line> lines,
          std::vector<Generator> generators, double base_mva = 100.0)
      : buses_(std::move(buses)),
        lines_(std::move(lines)),
        generators_(std::move(generators)),
        base_mva_(base_mva) {
    for (std::size_t i = 0; i < buses_.size(); ++i) {
      if (!bus_index_.emplace(buses_[i].id, static_cast<int>(i)).second)
        throw std::invalid_argument("duplicate bus id " +
                                    std::to_string(buses_[i].id));
    }
  }

  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Line>& lines() const { return lines_; }
  const std::vector<Generator>& generators() const { return generators_; }
  double base_mva() const { return base_mva_; }

  std::size_t num_buses() const { return buses_.size(); }
  std::size_t num_lines() const { return lines_.size(); }
  std::size_t num_generators() const { return generators_.size(); }

  // External id -> internal 0-based index.
  int bus_index(int external_id) const {
    auto it = bus_index_.find(external_id);
    if (it == bus_index_.end())
      throw std::out_of_range("unknown bus id " + std::to_string(external_id));
    return it->second;
  }
  bool has_bus(int external_id) const {
    return bus_index_.count(external_id) != 0;
  }

  int slack_index() const {
    for (std::size_t i = 0; i < buses_.size(); ++i)
      if (buses_[i].is_slack) return static_cast<int>(i);
    throw std::logic_error("network has no slack bus");
  }

  std::vector<double> base_loads() const {
    std::vector<double> d(buses_.size());
    for (std::size_t i = 0; i < buses_.size(); ++i) d[i] = buses_[i].base_load;
    return d;
  }

  // FNV-1a over the canonical field sequence; used to tie datasets and
  // factor matrices back to the network they were built from.
  std::uint64_t fingerprint() const;

 private:
  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  std::vector<Generator> generators_;
  double base_mva_;
  std::map<int, int> bus_index_;
};

// Collects invariant violations without throwing. Empty result means valid.
std::vector<Diagnostic> validate_network(const Network& net);

inline void require_valid(const Network& net) {
  for (const auto& d : validate_network(net))
    if (d.severity == Diagnostic::Severity::error)
      throw std::invalid_argument("invalid network: " + d.location + ": " +
                                  d.message);
}

namespace detail {

inline std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a_double(std::uint64_t h, double v) {
  // normalize -0.0 so equal-valued networks hash identically
  if (v == 0.0) v = 0.0;
  return fnv1a(h, &v, sizeof v);
}

inline std::uint64_t fnv1a_int(std::uint64_t h, std::int64_t v) {
  return fnv1a(h, &v, sizeof v);
}

}  // namespace detail

inline std::uint64_t Network::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  using detail::fnv1a_double;
  using detail::fnv1a_int;
  for (const auto& b : buses_) {
    h = fnv1a_int(h, b.id);
    h = fnv1a_double(h, b.base_load);
    h = fnv1a_int(h, b.is_slack ? 1 : 0);
  }
  for (const auto& l : lines_) {
    h = fnv1a_int(h, l.from_bus);
    h = fnv1a_int(h, l.to_bus);
    h = fnv1a_double(h, l.reactance);
    h = fnv1a_double(h, l.flow_limit);
  }
  for (const auto& g : generators_) {
    h = fnv1a_int(h, g.bus);
    h = fnv1a_double(h, g.p_min);
    h = fnv1a_double(h, g.p_max);
    h = fnv1a_double(h, g.emission_rate);
    h = fnv1a_double(h, g.cost.a);
    h = fnv1a_double(h, g.cost.b);
    h = fnv1a_double(h, g.cost.c);
  }
  h = fnv1a_double(h, base_mva_);
  return h;
}

inline std::vector<Diagnostic> validate_network(const Network& net) {
  std::vector<Diagnostic> out;
  auto error = [&out](std::string loc, std::string msg) {
    out.push_back({Diagnostic::Severity::error, std::move(loc), std::move(msg)});
  };

  int slack_count = 0;
  for (const auto& b : net.buses()) {
    std::string loc = "bus " + std::to_string(b.id);
    if (b.is_slack) ++slack_count;
    if (b.base_load < 0) error(loc, "base_load must be >= 0");
  }
  if (slack_count == 0)
    error("network", "no slack bus designated");
  else if (slack_count > 1)
    error("network", std::to_string(slack_count) + " slack buses, expected 1");

  for (std::size_t i = 0; i < net.lines().size(); ++i) {
    const auto& l = net.lines()[i];
    std::string loc = "line " + std::to_string(i + 1);
    if (!net.has_bus(l.from_bus))
      error(loc, "dangling from_bus " + std::to_string(l.from_bus));
    if (!net.has_bus(l.to_bus))
      error(loc, "dangling to_bus " + std::to_string(l.to_bus));
    if (l.from_bus == l.to_bus) error(loc, "from_bus equals to_bus");
    if (!(l.reactance > 0)) error(loc, "reactance must be > 0");
    if (!(l.flow_limit > 0)) error(loc, "flow_limit must be > 0");
  }

  for (std::size_t i = 0; i < net.generators().size(); ++i) {
    const auto& g = net.generators()[i];
    std::string loc = "generator " + std::to_string(i + 1);
    if (!net.has_bus(g.bus))
      error(loc, "dangling bus reference " + std::to_string(g.bus));
    if (g.p_min < 0) error(loc, "p_min must be >= 0");
    if (g.p_min > g.p_max) error(loc, "p_min > p_max");
    if (g.emission_rate < 0) error(loc, "emission_rate must be >= 0");
    if (g.cost.a < 0) error(loc, "quadratic cost coefficient must be >= 0");
  }

  // connectivity over buses via lines (only when references resolve)
  bool refs_ok = true;
  for (const auto& l : net.lines())
    if (!net.has_bus(l.from_bus) || !net.has_bus(l.to_bus)) refs_ok = false;
  if (refs_ok && net.num_buses() > 0) {
    std::vector<std::vector<int>> adj(net.num_buses());
    for (const auto& l : net.lines()) {
      int a = net.bus_index(l.from_bus), b = net.bus_index(l.to_bus);
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    std::vector<char> seen(net.num_buses(), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (int w : adj[v])
        if (!seen[w]) {
          seen[w] = 1;
          ++count;
          stack.push_back(w);
        }
    }
    if (count != net.num_buses()) {
      std::string isolated;
      for (std::size_t i = 0; i < net.num_buses(); ++i)
        if (!seen[i]) {
          if (!isolated.empty()) isolated += ",";
          isolated += std::to_string(net.buses()[i].id);
        }
      error("network", "connected graph violated; unreachable buses: " + isolated);
    }
  }
  return out;
}

}  // namespace ctrace
