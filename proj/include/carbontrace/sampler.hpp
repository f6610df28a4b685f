#pragma once

// Load scenario sampling and dataset assembly: draw load scale factors,
// solve the baseline OPF per scenario, keep (dispatch, load) pairs.
//
// RNG: std::mt19937_64 (bit-exact across platforms per the C++ standard)
// with an explicit 53-bit mapping to [lo, hi); datasets are reproducible
// from (network, S, range, seed, scaling mode) alone.

#include <Eigen/Dense>
#include <atomic>
#include <cstdlib>
#include <random>
#include <thread>
#include <vector>

#include "carbontrace/dispatch.hpp"
#include "carbontrace/network.hpp"
#include "carbontrace/ptdf.hpp"

namespace ctrace {

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

enum class LoadScaling {
  per_bus,  // independent factor per load bus
  system,   // one shared factor per scenario
};

struct LoadScenario {
  Eigen::VectorXd scale_factors;  // per bus, in [lo, hi]; 1.0 at zero-load buses
  Eigen::VectorXd loads;          // MW
};

struct Dataset {
  // one sample per solved scenario, aligned arrays
  std::vector<Eigen::VectorXd> dispatches;  // p_g, MW
  std::vector<Eigen::VectorXd> loads;       // d_n, MW
  std::uint64_t network_fingerprint = 0;
  std::uint64_t seed = 0;
  int infeasible_redraws = 0;
  LoadScaling scaling = LoadScaling::per_bus;

  std::size_t size() const { return dispatches.size(); }
};

inline int thread_count() {
  if (const char* env = std::getenv("CTRACE_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

// Deterministic output: work item i writes slot i regardless of schedule.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const int workers = std::min<int>(thread_count(), static_cast<int>(count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      while (true) {
        std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        fn(i);
      }
    });
  for (auto& t : pool) t.join();
}

inline LoadScenario draw_scenario(const Network& net, double lo, double hi,
                                  std::mt19937_64& rng,
                                  LoadScaling scaling = LoadScaling::per_bus) {
  if (!(0 <= lo && lo <= hi))
    throw std::invalid_argument("load range requires 0 <= lo <= hi");
  const auto n = static_cast<Eigen::Index>(net.num_buses());
  LoadScenario sc;
  sc.scale_factors = Eigen::VectorXd::Ones(n);
  sc.loads = Eigen::VectorXd::Zero(n);
  double shared = lo + (hi - lo) * uniform01(rng);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double base = net.buses()[static_cast<std::size_t>(i)].base_load;
    if (base <= 0) continue;  // zero-load buses stay zero
    const double f = scaling == LoadScaling::per_bus
                         ? lo + (hi - lo) * uniform01(rng)
                         : shared;
    sc.scale_factors(i) = f;
    sc.loads(i) = f * base;
  }
  return sc;
}

inline LoadScenario sample_loads(const Network& net,
                                 std::pair<double, double> range,
                                 std::uint64_t seed,
                                 LoadScaling scaling = LoadScaling::per_bus) {
  std::mt19937_64 rng(seed);
  return draw_scenario(net, range.first, range.second, rng, scaling);
}

inline Dataset generate_dataset(const Network& net, const PtdfMatrix& ptdf,
                                std::size_t sample_count,
                                std::pair<double, double> range,
                                std::uint64_t seed,
                                LoadScaling scaling = LoadScaling::per_bus) {
  if (sample_count < 1) throw std::invalid_argument("sample count must be >= 1");
  Dataset ds;
  ds.network_fingerprint = net.fingerprint();
  ds.seed = seed;
  ds.scaling = scaling;
  std::mt19937_64 rng(seed);

  std::size_t attempts = 0;
  while (ds.size() < sample_count) {
    // scenarios are drawn sequentially (fixing the RNG stream), solved in
    // parallel, and kept in draw order, so output is schedule-independent
    const std::size_t want = sample_count - ds.size();
    std::vector<LoadScenario> wave(want);
    for (auto& sc : wave)
      sc = draw_scenario(net, range.first, range.second, rng, scaling);
    std::vector<DispatchResult> results(want);
    parallel_for(want, [&](std::size_t i) {
      try {
        results[i] = solve_baseline(net, wave[i].loads, ptdf);
      } catch (const InfeasibleDispatchError&) {
        results[i].status = SolveStatus::infeasible;
      }
    });
    for (std::size_t i = 0; i < want; ++i) {
      ++attempts;
      if (results[i].status == SolveStatus::optimal) {
        ds.dispatches.push_back(results[i].p_g);
        ds.loads.push_back(wave[i].loads);
      } else {
        ++ds.infeasible_redraws;
      }
    }
    if (attempts >= 2 * sample_count && attempts >= 20 &&
        ds.infeasible_redraws * 2 > static_cast<int>(attempts))
      throw std::runtime_error(
          "more than half of sampled scenarios are infeasible (" +
          std::to_string(ds.infeasible_redraws) + " of " +
          std::to_string(attempts) + "); check the case configuration");
  }
  return ds;
}

inline std::pair<Dataset, Dataset> split(const Dataset& ds,
                                         double train_fraction,
                                         std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("train fraction must be in (0, 1)");
  const std::size_t n = ds.size();
  const auto n_train =
      static_cast<std::size_t>(std::llround(train_fraction * n));
  if (n_train == 0 || n_train == n)
    throw std::invalid_argument("split would leave an empty partition");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with the portable uniform; std::shuffle is not
  // implementation-independent
  for (std::size_t i = n - 1; i > 0; --i) {
    auto j = static_cast<std::size_t>(uniform01(rng) * (i + 1));
    if (j > i) j = i;
    std::swap(order[i], order[j]);
  }

  Dataset train = ds, test = ds;
  train.dispatches.clear();
  train.loads.clear();
  test.dispatches.clear();
  test.loads.clear();
  for (std::size_t k = 0; k < n; ++k) {
    Dataset& dst = k < n_train ? train : test;
    dst.dispatches.push_back(ds.dispatches[order[k]]);
    dst.loads.push_back(ds.loads[order[k]]);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace ctrace
