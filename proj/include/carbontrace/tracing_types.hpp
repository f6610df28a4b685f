#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

namespace ctrace {

// Generator-to-load distribution factors. Columns sum to one (lossless
// allocation); entries live in [0, 1] up to fit tolerance.
struct FactorMatrix {
  Eigen::MatrixXd alpha;  // N x G
  Eigen::VectorXd per_bus_mae;     // training-set MAE per bus, MW
  Eigen::VectorXd per_bus_max_ae;  // training-set Max-AE per bus, MW
  std::uint64_t network_fingerprint = 0;
  std::vector<int> dropped_generators;  // zero-output columns excluded from fit

  double mae() const {
    return per_bus_mae.size() ? per_bus_mae.mean() : 0.0;
  }
  double max_ae() const {
    return per_bus_max_ae.size() ? per_bus_max_ae.maxCoeff() : 0.0;
  }
};

// Per-bus emission signals. Entries are nullopt where the quantity is
// undefined (no load for ANCE, no contribution for LMCE).
struct CarbonReport {
  Eigen::VectorXd e_n;                          // lbs
  std::vector<std::optional<double>> ance;      // lbs/MWh
  std::vector<std::optional<double>> lmce;      // lbs/MWh
  std::vector<int> in_service_set;              // generator indices used for mu
};

}  // namespace ctrace
