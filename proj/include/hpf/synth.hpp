#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "hpf/core.hpp"
#include "hpf/ingest.hpp"

namespace hpf::synth {

/// Generator settings. Per-district parameters are drawn once from the centre values
/// below, each scaled by a factor uniform in [1 - district_variation, 1 + district_variation].
struct SyntheticSpec {
  Index districts = 80;
  Index months = 154;
  ingest::YearMonth start{2004, 1};

  double base_price = 20000.0;
  double trend_slope = 60.0;  // price units per month
  double seasonal_amplitude = 800.0;
  double seasonal_period = 12.0;  // months
  double curvature = 0.0;  // price units per month squared
  double noise_scale = 0.0;  // std dev of the monthly mean disturbance's innovations
  double noise_persistence = 0.0;  // AR(1) coefficient of the disturbance, in [0, 1)
  double district_variation = 0.3;

  Index transactions_per_cell = 5;
  double transaction_spread = 0.05;  // relative dispersion of single sales around the cell mean
  double missing_probability = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DistrictParams {
  double base = 0.0;
  double trend = 0.0;
  double amplitude = 0.0;
  double phase = 0.0;  // radians
  double curvature = 0.0;
};

/// Noise-free monthly mean: base + trend*t + amplitude*sin(2*pi*t/period + phase) + curvature*t^2.
double analytic_mean(const DistrictParams& d, double period, Index t);

struct SyntheticData {
  std::vector<DistrictParams> districts;
  std::vector<std::string> names;
  MatrixXd cell_means;  // analytic mean plus the drawn disturbance, NaN where the cell is missing
  std::vector<ingest::TransactionRecord> transactions;
};

/// Deterministic given spec.seed. Throws DomainError if any generated price is not positive.
SyntheticData generate(const SyntheticSpec& spec);

/// Analytic (noise-free) matrix, months x districts.
MatrixXd analytic_matrix(const SyntheticSpec& spec, const std::vector<DistrictParams>& districts);

void write_transactions_csv(std::ostream& out, const std::vector<ingest::TransactionRecord>& records);

}  // namespace hpf::synth
