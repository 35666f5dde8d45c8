#include "hpf/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <random>

#include "hpf/errors.hpp"
#include "hpf/text.hpp"

namespace hpf::synth {

void SyntheticSpec::validate() const {
  if (districts < 1 || months < 1) throw DomainError("synthetic data needs at least one district and one month");
  if (!(seasonal_period > 0.0)) throw DomainError("seasonal period must be positive");
  if (transactions_per_cell < 1) throw DomainError("need at least one transaction per cell");
  if (missing_probability < 0.0 || missing_probability >= 1.0) {
    throw DomainError("missing-cell probability must lie in [0, 1)");
  }
  if (district_variation < 0.0 || district_variation >= 1.0) {
    throw DomainError("district variation must lie in [0, 1)");
  }
  if (noise_scale < 0.0 || transaction_spread < 0.0) throw DomainError("noise settings must be non-negative");
  if (!(noise_persistence >= 0.0 && noise_persistence < 1.0)) throw DomainError("noise persistence must lie in [0, 1)");
}

double analytic_mean(const DistrictParams& d, double period, Index t) {
  const double x = static_cast<double>(t);
  return d.base + d.trend * x + d.amplitude * std::sin(2.0 * std::numbers::pi * x / period + d.phase) +
         d.curvature * x * x;
}

MatrixXd analytic_matrix(const SyntheticSpec& spec, const std::vector<DistrictParams>& districts) {
  MatrixXd m(spec.months, static_cast<Index>(districts.size()));
  for (Index d = 0; d < m.cols(); ++d) {
    for (Index t = 0; t < m.rows(); ++t) m(t, d) = analytic_mean(districts[static_cast<std::size_t>(d)], spec.seasonal_period, t);
  }
  return m;
}

SyntheticData generate(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto vary = [&](double centre) { return centre * (1.0 + spec.district_variation * (2.0 * unit(rng) - 1.0)); };

  SyntheticData data;
  for (Index d = 0; d < spec.districts; ++d) {
    DistrictParams p;
    p.base = vary(spec.base_price);
    p.trend = vary(spec.trend_slope);
    p.amplitude = vary(spec.seasonal_amplitude);
    p.phase = 2.0 * std::numbers::pi * unit(rng);
    p.curvature = vary(spec.curvature);
    data.districts.push_back(p);
    char name[32];
    std::snprintf(name, sizeof(name), "district%02lld", static_cast<long long>(d));
    data.names.emplace_back(name);
  }

  data.cell_means = analytic_matrix(spec, data.districts);
  const auto n = spec.transactions_per_cell;
  std::vector<double> z(static_cast<std::size_t>(n));
  VectorXd disturbance = VectorXd::Zero(spec.districts);
  ingest::YearMonth month = spec.start;
  for (Index t = 0; t < spec.months; ++t, month = month.next()) {
    for (Index d = 0; d < spec.districts; ++d) {
      double& mean = data.cell_means(t, d);
      if (spec.noise_scale > 0.0) {
        disturbance(d) = spec.noise_persistence * disturbance(d) + spec.noise_scale * normal(rng);
        mean += disturbance(d);
      }
      if (spec.missing_probability > 0.0 && unit(rng) < spec.missing_probability) {
        mean = std::nan("");
        continue;
      }
      // Centred deviations keep the cell average at `mean`.
      double zbar = 0.0;
      for (auto& v : z) {
        v = normal(rng);
        zbar += v;
      }
      zbar /= static_cast<double>(n);
      for (auto v : z) {
        const double price = mean * (1.0 + spec.transaction_spread * (v - zbar));
        if (!(price > 0.0)) {
          throw DomainError("generated a non-positive price; raise base_price or lower the trend, amplitude, "
                            "noise or transaction spread");
        }
        data.transactions.push_back({month, data.names[static_cast<std::size_t>(d)], price});
      }
    }
  }
  return data;
}

void write_transactions_csv(std::ostream& out, const std::vector<ingest::TransactionRecord>& records) {
  out << "date,district,price\n";
  for (const auto& r : records) out << r.date.to_string() << ',' << r.district << ',' << text::format_double(r.price) << '\n';
}

}  // namespace hpf::synth
