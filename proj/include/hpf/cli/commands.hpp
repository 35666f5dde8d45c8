#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hpf/arima.hpp"
#include "hpf/ingest.hpp"
#include "hpf/neural.hpp"
#include "hpf/seriesprep.hpp"
#include "hpf/synth.hpp"
#include "hpf/training.hpp"

namespace hpf::cli {

namespace fs = std::filesystem;

/// Output directory root: $HPF_OUTPUT_ROOT when set, otherwise ./hpf-out.
fs::path default_output_root();

// ---- ingest ------------------------------------------------------------------

struct IngestOptions {
  fs::path input;
  fs::path output_dir;
  std::optional<ingest::CalendarRange> calendar;  // defaults to the span of the records
  std::optional<std::string> alternate_date_format;
  ingest::GapPolicy gap_policy = ingest::GapPolicy::interpolate;
};

struct IngestSummary {
  Index months = 0;
  Index districts = 0;
  Index filled_cells = 0;
  std::size_t records = 0;
  std::size_t rejected = 0;
};

/// Writes matrix.csv, coverage.csv, rejected.csv and summary.json.
IngestSummary cmd_ingest(const IngestOptions& options);

// ---- synth -------------------------------------------------------------------

/// Writes the transaction CSV to `output`.
synth::SyntheticData cmd_synth(const synth::SyntheticSpec& spec, const fs::path& output);

// ---- train -------------------------------------------------------------------

struct ModelOptions {
  neural::CellKind kind = neural::CellKind::lstm;
  Index layers = 1;
  Index hidden = 16;
};

struct DataOptions {
  Index window_len = 15;
  Index n_val = 14;
  prep::NormScope scope = prep::NormScope::per_district;
  bool leakage_safe = false;  // normalization statistics from the training months only
  std::string district;  // empty: all districts
};

struct StatefulOptions {
  Index batch_size = 5;
  Index steps_per_batch = 27;
  Index train_steps = 25;
};

struct TrainOptions {
  fs::path matrix;
  fs::path output_dir;
  DataOptions data;
  ModelOptions model;
  training::TrainConfig train;
  StatefulOptions stateful;
};

/// Everything the training pipeline produced, in normalized units.
struct TrainOutcome {
  training::TrainResult result;
  prep::NormalizationParams normalization;
  std::vector<std::string> districts;
  ingest::YearMonth last_month;
  double final_train_mse = 0.0;
  std::optional<double> final_val_mse;
  std::optional<double> best_val_mse;
};

/// normalize -> window -> split -> train, in memory.
TrainOutcome run_training(const ingest::PriceMatrix& matrix, const TrainOptions& options);

/// Runs the pipeline and writes checkpoint.json, checkpoint_best.json, metrics.csv and
/// summary.json. On divergence the partial metrics are written before rethrowing.
TrainOutcome cmd_train(const TrainOptions& options);

struct SweepOptions {
  TrainOptions base;
  std::vector<Index> hidden_units{4, 16, 64, 256};
  int jobs = 1;
};

/// One training run per hidden size in hidden_<n>/ plus sweep.csv.
std::vector<TrainOutcome> cmd_sweep(const SweepOptions& options);

// ---- baseline ----------------------------------------------------------------

struct BaselineOptions {
  fs::path matrix;
  fs::path output_dir;
  std::string district;  // required unless the matrix has one district
  arima::ArimaSpec spec;
  arima::OptimizerConfig optimizer;
  arima::ReturnKind returns = arima::ReturnKind::simple;
  int horizon = 14;
  Index test_months = 14;
};

struct BaselineOutcome {
  arima::ArimaFit fit;
  bool converged = true;
  VectorXd predicted_prices;  // horizon values following the training months
  VectorXd actual_prices;     // as many held-out months as exist, up to horizon
  double normalized_mse = 0.0;
};

/// Returns of the first prices.size() - test_months prices -> ARMA fit -> forecast ->
/// prices -> min-max normalization over the whole series -> MSE on the held-out months.
BaselineOutcome run_baseline(const VectorXd& prices, const BaselineOptions& options);

/// Writes fit_table.json, fit_table.txt, forecast.csv and summary.json.
/// Throws ConvergenceError after writing outputs if the fit did not converge.
BaselineOutcome cmd_baseline(const BaselineOptions& options);

// ---- forecast ----------------------------------------------------------------

struct ForecastOptions {
  fs::path checkpoint;
  fs::path history;
  fs::path output;
  Index steps = 2;
};

struct ForecastRow {
  std::string district;
  ingest::YearMonth month;
  double predicted_price = 0.0;
};

/// Emits `district,month,predicted_price`, months continuing the history's calendar.
std::vector<ForecastRow> cmd_forecast(const ForecastOptions& options);

// ---- gradcheck ---------------------------------------------------------------

struct GradcheckOptions {
  ModelOptions model{neural::CellKind::lstm, 1, 4};
  Index input_dim = 3;
  Index window_len = 15;
  std::uint64_t seed = 0;
  double epsilon = 1e-5;
  double tolerance = 1e-4;
};

/// Random window and target, fresh parameters, full tensor-by-tensor check.
neural::GradCheckReport run_gradcheck(const GradcheckOptions& options);
std::string format_gradcheck(const neural::GradCheckReport& report, double tolerance);

}  // namespace hpf::cli
