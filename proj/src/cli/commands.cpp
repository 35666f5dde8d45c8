#include "hpf/cli/commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <future>
#include <random>
#include <sstream>

#include "hpf/neural/checkpoint.hpp"
#include "hpf/text.hpp"
#include "json.hpp"

namespace hpf::cli {

namespace {

using nlohmann::json;

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

void write_json(const fs::path& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

ingest::PriceMatrix load_matrix(const fs::path& path) {
  auto in = open_in(path);
  auto m = ingest::read_matrix_csv(in);
  if (m.missing_cells() > 0) m = ingest::fill_gaps(m);
  return m;
}

/// Restrict to one district, identified by name.
ingest::PriceMatrix select_district(const ingest::PriceMatrix& m, const std::string& name) {
  auto idx = m.district_index(name);
  if (!idx) throw UsageError("district '" + name + "' is not in the matrix");
  ingest::PriceMatrix out;
  out.months = m.months;
  out.districts = {m.districts[static_cast<std::size_t>(*idx)]};
  out.values = m.values.col(*idx);
  out.coverage = m.coverage.col(*idx);
  return out;
}

}  // namespace

fs::path default_output_root() {
  if (const char* root = std::getenv("HPF_OUTPUT_ROOT"); root && *root) return root;
  return "hpf-out";
}

IngestSummary cmd_ingest(const IngestOptions& options) {
  auto in = open_in(options.input);
  ingest::ParseOptions parse_options;
  parse_options.alternate_date_format = options.alternate_date_format;
  parse_options.calendar = options.calendar;
  auto parsed = ingest::parse_transactions(in, parse_options);
  if (parsed.records.empty()) throw DomainError("no usable transactions in '" + options.input.string() + "'");

  ingest::CalendarRange calendar;
  if (options.calendar) {
    calendar = *options.calendar;
  } else {
    auto [lo, hi] = std::minmax_element(parsed.records.begin(), parsed.records.end(),
                                        [](const auto& a, const auto& b) { return a.date < b.date; });
    calendar = {lo->date, hi->date};
  }
  const auto raw = ingest::aggregate_monthly(parsed.records, calendar);
  const auto filled = ingest::fill_gaps(raw, options.gap_policy);

  fs::create_directories(options.output_dir);
  {
    auto out = open_out(options.output_dir / "matrix.csv");
    ingest::write_matrix_csv(out, filled);
  }
  {
    auto out = open_out(options.output_dir / "coverage.csv");
    out << "month";
    for (const auto& d : filled.districts) out << ',' << d;
    out << '\n';
    for (Index t = 0; t < filled.num_months(); ++t) {
      out << filled.months[static_cast<std::size_t>(t)].to_string();
      for (Index d = 0; d < filled.num_districts(); ++d) out << ',' << filled.coverage(t, d);
      out << '\n';
    }
  }
  {
    auto out = open_out(options.output_dir / "rejected.csv");
    ingest::write_rejections(out, parsed.rejected);
  }

  IngestSummary s{filled.num_months(), filled.num_districts(), filled.zero_coverage_cells(), parsed.records.size(),
                  parsed.rejected.size()};
  write_json(options.output_dir / "summary.json", {{"months", s.months},
                                                   {"districts", s.districts},
                                                   {"filled_cells", s.filled_cells},
                                                   {"records", s.records},
                                                   {"rejected", s.rejected},
                                                   {"first_month", calendar.first.to_string()},
                                                   {"last_month", calendar.last.to_string()},
                                                   {"dropped_districts", raw.num_districts() - filled.num_districts()}});
  return s;
}

synth::SyntheticData cmd_synth(const synth::SyntheticSpec& spec, const fs::path& output) {
  auto data = synth::generate(spec);
  auto out = open_out(output);
  synth::write_transactions_csv(out, data.transactions);
  return data;
}

TrainOutcome run_training(const ingest::PriceMatrix& source, const TrainOptions& options) {
  const auto matrix = options.data.district.empty() ? source : select_district(source, options.data.district);
  const auto& d = options.data;

  std::optional<Index> fit_rows;
  if (d.leakage_safe) fit_rows = matrix.num_months() - d.n_val;
  auto norm = prep::normalize(matrix.values, d.scope, matrix.districts, fit_rows);
  auto dataset = prep::split(prep::make_windows(norm.values, d.window_len), d.n_val);

  const Index dim = matrix.num_districts();
  auto spec = neural::StackedSpec::stacked(options.model.kind, dim, options.model.hidden, options.model.layers, dim);
  auto model = neural::init_params<double>(spec, options.train.seed);

  TrainOutcome outcome;
  if (options.train.mode == training::Mode::stateless) {
    outcome.result = training::train_stateless(std::move(model), dataset, options.train);
    outcome.final_train_mse = training::evaluate(outcome.result.final_model, dataset, dataset.train);
    if (!dataset.validation.empty()) {
      outcome.final_val_mse = training::evaluate(outcome.result.final_model, dataset, dataset.validation);
    }
  } else {
    const auto& s = options.stateful;
    auto layout = prep::stateful_reshape(dataset, s.batch_size, s.steps_per_batch, s.train_steps);
    outcome.result = training::train_stateful(std::move(model), layout, options.train);
    double total = 0.0;
    for (Index lane = 0; lane < layout.batch_size; ++lane) {
      const auto pass = training::run_lane(outcome.result.final_model, layout, lane, options.train.carry, layout.train_steps);
      for (double v : pass.mse) total += v;
    }
    outcome.final_train_mse = total / static_cast<double>(layout.train_positions());
    if (layout.test_positions() > 0) {
      outcome.final_val_mse = training::evaluate_stateful(outcome.result.final_model, layout, options.train.carry);
    }
  }
  for (const auto& r : outcome.result.log.records) {
    if (r.val_mse && (!outcome.best_val_mse || *r.val_mse < *outcome.best_val_mse)) outcome.best_val_mse = r.val_mse;
  }
  outcome.normalization = norm.params;
  outcome.districts = matrix.districts;
  outcome.last_month = matrix.months.back();
  return outcome;
}

TrainOutcome cmd_train(const TrainOptions& options) {
  const auto matrix = load_matrix(options.matrix);
  fs::create_directories(options.output_dir);
  TrainOutcome outcome;
  try {
    outcome = run_training(matrix, options);
  } catch (const training::TrainingError& e) {
    auto out = open_out(options.output_dir / "metrics.csv");
    e.log().write_csv(out);
    throw;
  }

  auto checkpoint = [&](const training::Model& m) {
    return neural::Checkpoint{m, options.train.seed, options.data.window_len, outcome.normalization, outcome.districts,
                              outcome.last_month};
  };
  neural::save_checkpoint((options.output_dir / "checkpoint.json").string(), checkpoint(outcome.result.final_model));
  neural::save_checkpoint((options.output_dir / "checkpoint_best.json").string(), checkpoint(outcome.result.best_model));
  {
    auto out = open_out(options.output_dir / "metrics.csv");
    outcome.result.log.write_csv(out);
  }
  write_json(options.output_dir / "summary.json",
             {{"mode", options.train.mode == training::Mode::stateless ? "stateless" : "stateful"},
              {"kind", neural::to_string(options.model.kind)},
              {"layers", options.model.layers},
              {"hidden", options.model.hidden},
              {"districts", outcome.districts.size()},
              {"parameters", neural::parameter_count(outcome.result.final_model.params())},
              {"steps", options.train.total_steps},
              {"final_train_mse", outcome.final_train_mse},
              {"final_val_mse", opt_json(outcome.final_val_mse)},
              {"best_step", outcome.result.best_step},
              {"best_val_mse", opt_json(outcome.best_val_mse)}});
  return outcome;
}

std::vector<TrainOutcome> cmd_sweep(const SweepOptions& options) {
  if (options.hidden_units.empty()) throw UsageError("sweep needs at least one hidden size");
  const auto matrix = load_matrix(options.base.matrix);
  fs::create_directories(options.base.output_dir);

  auto run_one = [&](Index hidden) {
    TrainOptions o = options.base;
    o.model.hidden = hidden;
    o.matrix = options.base.matrix;
    o.output_dir = options.base.output_dir / ("hidden_" + std::to_string(hidden));
    return cmd_train(o);
  };

  std::vector<TrainOutcome> outcomes(options.hidden_units.size());
  const std::size_t jobs = static_cast<std::size_t>(std::max(1, options.jobs));
  for (std::size_t start = 0; start < options.hidden_units.size(); start += jobs) {
    std::vector<std::future<TrainOutcome>> running;
    const std::size_t stop = std::min(options.hidden_units.size(), start + jobs);
    for (std::size_t i = start; i < stop; ++i) {
      running.push_back(std::async(std::launch::async, run_one, options.hidden_units[i]));
    }
    for (std::size_t i = start; i < stop; ++i) outcomes[i] = running[i - start].get();
  }

  auto out = open_out(options.base.output_dir / "sweep.csv");
  out << "hidden,final_train_mse,final_val_mse,best_val_mse\n";
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    out << options.hidden_units[i] << ',' << text::format_double(o.final_train_mse) << ','
        << (o.final_val_mse ? text::format_double(*o.final_val_mse) : "") << ','
        << (o.best_val_mse ? text::format_double(*o.best_val_mse) : "") << '\n';
  }
  return outcomes;
}

BaselineOutcome run_baseline(const VectorXd& prices, const BaselineOptions& options) {
  if (options.horizon < 1) throw DomainError("baseline horizon must be at least 1");
  const Index train_months = prices.size() - options.test_months;
  if (options.test_months < 0 || train_months < 3) throw DomainError("not enough months left to fit the baseline");

  const VectorXd returns = arima::to_returns(prices.head(train_months), options.returns);
  BaselineOutcome outcome;
  try {
    outcome.fit = arima::fit_mle(options.spec, returns, options.optimizer);
  } catch (const arima::ConvergenceError& e) {
    outcome.fit = e.best();
    outcome.converged = false;
    outcome.fit.warnings.emplace_back(e.what());
  }
  outcome.fit.std_errors = arima::std_errors(outcome.fit, returns);

  const VectorXd predicted_returns = arima::forecast(outcome.fit, returns, options.horizon);
  const VectorXd path = arima::from_returns(prices(train_months - 1), predicted_returns, options.returns);
  outcome.predicted_prices = path.tail(options.horizon);

  const Index available = std::min<Index>(options.horizon, prices.size() - train_months);
  outcome.actual_prices = prices.segment(train_months, available);
  if (available > 0) {
    const auto norm = prep::normalize(MatrixXd(prices), prep::NormScope::per_district);
    const VectorXd p = norm.params.apply_column(outcome.predicted_prices.head(available), 0);
    const VectorXd a = norm.params.apply_column(outcome.actual_prices, 0);
    outcome.normalized_mse = (p - a).squaredNorm() / static_cast<double>(available);
  }
  return outcome;
}

BaselineOutcome cmd_baseline(const BaselineOptions& options) {
  const auto matrix = load_matrix(options.matrix);
  std::string district = options.district;
  if (district.empty()) {
    if (matrix.num_districts() != 1) throw UsageError("baseline needs --district when the matrix has several");
    district = matrix.districts.front();
  }
  const auto single = select_district(matrix, district);
  const VectorXd prices = single.values.col(0);
  auto outcome = run_baseline(prices, options);

  fs::create_directories(options.output_dir);
  open_out(options.output_dir / "fit_table.txt") << arima::fit_table_text(outcome.fit);
  open_out(options.output_dir / "fit_table.json") << arima::fit_table_json(outcome.fit) << '\n';
  {
    auto out = open_out(options.output_dir / "forecast.csv");
    out << "month,predicted_price,actual_price\n";
    const Index train_months = prices.size() - options.test_months;
    for (Index h = 0; h < outcome.predicted_prices.size(); ++h) {
      out << single.months[static_cast<std::size_t>(train_months - 1)].next(static_cast<int>(h + 1)).to_string() << ','
          << text::format_double(outcome.predicted_prices(h)) << ',';
      if (h < outcome.actual_prices.size()) out << text::format_double(outcome.actual_prices(h));
      out << '\n';
    }
  }
  write_json(options.output_dir / "summary.json", {{"district", single.districts.front()},
                                                   {"model", arima::model_label(options.spec)},
                                                   {"train_months", prices.size() - options.test_months},
                                                   {"horizon", options.horizon},
                                                   {"normalized_mse", outcome.normalized_mse},
                                                   {"converged", outcome.converged},
                                                   {"loglik", outcome.fit.loglik},
                                                   {"warnings", outcome.fit.warnings}});
  if (!outcome.converged) {
    throw arima::ConvergenceError("baseline fit did not converge; best-so-far table written", outcome.fit);
  }
  return outcome;
}

std::vector<ForecastRow> cmd_forecast(const ForecastOptions& options) {
  const auto cp = neural::load_checkpoint(options.checkpoint.string());
  const auto history = load_matrix(options.history);
  if (static_cast<Index>(cp.districts.size()) != cp.model.spec().input_dim) {
    throw UsageError("checkpoint district list does not match its model input size");
  }
  if (history.num_months() < cp.window_len) {
    throw UsageError("history has " + std::to_string(history.num_months()) + " months, the model needs " +
                     std::to_string(cp.window_len));
  }
  MatrixXd window(cp.window_len, static_cast<Index>(cp.districts.size()));
  for (std::size_t d = 0; d < cp.districts.size(); ++d) {
    auto idx = history.district_index(cp.districts[d]);
    if (!idx) throw UsageError("history is missing district '" + cp.districts[d] + "' that the checkpoint expects");
    window.col(static_cast<Index>(d)) = history.values.col(*idx).tail(cp.window_len);
  }
  const MatrixXd predicted = training::predict_horizon(cp.model, window, options.steps, cp.normalization);

  std::vector<ForecastRow> rows;
  const auto last = history.months.back();
  for (Index s = 0; s < options.steps; ++s) {
    for (std::size_t d = 0; d < cp.districts.size(); ++d) {
      rows.push_back({cp.districts[d], last.next(static_cast<int>(s + 1)), predicted(s, static_cast<Index>(d))});
    }
  }
  auto out = open_out(options.output);
  out << "district,month,predicted_price\n";
  for (const auto& r : rows) out << r.district << ',' << r.month.to_string() << ',' << text::format_double(r.predicted_price) << '\n';
  return rows;
}

neural::GradCheckReport run_gradcheck(const GradcheckOptions& options) {
  const auto& m = options.model;
  const auto spec = neural::StackedSpec::stacked(m.kind, options.input_dim, m.hidden, m.layers, options.input_dim);
  const auto model = neural::init_params<double>(spec, options.seed);
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MatrixXd window(options.window_len, options.input_dim);
  for (Index i = 0; i < window.size(); ++i) window.data()[i] = unit(rng);
  VectorXd target(options.input_dim);
  for (Index i = 0; i < target.size(); ++i) target(i) = unit(rng);
  return neural::grad_check(model, window, target, options.epsilon);
}

std::string format_gradcheck(const neural::GradCheckReport& report, double tolerance) {
  std::ostringstream out;
  char line[200];
  std::snprintf(line, sizeof(line), "%-12s %14s %8s %16s %16s\n", "tensor", "max_rel_diff", "entry", "analytic", "numeric");
  out << line;
  for (const auto& t : report.tensors) {
    std::snprintf(line, sizeof(line), "%-12s %14.3e %8lld %16.8e %16.8e\n", t.name.c_str(), t.max_discrepancy,
                  static_cast<long long>(t.worst_entry), t.analytic, t.numeric);
    out << line;
  }
  std::snprintf(line, sizeof(line), "max discrepancy %.3e (tolerance %.1e): %s\n", report.max_discrepancy, tolerance,
                report.passed(tolerance) ? "PASS" : "FAIL");
  out << line;
  return out.str();
}

}  // namespace hpf::cli
