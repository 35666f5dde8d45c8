// hpf: house-price forecasting toolkit command line.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>

#include "hpf/cli/commands.hpp"
#include "json.hpp"

namespace {

using namespace hpf;
namespace fs = std::filesystem;

const std::map<std::string, neural::CellKind> kKinds{{"lstm", neural::CellKind::lstm},
                                                      {"elman", neural::CellKind::elman}};
const std::map<std::string, prep::NormScope> kScopes{{"per_district", prep::NormScope::per_district},
                                                      {"global", prep::NormScope::global}};
const std::map<std::string, training::Mode> kModes{{"stateless", training::Mode::stateless},
                                                    {"stateful", training::Mode::stateful}};
const std::map<std::string, training::StateCarry> kCarry{{"final", training::StateCarry::final_state},
                                                          {"shifted", training::StateCarry::shifted_window},
                                                          {"none", training::StateCarry::none}};
const std::map<std::string, ingest::GapPolicy> kGaps{{"interpolate", ingest::GapPolicy::interpolate},
                                                      {"drop", ingest::GapPolicy::drop_district}};
const std::map<std::string, arima::ReturnKind> kReturns{{"simple", arima::ReturnKind::simple},
                                                         {"log", arima::ReturnKind::log}};

ingest::YearMonth parse_month(const std::string& s) {
  auto ym = ingest::YearMonth::parse_iso(s);
  if (!ym) throw UsageError("expected a YYYY-MM month, got '" + s + "'");
  return *ym;
}

fs::path output_or_default(const std::string& given, const char* command) {
  return given.empty() ? cli::default_output_root() / command : fs::path(given);
}

/// Writes the resolved options of the chosen subcommand as a loadable INI section.
void write_effective_config(const CLI::App& command, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream out(dir / "config.ini");
  out << '[' << command.get_name() << "]\n" << command.config_to_str(true, false);
}

void add_model_options(CLI::App* cmd, cli::ModelOptions& m) {
  cmd->add_option("--kind", m.kind, "Recurrent cell: lstm or elman")
      ->transform(CLI::CheckedTransformer(kKinds, CLI::ignore_case))
      ->capture_default_str();
  cmd->add_option("--layers", m.layers, "Number of stacked recurrent layers")->capture_default_str();
  cmd->add_option("--hidden", m.hidden, "Hidden units per layer")->capture_default_str();
}

void add_train_options(CLI::App* cmd, cli::TrainOptions& o, std::string& out_dir, std::string& matrix) {
  cmd->add_option("--matrix", matrix, "Price matrix CSV")->required();
  cmd->add_option("--out", out_dir, "Output directory");
  cmd->add_option("--district", o.data.district, "Train on a single district (default: all)");
  cmd->add_option("--window", o.data.window_len, "Input months per sample")->capture_default_str();
  cmd->add_option("--val", o.data.n_val, "Validation samples held out at the end")->capture_default_str();
  cmd->add_option("--scope", o.data.scope, "Normalization scope")
      ->transform(CLI::CheckedTransformer(kScopes, CLI::ignore_case))
      ->capture_default_str();
  cmd->add_flag("--leakage-safe", o.data.leakage_safe, "Normalize with training-month statistics only");
  add_model_options(cmd, o.model);
  auto& t = o.train;
  cmd->add_option("--mode", t.mode, "stateless or stateful")
      ->transform(CLI::CheckedTransformer(kModes, CLI::ignore_case))
      ->capture_default_str();
  cmd->add_option("--lr", t.learning_rate, "Learning rate")->capture_default_str();
  cmd->add_option("--batch", t.batch_size, "Stateless batch size")->capture_default_str();
  cmd->add_option("--steps", t.total_steps, "Parameter updates")->capture_default_str();
  cmd->add_option("--eval-every", t.eval_every, "Updates between metric records")->capture_default_str();
  cmd->add_option("--seed", t.seed, "Seed for initialization and batching")->capture_default_str();
  cmd->add_option("--clip", t.clip_norm, "Clip gradients to this global norm");
  cmd->add_flag("--epoch-shuffle", t.epoch_shuffle, "Draw stateless batches from per-epoch permutations");
  cmd->add_option("--carry", t.carry, "Stateful carry: final, shifted or none")
      ->transform(CLI::CheckedTransformer(kCarry, CLI::ignore_case))
      ->capture_default_str();
  cmd->add_option("--lanes", o.stateful.batch_size, "Stateful lanes")->capture_default_str();
  cmd->add_option("--lane-steps", o.stateful.steps_per_batch, "Stateful steps per lane")->capture_default_str();
  cmd->add_option("--lane-train-steps", o.stateful.train_steps, "Stateful training steps per lane")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"House-price forecasting: ingestion, recurrent models, ARIMA baseline"};
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  app.set_config("--config", "", "INI config file; [section] per subcommand, flags override keys");
  app.require_subcommand(1);

  // ingest
  cli::IngestOptions ingest_opts;
  std::string ingest_in, ingest_out, ingest_first, ingest_last, ingest_alt;
  auto* ingest_cmd = app.add_subcommand("ingest", "Transactions CSV -> monthly district price matrix");
  ingest_cmd->add_option("input", ingest_in, "Transaction CSV (date,district,price)")->required();
  ingest_cmd->add_option("--out", ingest_out, "Output directory");
  ingest_cmd->add_option("--first", ingest_first, "First month of the calendar (YYYY-MM)");
  ingest_cmd->add_option("--last", ingest_last, "Last month of the calendar (YYYY-MM)");
  ingest_cmd->add_option("--date-format", ingest_alt, "Alternate date pattern, e.g. MM/YYYY");
  ingest_cmd->add_option("--gaps", ingest_opts.gap_policy, "Gap policy: interpolate or drop")
      ->transform(CLI::CheckedTransformer(kGaps, CLI::ignore_case))
      ->capture_default_str();

  // synth
  synth::SyntheticSpec synth_spec;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic transaction CSV");
  synth_cmd->add_option("--out", synth_out, "Output CSV path");
  synth_cmd->add_option("--districts", synth_spec.districts)->capture_default_str();
  synth_cmd->add_option("--months", synth_spec.months)->capture_default_str();
  std::string synth_start = synth_spec.start.to_string();
  synth_cmd->add_option("--start", synth_start, "First month (YYYY-MM)")->capture_default_str();
  synth_cmd->add_option("--base", synth_spec.base_price)->capture_default_str();
  synth_cmd->add_option("--trend", synth_spec.trend_slope)->capture_default_str();
  synth_cmd->add_option("--amplitude", synth_spec.seasonal_amplitude)->capture_default_str();
  synth_cmd->add_option("--period", synth_spec.seasonal_period)->capture_default_str();
  synth_cmd->add_option("--curvature", synth_spec.curvature)->capture_default_str();
  synth_cmd->add_option("--noise", synth_spec.noise_scale)->capture_default_str();
  synth_cmd->add_option("--persistence", synth_spec.noise_persistence, "AR(1) coefficient of the noise")
      ->capture_default_str();
  synth_cmd->add_option("--variation", synth_spec.district_variation)->capture_default_str();
  synth_cmd->add_option("--per-cell", synth_spec.transactions_per_cell)->capture_default_str();
  synth_cmd->add_option("--spread", synth_spec.transaction_spread)->capture_default_str();
  synth_cmd->add_option("--missing", synth_spec.missing_probability)->capture_default_str();
  synth_cmd->add_option("--seed", synth_spec.seed)->capture_default_str();

  // train / sweep
  cli::TrainOptions train_opts;
  std::string train_out, train_matrix;
  auto* train_cmd = app.add_subcommand("train", "Train a recurrent model on a price matrix");
  add_train_options(train_cmd, train_opts, train_out, train_matrix);

  cli::SweepOptions sweep_opts;
  std::string sweep_out, sweep_matrix;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train once per hidden size");
  add_train_options(sweep_cmd, sweep_opts.base, sweep_out, sweep_matrix);
  sweep_cmd->add_option("--units", sweep_opts.hidden_units, "Hidden sizes to try")->capture_default_str();
  sweep_cmd->add_option("--jobs", sweep_opts.jobs, "Concurrent trainings")->capture_default_str();

  // baseline
  cli::BaselineOptions base_opts;
  std::string base_out, base_matrix;
  bool base_no_constant = false;
  auto* base_cmd = app.add_subcommand("baseline", "Fit the ARIMA baseline on one district");
  base_cmd->add_option("--matrix", base_matrix, "Price matrix CSV")->required();
  base_cmd->add_option("--out", base_out, "Output directory");
  base_cmd->add_option("--district", base_opts.district, "District to model");
  base_cmd->add_option("--ar", base_opts.spec.p, "AR order")->capture_default_str();
  base_cmd->add_option("--ma", base_opts.spec.q, "MA order")->capture_default_str();
  base_cmd->add_flag("--no-constant", base_no_constant, "Fit without a constant");
  base_cmd->add_option("--horizon", base_opts.horizon, "Forecast months")->capture_default_str();
  base_cmd->add_option("--test-months", base_opts.test_months, "Held-out months at the end")->capture_default_str();
  base_cmd->add_option("--returns", base_opts.returns, "simple or log returns")
      ->transform(CLI::CheckedTransformer(kReturns, CLI::ignore_case))
      ->capture_default_str();
  base_cmd->add_option("--max-iter", base_opts.optimizer.max_iterations)->capture_default_str();
  base_cmd->add_option("--restarts", base_opts.optimizer.restarts)->capture_default_str();
  base_cmd->add_option("--seed", base_opts.optimizer.seed, "Seed for optimizer restarts")->capture_default_str();

  // forecast
  cli::ForecastOptions fc_opts;
  std::string fc_checkpoint, fc_history, fc_out;
  auto* fc_cmd = app.add_subcommand("forecast", "Roll a trained model forward from a history matrix");
  fc_cmd->add_option("--checkpoint", fc_checkpoint)->required();
  fc_cmd->add_option("--history", fc_history, "Price matrix CSV whose last months seed the forecast")->required();
  fc_cmd->add_option("--out", fc_out, "Output CSV path");
  fc_cmd->add_option("--steps", fc_opts.steps, "Months to forecast")->capture_default_str();

  // gradcheck
  cli::GradcheckOptions gc_opts;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare backpropagation against finite differences");
  add_model_options(gc_cmd, gc_opts.model);
  gc_cmd->add_option("--input-dim", gc_opts.input_dim)->capture_default_str();
  gc_cmd->add_option("--window", gc_opts.window_len)->capture_default_str();
  gc_cmd->add_option("--seed", gc_opts.seed)->capture_default_str();
  gc_cmd->add_option("--epsilon", gc_opts.epsilon)->capture_default_str();
  gc_cmd->add_option("--tolerance", gc_opts.tolerance)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code(ErrorKind::usage);
  }

  try {
    if (*ingest_cmd) {
      ingest_opts.input = ingest_in;
      ingest_opts.output_dir = output_or_default(ingest_out, "ingest");
      if (!ingest_first.empty() || !ingest_last.empty()) {
        if (ingest_first.empty() || ingest_last.empty()) throw UsageError("--first and --last go together");
        ingest_opts.calendar = ingest::CalendarRange{parse_month(ingest_first), parse_month(ingest_last)};
      }
      if (!ingest_alt.empty()) ingest_opts.alternate_date_format = ingest_alt;
      write_effective_config(*ingest_cmd, ingest_opts.output_dir);
      const auto s = cli::cmd_ingest(ingest_opts);
      std::cout << "matrix " << s.months << " months x " << s.districts << " districts, " << s.filled_cells
                << " gap-filled cells, " << s.records << " records, " << s.rejected << " rejected rows\n";
    } else if (*synth_cmd) {
      synth_spec.start = parse_month(synth_start);
      const fs::path out = synth_out.empty() ? cli::default_output_root() / "synth" / "transactions.csv" : fs::path(synth_out);
      if (out.has_parent_path()) write_effective_config(*synth_cmd, out.parent_path());
      const auto data = cli::cmd_synth(synth_spec, out);
      std::cout << "wrote " << data.transactions.size() << " transactions to " << out.string() << '\n';
    } else if (*train_cmd) {
      train_opts.matrix = train_matrix;
      train_opts.output_dir = output_or_default(train_out, "train");
      write_effective_config(*train_cmd, train_opts.output_dir);
      const auto o = cli::cmd_train(train_opts);
      std::cout << "final train mse " << o.final_train_mse;
      if (o.final_val_mse) std::cout << ", val mse " << *o.final_val_mse;
      std::cout << ", best step " << o.result.best_step << '\n';
    } else if (*sweep_cmd) {
      sweep_opts.base.matrix = sweep_matrix;
      sweep_opts.base.output_dir = output_or_default(sweep_out, "sweep");
      write_effective_config(*sweep_cmd, sweep_opts.base.output_dir);
      const auto outcomes = cli::cmd_sweep(sweep_opts);
      for (std::size_t i = 0; i < outcomes.size(); ++i) {
        std::cout << "hidden " << sweep_opts.hidden_units[i] << ": train mse " << outcomes[i].final_train_mse;
        if (outcomes[i].final_val_mse) std::cout << ", val mse " << *outcomes[i].final_val_mse;
        std::cout << '\n';
      }
    } else if (*base_cmd) {
      base_opts.matrix = base_matrix;
      base_opts.spec.with_constant = !base_no_constant;
      base_opts.output_dir = output_or_default(base_out, "baseline");
      write_effective_config(*base_cmd, base_opts.output_dir);
      try {
        const auto o = cli::cmd_baseline(base_opts);
        std::cout << arima::fit_table_text(o.fit) << "normalized mse " << o.normalized_mse << '\n';
        for (const auto& w : o.fit.warnings) std::cerr << "warning: " << w << '\n';
      } catch (const arima::ConvergenceError& e) {
        std::cout << arima::fit_table_text(e.best());
        std::cerr << "warning: " << e.what() << '\n';
        return exit_code(ErrorKind::convergence);
      }
    } else if (*fc_cmd) {
      fc_opts.checkpoint = fc_checkpoint;
      fc_opts.history = fc_history;
      fc_opts.output = fc_out.empty() ? cli::default_output_root() / "forecast" / "forecast.csv" : fs::path(fc_out);
      if (fc_opts.output.has_parent_path()) write_effective_config(*fc_cmd, fc_opts.output.parent_path());
      const auto rows = cli::cmd_forecast(fc_opts);
      std::cout << "wrote " << rows.size() << " forecasts to " << fc_opts.output.string() << '\n';
    } else if (*gc_cmd) {
      const auto report = cli::run_gradcheck(gc_opts);
      std::cout << cli::format_gradcheck(report, gc_opts.tolerance);
      return report.passed(gc_opts.tolerance) ? 0 : exit_code(ErrorKind::numeric);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(ErrorKind::io);
  }
  return 0;
}
