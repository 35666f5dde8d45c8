#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "hpf/neural.hpp"
#include "hpf/seriesprep.hpp"

namespace hpf::training {

using Model = neural::Model<double>;
using States = std::vector<neural::LstmState<double>>;

enum class Mode { stateless, stateful };

/// What a stateful lane hands to its next window.
enum class StateCarry {
  final_state,     // state after the last step of the previous window
  shifted_window,  // state after the first step of the previous window, which is
                   // exactly the history preceding the next (shifted-by-one) window
  none,            // zero state every window
};

struct TrainConfig {
  double learning_rate = 0.01;
  Index batch_size = 32;
  Index total_steps = 1000;
  Index eval_every = 100;
  std::uint64_t seed = 0;
  Mode mode = Mode::stateless;
  std::optional<double> clip_norm;
  /// Stateless only: draw batches from per-epoch permutations instead of with replacement.
  bool epoch_shuffle = false;
  StateCarry carry = StateCarry::final_state;

  void validate() const;
};

struct MetricRecord {
  Index step = 0;
  double train_mse = 0.0;
  std::optional<double> val_mse;
};

struct MetricsLog {
  std::vector<MetricRecord> records;

  /// `step,train_mse,val_mse`; val_mse is empty when there is no validation set.
  void write_csv(std::ostream& out) const;
};

struct TrainResult {
  Model final_model;
  Model best_model;  // lowest validation MSE at a logged step (train MSE if no validation)
  Index best_step = 0;
  MetricsLog log;
};

class TrainingError : public NumericError {
 public:
  TrainingError(const std::string& what, MetricsLog log) : NumericError(what), log_(std::move(log)) {}
  const MetricsLog& log() const noexcept { return log_; }

 private:
  MetricsLog log_;
};

/// Independent windows from zero state, batches drawn from dataset.train.
TrainResult train_stateless(Model model, const prep::WindowedDataset& dataset, const TrainConfig& config);

/// Lanes advance in lockstep through steps [0, train_steps); each window starts from the
/// state its lane carried out of the previous window. Carried state is reset at the start
/// of every epoch. Validation continues each lane into its test steps.
TrainResult train_stateful(Model model, const prep::StatefulBatchLayout& layout, const TrainConfig& config);

/// Mean per-sample MSE.
double evaluate(const Model& model, const prep::WindowedDataset& dataset, std::span<const Index> samples);

/// One lane of a stateful layout run without updates from zero state. Returns the
/// per-step states handed onwards and the MSE at every position.
struct LanePass {
  std::vector<States> carried;  // carried[s] = state passed into step s + 1
  std::vector<double> mse;
};
LanePass run_lane(const Model& model, const prep::StatefulBatchLayout& layout, Index lane, StateCarry carry,
                  Index steps);

/// Stateful validation: mean MSE over the test steps of every lane.
double evaluate_stateful(const Model& model, const prep::StatefulBatchLayout& layout, StateCarry carry);

/// Rolling forecast from raw prices. `history` holds the last window_len months (one row
/// per month); every prediction is appended and the oldest month dropped. Returns
/// steps x D denormalized prices. Throws UsageError without normalization params.
MatrixXd predict_horizon(const Model& model, const MatrixXd& history, Index steps,
                         const std::optional<prep::NormalizationParams>& normalization);

}  // namespace hpf::training
