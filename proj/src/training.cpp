#include "hpf/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "hpf/text.hpp"

namespace hpf::training {

namespace {

using neural::Parameters;

struct BatchOutcome {
  Parameters<double> grad;
  double mean_loss = 0.0;
};

/// Tracks metrics and the best model while a training loop runs.
class Recorder {
 public:
  explicit Recorder(const Model& initial) : best_(initial) {}

  void record(Index step, double train_mse, std::optional<double> val_mse, const Model& model) {
    log_.records.push_back({step, train_mse, val_mse});
    const double score = val_mse.value_or(train_mse);
    if (!have_best_ || score < best_score_) {
      have_best_ = true;
      best_score_ = score;
      best_step_ = step;
      best_ = model;
    }
  }

  void check_finite(double loss, Index step) const {
    if (!std::isfinite(loss)) {
      throw TrainingError("training diverged: non-finite loss at step " + std::to_string(step), log_);
    }
  }

  /// Applies the update, reporting a non-finite gradient as divergence with the log so far.
  void update(Model& model, const Parameters<double>& grad, const neural::SgdConfig& cfg, Index step) const {
    try {
      neural::optimizer_step(model, grad, cfg);
    } catch (const NumericError& e) {
      throw TrainingError("training diverged at step " + std::to_string(step) + ": " + e.what(), log_);
    }
  }

  TrainResult finish(Model final_model) {
    if (!have_best_) best_ = final_model;
    return {std::move(final_model), std::move(best_), best_step_, std::move(log_)};
  }

 private:
  MetricsLog log_;
  Model best_;
  bool have_best_ = false;
  double best_score_ = 0.0;
  Index best_step_ = 0;
};

neural::SgdConfig sgd(const TrainConfig& c) { return {c.learning_rate, c.clip_norm}; }

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw DomainError("learning rate must be positive");
  if (batch_size < 1) throw DomainError("batch size must be at least 1");
  if (total_steps < 1) throw DomainError("total steps must be at least 1");
  if (eval_every < 1) throw DomainError("eval_every must be at least 1");
  if (clip_norm && !(*clip_norm > 0.0)) throw DomainError("clip threshold must be positive");
}

void MetricsLog::write_csv(std::ostream& out) const {
  out << "step,train_mse,val_mse\n";
  for (const auto& r : records) {
    out << r.step << ',' << text::format_double(r.train_mse) << ',';
    if (r.val_mse) out << text::format_double(*r.val_mse);
    out << '\n';
  }
}

double evaluate(const Model& model, const prep::WindowedDataset& dataset, std::span<const Index> samples) {
  if (samples.empty()) throw DomainError("cannot evaluate on an empty sample set");
  double total = 0.0;
  for (Index k : samples) total += neural::sample_loss(model, dataset.window(k), dataset.target(k));
  return total / static_cast<double>(samples.size());
}

TrainResult train_stateless(Model model, const prep::WindowedDataset& dataset, const TrainConfig& config) {
  config.validate();
  if (config.mode != Mode::stateless) throw UsageError("train_stateless needs mode = stateless");
  if (dataset.train.empty()) throw DomainError("training split is empty");
  if (model.spec().input_dim != dataset.dim() || model.spec().output_dim != dataset.dim()) {
    throw DomainError("model dimensions do not match the dataset's " + std::to_string(dataset.dim()) + " districts");
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, dataset.train.size() - 1);
  std::vector<Index> order = dataset.train;
  std::size_t cursor = order.size();
  auto next_index = [&]() -> Index {
    if (!config.epoch_shuffle) return dataset.train[pick(rng)];
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    return order[cursor++];
  };

  Recorder recorder(model);
  std::vector<Index> batch(static_cast<std::size_t>(config.batch_size));
  for (Index step = 1; step <= config.total_steps; ++step) {
    for (auto& k : batch) k = next_index();
    Parameters<double> grad = neural::zeros_like(model.params());
    double loss = 0.0;
    const double weight = 1.0 / static_cast<double>(batch.size());
    for (Index k : batch) {
      const VectorXd target = dataset.target(k);
      auto fwd = neural::forward_sequence(model, dataset.window(k));
      loss += neural::mse_loss(fwd.prediction, target) * weight;
      neural::accumulate(grad, neural::backward(model, fwd.cache, target), weight);
    }
    recorder.check_finite(loss, step);
    recorder.update(model, grad, sgd(config), step);
    if (step % config.eval_every == 0) {
      std::optional<double> val;
      if (!dataset.validation.empty()) val = evaluate(model, dataset, dataset.validation);
      recorder.record(step, loss, val, model);
    }
  }
  return recorder.finish(std::move(model));
}

LanePass run_lane(const Model& model, const prep::StatefulBatchLayout& layout, Index lane, StateCarry carry,
                  Index steps) {
  LanePass pass;
  States state;
  for (Index s = 0; s < steps; ++s) {
    const Index k = layout.sample(lane, s);
    auto fwd = neural::forward_sequence(model, layout.dataset.window(k), state);
    pass.mse.push_back(neural::mse_loss<double>(fwd.prediction, layout.dataset.target(k)));
    switch (carry) {
      case StateCarry::final_state: state = fwd.final_states; break;
      case StateCarry::shifted_window: state = fwd.cache.states_after(0); break;
      case StateCarry::none: state.clear(); break;
    }
    pass.carried.push_back(state.empty() ? neural::zero_states<double>(model.spec()) : state);
  }
  return pass;
}

double evaluate_stateful(const Model& model, const prep::StatefulBatchLayout& layout, StateCarry carry) {
  if (layout.steps_per_batch == layout.train_steps) throw DomainError("stateful layout has no test steps");
  double total = 0.0;
  for (Index lane = 0; lane < layout.batch_size; ++lane) {
    const auto pass = run_lane(model, layout, lane, carry, layout.steps_per_batch);
    for (Index s = layout.train_steps; s < layout.steps_per_batch; ++s) total += pass.mse[static_cast<std::size_t>(s)];
  }
  return total / static_cast<double>(layout.test_positions());
}

TrainResult train_stateful(Model model, const prep::StatefulBatchLayout& layout, const TrainConfig& config) {
  config.validate();
  if (config.mode != Mode::stateful) throw UsageError("train_stateful needs mode = stateful");
  if (model.spec().input_dim != layout.dataset.dim() || model.spec().output_dim != layout.dataset.dim()) {
    throw DomainError("model dimensions do not match the layout's " + std::to_string(layout.dataset.dim()) +
                      " districts");
  }
  const bool has_test = layout.steps_per_batch > layout.train_steps;

  Recorder recorder(model);
  std::vector<States> carried(static_cast<std::size_t>(layout.batch_size));
  const double weight = 1.0 / static_cast<double>(layout.batch_size);
  for (Index step = 1; step <= config.total_steps; ++step) {
    const Index position = (step - 1) % layout.train_steps;
    if (position == 0) {
      for (auto& s : carried) s.clear();
    }
    Parameters<double> grad = neural::zeros_like(model.params());
    double loss = 0.0;
    for (Index lane = 0; lane < layout.batch_size; ++lane) {
      const Index k = layout.sample(lane, position);
      const VectorXd target = layout.dataset.target(k);
      auto& state = carried[static_cast<std::size_t>(lane)];
      auto fwd = neural::forward_sequence(model, layout.dataset.window(k), state);
      loss += neural::mse_loss(fwd.prediction, target) * weight;
      neural::accumulate(grad, neural::backward(model, fwd.cache, target), weight);
      switch (config.carry) {
        case StateCarry::final_state: state = std::move(fwd.final_states); break;
        case StateCarry::shifted_window: state = fwd.cache.states_after(0); break;
        case StateCarry::none: state.clear(); break;
      }
    }
    recorder.check_finite(loss, step);
    recorder.update(model, grad, sgd(config), step);
    if (step % config.eval_every == 0) {
      std::optional<double> val;
      if (has_test) val = evaluate_stateful(model, layout, config.carry);
      recorder.record(step, loss, val, model);
    }
  }
  return recorder.finish(std::move(model));
}

MatrixXd predict_horizon(const Model& model, const MatrixXd& history, Index steps,
                         const std::optional<prep::NormalizationParams>& normalization) {
  if (!normalization) throw UsageError("forecasting needs the normalization params the model was trained with");
  if (steps < 1) throw DomainError("forecast steps must be at least 1");
  if (history.rows() < 1) throw DomainError("forecast history is empty");
  MatrixXd window = normalization->apply(history);
  MatrixXd out(steps, history.cols());
  for (Index s = 0; s < steps; ++s) {
    const VectorXd next = neural::forward_sequence(model, window).prediction;
    out.row(s) = next.transpose();
    if (window.rows() > 1) window.topRows(window.rows() - 1) = window.bottomRows(window.rows() - 1).eval();
    window.row(window.rows() - 1) = next.transpose();
  }
  return normalization->invert(out);
}

}  // namespace hpf::training
