#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "hpf/training.hpp"

using namespace hpf;
using namespace hpf::training;

namespace {

MatrixXd sine_matrix(Index months, Index districts, double noise = 0.0, std::uint64_t seed = 0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> e(0.0, 1.0);
  MatrixXd m(months, districts);
  for (Index t = 0; t < months; ++t) {
    for (Index d = 0; d < districts; ++d) {
      m(t, d) = 1000.0 + 100.0 * d + 50.0 * std::sin(2.0 * std::numbers::pi * t / 12.0 + 0.3 * d) + noise * e(rng);
    }
  }
  return m;
}

prep::WindowedDataset dataset(Index districts, Index months = 154) {
  return prep::split(prep::make_windows(prep::normalize(sine_matrix(months, districts), prep::NormScope::per_district).values, 15), 14);
}

Model small_lstm(Index dim, Index hidden = 4, std::uint64_t seed = 0) {
  return neural::init_params<double>(neural::StackedSpec::single(neural::CellKind::lstm, dim, hidden, dim), seed);
}

/// Linear Elman cell that copies its input through, so the prediction is the last input row.
Model persistence_model(Index dim) {
  auto p = neural::ElmanParams<double>::zeros(dim, dim, dim);
  p.hidden.activation = neural::Activation::identity;
  p.hidden.W.setIdentity();
  p.W_y.setIdentity();
  return neural::to_model(p);
}

}  // namespace

TEST(Config, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), DomainError);
  c = {};
  c.eval_every = 0;
  EXPECT_THROW(c.validate(), DomainError);
  c = {};
  c.total_steps = 0;
  EXPECT_THROW(c.validate(), DomainError);
}

TEST(Stateless, RecordCount) {
  TrainConfig c;
  c.total_steps = 100;
  c.eval_every = 100;
  c.batch_size = 2;
  const auto r = train_stateless(small_lstm(1), dataset(1), c);
  ASSERT_EQ(r.log.records.size(), 1u);
  EXPECT_EQ(r.log.records[0].step, 100);
  c.total_steps = 250;
  c.eval_every = 40;
  EXPECT_EQ(train_stateless(small_lstm(1), dataset(1), c).log.records.size(), 6u);
}

TEST(Stateless, DeterministicGivenSeed) {
  TrainConfig c;
  c.total_steps = 60;
  c.eval_every = 20;
  c.batch_size = 4;
  c.seed = 3;
  const auto a = train_stateless(small_lstm(2), dataset(2), c);
  const auto b = train_stateless(small_lstm(2), dataset(2), c);
  ASSERT_EQ(a.log.records.size(), b.log.records.size());
  for (std::size_t i = 0; i < a.log.records.size(); ++i) {
    EXPECT_EQ(a.log.records[i].train_mse, b.log.records[i].train_mse);
    EXPECT_EQ(*a.log.records[i].val_mse, *b.log.records[i].val_mse);
  }
  EXPECT_EQ(a.final_model.params().dense_W, b.final_model.params().dense_W);
  c.seed = 4;
  const auto d = train_stateless(small_lstm(2), dataset(2), c);
  EXPECT_NE(d.log.records.back().train_mse, a.log.records.back().train_mse);
  c.epoch_shuffle = true;
  EXPECT_EQ(train_stateless(small_lstm(2), dataset(2), c).log.records.back().train_mse,
            train_stateless(small_lstm(2), dataset(2), c).log.records.back().train_mse);
}

TEST(Stateless, WideModelOnManyDistricts) {
  TrainConfig c;
  c.total_steps = 5;
  c.eval_every = 5;
  c.batch_size = 2;
  const auto r = train_stateless(small_lstm(80, 3), dataset(80), c);
  EXPECT_EQ(r.final_model.spec().input_dim, 80);
  EXPECT_EQ(r.final_model.spec().output_dim, 80);
  EXPECT_THROW(train_stateless(small_lstm(3), dataset(80), c), DomainError);
}

TEST(Stateless, LossDecreasesAndLogIsWellFormed) {
  TrainConfig c;
  c.learning_rate = 0.05;
  c.total_steps = 1500;
  c.eval_every = 100;
  c.batch_size = 8;
  const auto r = train_stateless(small_lstm(1, 8), dataset(1), c);
  Index prev = 0;
  for (const auto& rec : r.log.records) {
    EXPECT_GT(rec.step, prev);
    prev = rec.step;
    EXPECT_TRUE(std::isfinite(rec.train_mse) && rec.train_mse >= 0.0);
    EXPECT_TRUE(rec.val_mse && *rec.val_mse >= 0.0);
  }
  EXPECT_LT(*r.log.records.back().val_mse, *r.log.records.front().val_mse);
  double best = 1e300;
  for (const auto& rec : r.log.records) best = std::min(best, *rec.val_mse);
  const auto ds = dataset(1);
  EXPECT_DOUBLE_EQ(evaluate(r.best_model, ds, ds.validation), best);
}

TEST(Stateless, DivergenceCarriesLog) {
  TrainConfig c;
  c.learning_rate = 1e12;
  c.total_steps = 2000;
  c.eval_every = 1;
  c.batch_size = 1;
  try {
    train_stateless(small_lstm(1), dataset(1), c);
    FAIL() << "expected divergence";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
    EXPECT_FALSE(e.log().records.empty());
  }
}

TEST(Metrics, CsvFormat) {
  MetricsLog log;
  log.records.push_back({100, 0.5, 0.25});
  log.records.push_back({200, 0.125, std::nullopt});
  std::ostringstream out;
  log.write_csv(out);
  EXPECT_EQ(out.str(), "step,train_mse,val_mse\n100,0.5,0.25\n200,0.125,\n");
}

TEST(Evaluate, MeanOfSampleLosses) {
  const auto ds = dataset(3);
  const auto m = small_lstm(3, 5, 2);
  double total = 0.0;
  for (Index k : ds.validation) total += neural::sample_loss(m, ds.window(k), ds.target(k));
  EXPECT_NEAR(evaluate(m, ds, ds.validation), total / static_cast<double>(ds.validation.size()), 1e-12);
  EXPECT_THROW(evaluate(m, ds, std::vector<Index>{}), DomainError);
}

TEST(Evaluate, MemorizedSampleScoresZero) {
  const auto ds = dataset(2);
  auto m = small_lstm(2);
  neural::for_each_tensor(m.mutable_params(), [](const std::string&, auto& t) { t.setZero(); });
  m.mutable_params().dense_b = ds.target(5);
  const std::vector<Index> one{5};
  EXPECT_EQ(evaluate(m, ds, one), 0.0);
}

TEST(Stateful, DefaultLayoutPositions) {
  const auto layout = prep::stateful_reshape(prep::make_windows(MatrixXd::Random(154, 1), 15));
  EXPECT_EQ(layout.train_positions(), 125);
  EXPECT_EQ(layout.test_positions(), 10);
}

TEST(Stateful, SingleLaneEqualsContinuousPass) {
  const auto layout = prep::stateful_reshape(dataset(2), 1, 6, 6);
  const auto m = small_lstm(2, 3, 1);
  const auto pass = run_lane(m, layout, 0, StateCarry::final_state, 6);
  MatrixXd stacked(6 * 15, 2);
  for (Index s = 0; s < 6; ++s) stacked.middleRows(s * 15, 15) = layout.dataset.window(s);
  const auto whole = neural::forward_sequence(m, stacked);
  for (Index s = 0; s < 6; ++s) {
    const auto expected = whole.cache.states_after(s * 15 + 14);
    const auto& got = pass.carried[static_cast<std::size_t>(s)];
    EXPECT_LT((got[0].h - expected[0].h).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((got[0].c - expected[0].c).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Stateful, ShiftedCarryReproducesLongerWindow) {
  const auto layout = prep::stateful_reshape(dataset(1), 1, 4, 4);
  const auto m = small_lstm(1, 3, 2);
  const auto pass = run_lane(m, layout, 0, StateCarry::shifted_window, 4);
  for (Index s = 1; s < 4; ++s) {
    const auto direct = neural::forward_sequence(m, layout.dataset.source().middleRows(0, s + 15));
    const auto carried = neural::forward_sequence(m, layout.dataset.window(s), pass.carried[static_cast<std::size_t>(s - 1)]);
    EXPECT_LT((direct.prediction - carried.prediction).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Stateful, NoCarryReducesToStateless) {
  const auto layout = prep::stateful_reshape(dataset(2));
  const auto m = small_lstm(2, 4, 3);
  for (Index lane = 0; lane < layout.batch_size; ++lane) {
    const auto pass = run_lane(m, layout, lane, StateCarry::none, layout.steps_per_batch);
    for (Index s = 0; s < layout.steps_per_batch; ++s) {
      const Index k = layout.sample(lane, s);
      EXPECT_EQ(pass.mse[static_cast<std::size_t>(s)],
                neural::sample_loss(m, layout.dataset.window(k), layout.dataset.target(k)));
    }
  }
}

TEST(Stateful, TrainsAndLogsTestSlice) {
  const auto layout = prep::stateful_reshape(dataset(1));
  TrainConfig c;
  c.mode = Mode::stateful;
  c.learning_rate = 0.05;
  c.total_steps = 250;
  c.eval_every = 25;
  for (auto carry : {StateCarry::final_state, StateCarry::shifted_window, StateCarry::none}) {
    c.carry = carry;
    const auto r = train_stateful(small_lstm(1, 6), layout, c);
    ASSERT_EQ(r.log.records.size(), 10u);
    for (const auto& rec : r.log.records) EXPECT_TRUE(rec.val_mse && std::isfinite(*rec.val_mse));
    EXPECT_DOUBLE_EQ(*r.log.records.back().val_mse, evaluate_stateful(r.final_model, layout, carry));
  }
  c.mode = Mode::stateless;
  EXPECT_THROW(train_stateful(small_lstm(1), layout, c), UsageError);
}

TEST(Forecast, PersistenceModelIsFlat) {
  const MatrixXd raw = sine_matrix(15, 3);
  const auto norm = prep::normalize(sine_matrix(154, 3), prep::NormScope::per_district).params;
  const MatrixXd f = predict_horizon(persistence_model(3), raw, 4, norm);
  ASSERT_EQ(f.rows(), 4);
  for (Index s = 0; s < 4; ++s) EXPECT_LT((f.row(s) - raw.row(14)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Forecast, RollingConsumesPredictions) {
  const MatrixXd raw = sine_matrix(154, 2);
  const auto norm = prep::normalize(raw, prep::NormScope::per_district).params;
  const auto m = small_lstm(2, 4, 7);
  const MatrixXd hist = raw.bottomRows(15);
  const MatrixXd two = predict_horizon(m, hist, 2, norm);
  const MatrixXd window = norm.apply(hist);
  const VectorXd first = neural::forward_sequence(m, window).prediction;
  EXPECT_LT((two.row(0).transpose() - norm.invert(first.transpose()).transpose()).cwiseAbs().maxCoeff(), 1e-9);
  MatrixXd shifted(15, 2);
  shifted.topRows(14) = window.bottomRows(14);
  shifted.row(14) = first.transpose();
  const VectorXd second = neural::forward_sequence(m, shifted).prediction;
  EXPECT_LT((two.row(1).transpose() - norm.invert(second.transpose()).transpose()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((predict_horizon(m, hist, 1, norm).row(0) - two.row(0)).cwiseAbs().maxCoeff(), 0.0 + 1e-12);
}

TEST(Forecast, NeedsNormalization) {
  EXPECT_THROW(predict_horizon(small_lstm(1), MatrixXd::Ones(15, 1), 2, std::nullopt), UsageError);
}
