#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "hpf/neural.hpp"
#include "hpf/neural/checkpoint.hpp"

using namespace hpf;
using namespace hpf::neural;

namespace {

MatrixXd random_window(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatrixXd w(rows, cols);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  return w;
}

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST(Activation, ValuesAndSlopes) {
  const VectorXd x = vec({-2.0, 0.0, 0.5});
  const VectorXd s = activate(Activation::logistic, x);
  EXPECT_DOUBLE_EQ(s(1), 0.5);
  EXPECT_NEAR(s(0), 1.0 / (1.0 + std::exp(2.0)), 1e-16);
  const VectorXd t = activate(Activation::tanh, x);
  EXPECT_DOUBLE_EQ(t(2), 0.46211715726000974);
  EXPECT_EQ(activate(Activation::identity, x), x);
  EXPECT_DOUBLE_EQ(activation_slope(Activation::logistic, s)(1), 0.25);
  EXPECT_DOUBLE_EQ(activation_slope(Activation::tanh, t)(1), 1.0);
  EXPECT_EQ(*parse_activation("tanh"), Activation::tanh);
  EXPECT_FALSE(parse_activation("relu"));
}

TEST(Elman, ZeroParameters) {
  const auto p = ElmanParams<double>::zeros(3, 4, 2);
  const auto out = elman_step(p, vec({1, 2, 3}), VectorXd(VectorXd::Zero(4)));
  EXPECT_TRUE(out.h.isZero(0.0));
  EXPECT_TRUE(out.y.isZero(0.0));
}

TEST(Elman, ScalarTanh) {
  auto p = ElmanParams<double>::zeros(1, 1, 1);
  p.hidden.W(0, 0) = 1.0;
  const auto out = elman_step(p, vec({0.5}), vec({0.9}));
  EXPECT_DOUBLE_EQ(out.h(0), 0.46211715726000974);
}

TEST(Elman, HiddenStateOnlyThroughU) {
  auto m = init_params<double>(StackedSpec::single(CellKind::elman, 2, 3, 1), 1);
  auto cell = std::get<ElmanCell<double>>(m.params().layers[0]);
  cell.U.setZero();
  const VectorXd x = vec({0.3, -0.2});
  EXPECT_EQ(elman_hidden(cell, x, VectorXd(VectorXd::Zero(3))), elman_hidden(cell, x, vec({5, -5, 1})));
}

TEST(Elman, ShapeMismatchIsNamed) {
  const auto p = ElmanParams<double>::zeros(3, 4, 2);
  EXPECT_THROW(elman_step(p, vec({1, 2}), VectorXd(VectorXd::Zero(4))), DomainError);
}

TEST(Elman, ModelMatchesManualRecurrence) {
  auto p = ElmanParams<double>::zeros(2, 3, 1);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto* m : {&p.hidden.W, &p.hidden.U, &p.W_y}) {
    for (Index i = 0; i < m->size(); ++i) m->data()[i] = u(rng);
  }
  p.hidden.b << 0.1, -0.1, 0.2;
  p.b_y << 0.05;
  const MatrixXd w = random_window(6, 2, 5);
  VectorXd h = VectorXd::Zero(3);
  VectorXd y;
  for (Index t = 0; t < w.rows(); ++t) {
    const auto out = elman_step(p, VectorXd(w.row(t).transpose()), h);
    h = out.h;
    y = out.y;
  }
  const auto model = to_model(p);
  EXPECT_LT((forward_sequence(model, w).prediction - y).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Lstm, ZeroParameters) {
  const auto p = LstmParams<double>::zeros(2, 3);
  const auto t = lstm_trace(p, vec({0.4, 0.7}), LstmState<double>::zeros(3));
  EXPECT_TRUE((t.f.array() == 0.5).all());
  EXPECT_TRUE((t.i.array() == 0.5).all());
  EXPECT_TRUE((t.o.array() == 0.5).all());
  EXPECT_TRUE(t.c.isZero(0.0));
  EXPECT_TRUE(t.h.isZero(0.0));
}

TEST(Lstm, CarriedCell) {
  const auto p = LstmParams<double>::zeros(1, 1);
  const auto s = lstm_step(p, vec({0.0}), LstmState<double>{vec({1.0}), vec({0.0})});
  EXPECT_DOUBLE_EQ(s.c(0), 0.5);
  EXPECT_DOUBLE_EQ(s.h(0), 0.23105857863000487);
}

TEST(Lstm, SaturatedGatesConserveMemory) {
  auto p = LstmParams<double>::zeros(2, 3);
  p.forget.b.setConstant(1000.0);
  p.input.b.setConstant(-1000.0);
  const VectorXd c0 = vec({0.7, -0.3, 0.11});
  LstmState<double> s{c0, VectorXd::Zero(3)};
  for (int t = 0; t < 200; ++t) s = lstm_step(p, VectorXd(random_window(1, 2, t).row(0).transpose()), s);
  EXPECT_EQ(s.c, c0);
}

TEST(Lstm, ActivationRanges) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto m = init_params<double>(StackedSpec::single(CellKind::lstm, 3, 5, 1), seed);
    auto p = std::get<LstmParams<double>>(m.params().layers[0]);
    p.forget.W *= 8.0;
    p.candidate.U *= 8.0;
    LstmState<double> s = LstmState<double>::zeros(5);
    for (int t = 0; t < 30; ++t) {
      const VectorXd x = 4.0 * random_window(1, 3, seed * 100 + t).row(0).transpose().array() - 2.0;
      const auto tr = lstm_trace(p, x, s);
      for (const auto* g : {&tr.f, &tr.i, &tr.o}) {
        EXPECT_TRUE((g->array() >= 0.0).all() && (g->array() <= 1.0).all());
      }
      EXPECT_TRUE((tr.g.array().abs() <= 1.0).all());
      EXPECT_TRUE((tr.cell_out.array().abs() <= 1.0).all());
      s = {tr.c, tr.h};
    }
  }
}

TEST(Model, InitDeterministicAndBounded) {
  const auto spec = StackedSpec::stacked(CellKind::lstm, 4, 6, 2, 3);
  const auto a = init_params<double>(spec, 17);
  const auto b = init_params<double>(spec, 17);
  const auto c = init_params<double>(spec, 18);
  bool differs = false;
  for_each_tensor(a.params(), [&](const std::string& name, const auto& t) {
    bool found = false;
    for_each_tensor(b.params(), [&](const std::string& n2, const auto& t2) {
      if (n2 == name) {
        found = true;
        EXPECT_EQ(t, t2) << name;
      }
    });
    EXPECT_TRUE(found);
    if (name.find(".b") == std::string::npos && t.cols() > 0) {
      const double s = 1.0 / std::sqrt(static_cast<double>(t.cols()));
      EXPECT_LE(t.cwiseAbs().maxCoeff(), s) << name;
    }
  });
  for_each_tensor_pair(const_cast<Parameters<double>&>(a.params()), c.params(),
                       [&](const std::string&, auto& x, const auto& y) { differs |= (x != y); });
  EXPECT_TRUE(differs);
  for (const auto& layer : a.params().layers) {
    const auto& l = std::get<LstmParams<double>>(layer);
    EXPECT_TRUE((l.forget.b.array() == 1.0).all());
    EXPECT_TRUE(l.input.b.isZero(0.0));
  }
  EXPECT_EQ(parameter_count(a.params()), 4 * (6 * 4 + 36 + 6) + 4 * (6 * 6 + 36 + 6) + 3 * 6 + 3);
}

TEST(Model, SingleStepIsCellPlusDense) {
  const auto m = init_params<double>(StackedSpec::single(CellKind::lstm, 2, 3, 2), 2);
  const MatrixXd w = random_window(1, 2, 3);
  const auto& p = m.params();
  const auto s = lstm_step(std::get<LstmParams<double>>(p.layers[0]), VectorXd(w.row(0).transpose()),
                           LstmState<double>::zeros(3));
  const VectorXd expected = p.dense_W * s.h + p.dense_b;
  EXPECT_EQ(forward_sequence(m, w).prediction, expected);
}

TEST(Model, ZeroParamsPredictDenseBias) {
  auto m = init_params<double>(StackedSpec::single(CellKind::lstm, 1, 1, 1), 0);
  for_each_tensor(m.mutable_params(), [](const std::string&, auto& t) { t.setZero(); });
  m.mutable_params().dense_b << 0.37;
  EXPECT_DOUBLE_EQ(forward_sequence(m, random_window(15, 1, 1)).prediction(0), 0.37);
}

TEST(Model, DeepWideStackShape) {
  const auto m = init_params<double>(StackedSpec::stacked(CellKind::lstm, 80, 64, 3, 80), 3);
  const auto out = forward_sequence(m, random_window(15, 80, 2));
  EXPECT_EQ(out.prediction.size(), 80);
  EXPECT_EQ(out.final_states.size(), 3u);
  EXPECT_EQ(out.cache.steps(), 15);
}

TEST(Model, ForwardIsPure) {
  const auto m = init_params<double>(StackedSpec::stacked(CellKind::lstm, 2, 4, 2, 2), 4);
  const MatrixXd w = random_window(10, 2, 4);
  const auto copy = m.params();
  const auto a = forward_sequence(m, w);
  const auto b = forward_sequence(m, w);
  EXPECT_EQ(a.prediction, b.prediction);
  EXPECT_EQ(copy.dense_W, m.params().dense_W);
}

TEST(Model, RejectsBadInputs) {
  const auto m = init_params<double>(StackedSpec::single(CellKind::lstm, 2, 4, 1), 4);
  EXPECT_THROW(forward_sequence(m, random_window(5, 3, 1)), DomainError);
  EXPECT_THROW(forward_sequence(m, MatrixXd(0, 2)), DomainError);
  EXPECT_THROW(forward_sequence(m, random_window(5, 2, 1), {LstmState<double>::zeros(3)}), DomainError);
  StackedSpec bad = StackedSpec::stacked(CellKind::lstm, 2, 4, 2, 1);
  bad.layers[0].returns_sequence = false;
  EXPECT_THROW(init_params<double>(bad, 0), DomainError);
}

TEST(Model, ChunkedForwardMatchesMonolithic) {
  for (auto kind : {CellKind::lstm, CellKind::elman}) {
    const auto m = init_params<double>(StackedSpec::stacked(kind, 3, 5, 2, 2), 6);
    const MatrixXd w = random_window(30, 3, 7);
    const auto whole = forward_sequence(m, w);
    for (Index cut = 1; cut < 30; cut += 7) {
      const auto first = forward_sequence(m, w.topRows(cut));
      const auto second = forward_sequence(m, w.bottomRows(30 - cut), first.final_states);
      for (std::size_t l = 0; l < 2; ++l) {
        EXPECT_LT((second.final_states[l].h - whole.final_states[l].h).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((second.final_states[l].c - whole.final_states[l].c).cwiseAbs().maxCoeff(), 1e-12);
      }
      EXPECT_LT((second.prediction - whole.prediction).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Loss, Examples) {
  EXPECT_EQ(mse_loss<double>(vec({1, 2}), vec({1, 2})), 0.0);
  EXPECT_EQ(mse_loss<double>(vec({0, 0}), vec({1, 1})), 1.0);
  EXPECT_EQ(mse_loss<double>(vec({0.5}), vec({0.0})), 0.25);
  EXPECT_THROW(mse_loss<double>(vec({0.5}), vec({0.0, 1.0})), DomainError);
}

TEST(Backward, ZeroLossZeroGradient) {
  const auto m = init_params<double>(StackedSpec::stacked(CellKind::lstm, 2, 3, 2, 2), 8);
  const MatrixXd w = random_window(7, 2, 8);
  const auto fwd = forward_sequence(m, w);
  const auto g = backward(m, fwd.cache, fwd.prediction);
  for_each_tensor(g, [](const std::string& name, const auto& t) { EXPECT_TRUE(t.isZero(0.0)) << name; });
}

TEST(Backward, ScalarDenseWeightChainRule) {
  const auto m = init_params<double>(StackedSpec::single(CellKind::lstm, 1, 1, 1), 9);
  const MatrixXd w = random_window(1, 1, 9);
  const auto fwd = forward_sequence(m, w);
  const VectorXd target = vec({0.8});
  const auto g = backward(m, fwd.cache, target);
  const double h1 = fwd.final_states[0].h(0);
  EXPECT_NEAR(g.dense_W(0, 0), 2.0 * (fwd.prediction(0) - 0.8) * h1, 1e-15);
  EXPECT_NEAR(g.dense_b(0), 2.0 * (fwd.prediction(0) - 0.8), 1e-15);
}

TEST(Backward, StaleCacheRejected) {
  auto m = init_params<double>(StackedSpec::single(CellKind::lstm, 1, 2, 1), 1);
  const auto fwd = forward_sequence(m, random_window(3, 1, 1));
  m.mutable_params().dense_b(0) += 1.0;
  EXPECT_THROW(backward(m, fwd.cache, vec({0.0})), UsageError);
}

TEST(GradCheck, Architectures) {
  struct Case {
    CellKind kind;
    Index hidden;
    Index depth;
    Index input;
  };
  for (const auto& c : {Case{CellKind::elman, 4, 1, 3}, Case{CellKind::lstm, 4, 1, 5}, Case{CellKind::lstm, 8, 3, 2},
                        Case{CellKind::elman, 3, 2, 2}}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto m = init_params<double>(StackedSpec::stacked(c.kind, c.input, c.hidden, c.depth, c.input), seed);
      const MatrixXd w = random_window(15, c.input, seed + 50);
      const VectorXd target = random_window(1, c.input, seed + 99).row(0).transpose();
      const auto report = grad_check(m, w, target);
      EXPECT_LT(report.max_discrepancy, 1e-4) << to_string(c.kind) << c.hidden << "x" << c.depth;
      EXPECT_EQ(report.tensors.size(), (c.kind == CellKind::lstm ? 12u : 3u) * c.depth + 2u);
    }
  }
}

TEST(GradCheck, WithCarriedInitialState) {
  const auto m = init_params<double>(StackedSpec::stacked(CellKind::lstm, 2, 4, 2, 2), 3);
  const auto warm = forward_sequence(m, random_window(10, 2, 1)).final_states;
  const auto report = grad_check(m, random_window(15, 2, 2), vec({0.2, 0.9}), 1e-5, warm);
  EXPECT_LT(report.max_discrepancy, 1e-4);
}

TEST(GradCheck, DetectsSignFlip) {
  const auto m = init_params<double>(StackedSpec::single(CellKind::lstm, 2, 4, 2), 5);
  const MatrixXd w = random_window(15, 2, 5);
  const VectorXd target = vec({0.1, 0.9});
  const auto fwd = forward_sequence(m, w);
  auto g = backward(m, fwd.cache, target);
  std::get<LstmParams<double>>(g.layers[0]).candidate.W *= -1.0;
  const auto report = grad_check_against(m, w, target, g);
  EXPECT_NEAR(report.max_discrepancy, 2.0, 1e-3);
  for (const auto& t : report.tensors) {
    if (t.name == "layer0.W_c") EXPECT_NEAR(t.max_discrepancy, 2.0, 1e-3);
    else EXPECT_LT(t.max_discrepancy, 1e-4) << t.name;
  }
}

TEST(GradCheck, RejectsZeroEpsilon) {
  const auto m = init_params<double>(StackedSpec::single(CellKind::lstm, 1, 2, 1), 5);
  EXPECT_THROW(grad_check(m, random_window(3, 1, 1), vec({0.0}), 0.0), UsageError);
}

TEST(GradCheck, RelativeDiscrepancy) {
  EXPECT_EQ(relative_discrepancy(1.0, 1.0), 0.0);
  EXPECT_EQ(relative_discrepancy(1.0, -1.0), 2.0);
  EXPECT_EQ(relative_discrepancy(0.0, 1e-9), 0.1);
}

TEST(Optimizer, StepArithmetic) {
  auto m = init_params<double>(StackedSpec::single(CellKind::lstm, 1, 1, 1), 0);
  auto& p = m.mutable_params();
  const auto before = p;
  optimizer_step(p, zeros_like(p), SgdConfig{0.1, std::nullopt});
  EXPECT_EQ(p.dense_W, before.dense_W);
  p.dense_W(0, 0) = 1.0;
  auto g = zeros_like(p);
  g.dense_W(0, 0) = 1.0;
  optimizer_step(p, g, SgdConfig{0.1, std::nullopt});
  EXPECT_DOUBLE_EQ(p.dense_W(0, 0), 0.9);
}

TEST(Optimizer, ClippingScalesToThreshold) {
  auto m = init_params<double>(StackedSpec::single(CellKind::lstm, 1, 1, 1), 0);
  auto& p = m.mutable_params();
  p.dense_W(0, 0) = 0.0;
  p.dense_b(0) = 0.0;
  auto g = zeros_like(p);
  g.dense_W(0, 0) = 6.0;
  g.dense_b(0) = 8.0;
  EXPECT_DOUBLE_EQ(global_norm(g), 10.0);
  optimizer_step(p, g, SgdConfig{1.0, 1.0});
  EXPECT_DOUBLE_EQ(p.dense_W(0, 0), -0.6);
  EXPECT_DOUBLE_EQ(p.dense_b(0), -0.8);
}

TEST(Optimizer, NonFiniteGradientNamesTensor) {
  auto m = init_params<double>(StackedSpec::single(CellKind::lstm, 1, 1, 1), 0);
  auto g = zeros_like(m.params());
  std::get<LstmParams<double>>(g.layers[0]).output.U(0, 0) = std::nan("");
  try {
    optimizer_step(m, g, SgdConfig{});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer0.U_o"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  for (auto kind : {CellKind::lstm, CellKind::elman}) {
    Checkpoint cp;
    cp.model = init_params<double>(StackedSpec::stacked(kind, 3, 4, 2, 3), 12);
    cp.seed = 12;
    cp.districts = {"a", "b", "c"};
    cp.normalization = prep::NormalizationParams{prep::NormScope::per_district, vec({1.0 / 3.0, 2, 3}),
                                                 vec({10, 20, 30.000000000000004})};
    cp.last_month = ingest::YearMonth{2016, 10};
    std::stringstream s;
    save_checkpoint(s, cp);
    const auto back = load_checkpoint(s);
    EXPECT_EQ(back.model.spec(), cp.model.spec());
    EXPECT_EQ(back.districts, cp.districts);
    EXPECT_EQ(back.normalization->lo, cp.normalization->lo);
    EXPECT_EQ(back.normalization->hi, cp.normalization->hi);
    EXPECT_EQ(*back.last_month, *cp.last_month);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const MatrixXd w = random_window(15, 3, seed);
      EXPECT_EQ(forward_sequence(back.model, w).prediction, forward_sequence(cp.model, w).prediction);
    }
  }
}

TEST(Checkpoint, RejectsMalformedInput) {
  std::istringstream junk("{\"format\": \"something-else\"}");
  EXPECT_THROW(load_checkpoint(junk), FormatError);
  std::istringstream not_json("not json");
  EXPECT_THROW(load_checkpoint(not_json), FormatError);
  Checkpoint cp;
  cp.model = init_params<double>(StackedSpec::single(CellKind::lstm, 1, 2, 1), 0);
  std::stringstream s;
  save_checkpoint(s, cp);
  std::string text = s.str();
  text.replace(text.find("\"format_version\": 1"), 19, "\"format_version\": 99");
  std::istringstream future(text);
  EXPECT_THROW(load_checkpoint(future), FormatError);
}
