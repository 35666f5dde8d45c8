#pragma once

#include <string>

#include "hpf/errors.hpp"
#include "hpf/neural/activation.hpp"

namespace hpf::neural {

namespace detail {

template <typename Scalar>
void check_cols(const Matrix<Scalar>& m, Index actual, const char* what) {
  if (m.cols() != actual) {
    throw DomainError(std::string(what) + ": expected size " + std::to_string(m.cols()) + ", got " +
                      std::to_string(actual));
  }
}

}  // namespace detail

/// Elman recurrence h = a(W x + U h_prev + b).
template <typename Scalar>
struct ElmanCell {
  Matrix<Scalar> W;  // hidden x input
  Matrix<Scalar> U;  // hidden x hidden
  Vector<Scalar> b;
  Activation activation = Activation::tanh;

  Index hidden() const { return W.rows(); }
  Index input() const { return W.cols(); }

  static ElmanCell zeros(Index input, Index hidden) {
    return {Matrix<Scalar>::Zero(hidden, input), Matrix<Scalar>::Zero(hidden, hidden), Vector<Scalar>::Zero(hidden)};
  }
};

/// Complete simple recurrent network: the recurrence plus y = a_y(W_y h + b_y).
template <typename Scalar>
struct ElmanParams {
  ElmanCell<Scalar> hidden;
  Matrix<Scalar> W_y;  // output x hidden
  Vector<Scalar> b_y;
  Activation output_activation = Activation::identity;

  static ElmanParams zeros(Index input, Index hidden, Index output) {
    return {ElmanCell<Scalar>::zeros(input, hidden), Matrix<Scalar>::Zero(output, hidden),
            Vector<Scalar>::Zero(output)};
  }
};

template <typename Scalar>
struct ElmanOutput {
  Vector<Scalar> h;
  Vector<Scalar> y;
};

template <typename Scalar>
Vector<Scalar> elman_hidden(const ElmanCell<Scalar>& cell, const Vector<Scalar>& x, const Vector<Scalar>& h_prev) {
  detail::check_cols(cell.W, x.size(), "elman input");
  detail::check_cols(cell.U, h_prev.size(), "elman hidden state");
  return activate(cell.activation, cell.W * x + cell.U * h_prev + cell.b);
}

template <typename Scalar>
ElmanOutput<Scalar> elman_step(const ElmanParams<Scalar>& params, const Vector<Scalar>& x,
                               const Vector<Scalar>& h_prev) {
  Vector<Scalar> h = elman_hidden(params.hidden, x, h_prev);
  detail::check_cols(params.W_y, h.size(), "elman output layer");
  Vector<Scalar> y = activate(params.output_activation, params.W_y * h + params.b_y);
  return {std::move(h), std::move(y)};
}

/// One LSTM gate block: pre-activation W x + U h_prev + b.
template <typename Scalar>
struct GateParams {
  Matrix<Scalar> W;  // hidden x input
  Matrix<Scalar> U;  // hidden x hidden
  Vector<Scalar> b;

  auto preactivation(const Vector<Scalar>& x, const Vector<Scalar>& h_prev) const { return W * x + U * h_prev + b; }
};

template <typename Scalar>
struct LstmParams {
  GateParams<Scalar> forget;
  GateParams<Scalar> input;
  GateParams<Scalar> output;
  GateParams<Scalar> candidate;
  Activation gate_activation = Activation::logistic;
  Activation candidate_activation = Activation::tanh;
  Activation cell_output_activation = Activation::tanh;

  Index hidden() const { return forget.W.rows(); }
  Index input_dim() const { return forget.W.cols(); }

  static LstmParams zeros(Index input, Index hidden) {
    auto gate = [&] {
      return GateParams<Scalar>{Matrix<Scalar>::Zero(hidden, input), Matrix<Scalar>::Zero(hidden, hidden),
                                Vector<Scalar>::Zero(hidden)};
    };
    return {gate(), gate(), gate(), gate()};
  }
};

template <typename Scalar>
struct LstmState {
  Vector<Scalar> c;
  Vector<Scalar> h;

  static LstmState zeros(Index hidden) { return {Vector<Scalar>::Zero(hidden), Vector<Scalar>::Zero(hidden)}; }
};

/// Every intermediate of one LSTM step, kept for the backward pass.
template <typename Scalar>
struct LstmTrace {
  Vector<Scalar> f, i, o, g;  // gates and candidate
  Vector<Scalar> c;
  Vector<Scalar> cell_out;  // a_h(c)
  Vector<Scalar> h;
};

template <typename Scalar>
LstmTrace<Scalar> lstm_trace(const LstmParams<Scalar>& p, const Vector<Scalar>& x, const LstmState<Scalar>& state) {
  detail::check_cols(p.forget.W, x.size(), "lstm input");
  detail::check_cols(p.forget.U, state.h.size(), "lstm hidden state");
  if (state.c.size() != p.hidden()) throw DomainError("lstm cell state has the wrong size");
  LstmTrace<Scalar> t;
  t.f = activate(p.gate_activation, p.forget.preactivation(x, state.h));
  t.i = activate(p.gate_activation, p.input.preactivation(x, state.h));
  t.o = activate(p.gate_activation, p.output.preactivation(x, state.h));
  t.g = activate(p.candidate_activation, p.candidate.preactivation(x, state.h));
  t.c = t.f.cwiseProduct(state.c) + t.i.cwiseProduct(t.g);
  t.cell_out = activate(p.cell_output_activation, t.c);
  t.h = t.o.cwiseProduct(t.cell_out);
  return t;
}

template <typename Scalar>
LstmState<Scalar> lstm_step(const LstmParams<Scalar>& params, const Vector<Scalar>& x,
                            const LstmState<Scalar>& state) {
  auto t = lstm_trace(params, x, state);
  return {std::move(t.c), std::move(t.h)};
}

}  // namespace hpf::neural
