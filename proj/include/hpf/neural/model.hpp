#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "hpf/errors.hpp"
#include "hpf/neural/cells.hpp"

namespace hpf::neural {

enum class CellKind { elman, lstm };

inline std::string to_string(CellKind k) { return k == CellKind::elman ? "elman" : "lstm"; }

struct LayerSpec {
  CellKind kind = CellKind::lstm;
  Index hidden = 1;
  bool returns_sequence = false;
};

/// Layer stack followed by a dense head mapping the last hidden state to the output.
struct StackedSpec {
  Index input_dim = 1;
  Index output_dim = 1;
  std::vector<LayerSpec> layers;
  Activation output_activation = Activation::identity;

  /// `depth` layers of `hidden` units; all but the last return sequences.
  static StackedSpec stacked(CellKind kind, Index input_dim, Index hidden, Index depth, Index output_dim) {
    StackedSpec s{input_dim, output_dim, {}};
    for (Index l = 0; l < depth; ++l) s.layers.push_back({kind, hidden, l + 1 < depth});
    return s;
  }
  static StackedSpec single(CellKind kind, Index input_dim, Index hidden, Index output_dim) {
    return stacked(kind, input_dim, hidden, 1, output_dim);
  }

  Index layer_input(std::size_t l) const { return l == 0 ? input_dim : layers[l - 1].hidden; }

  void validate() const {
    if (layers.empty()) throw DomainError("model needs at least one recurrent layer");
    if (input_dim < 1 || output_dim < 1) throw DomainError("model input and output sizes must be positive");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].hidden < 1) throw DomainError("layer " + std::to_string(l) + " has zero hidden units");
      if (l + 1 < layers.size() && !layers[l].returns_sequence) {
        throw DomainError("layer " + std::to_string(l) + " feeds another layer and must return sequences");
      }
    }
  }

  friend bool operator==(const StackedSpec& a, const StackedSpec& b) {
    if (a.input_dim != b.input_dim || a.output_dim != b.output_dim || a.output_activation != b.output_activation ||
        a.layers.size() != b.layers.size()) {
      return false;
    }
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
      const auto& x = a.layers[l];
      const auto& y = b.layers[l];
      if (x.kind != y.kind || x.hidden != y.hidden || x.returns_sequence != y.returns_sequence) return false;
    }
    return true;
  }
};

template <typename Scalar>
using Layer = std::variant<ElmanCell<Scalar>, LstmParams<Scalar>>;

/// Every learnable tensor of a model. Gradients use the same type.
template <typename Scalar>
struct Parameters {
  using scalar_type = Scalar;
  std::vector<Layer<Scalar>> layers;
  Matrix<Scalar> dense_W;  // output x last hidden
  Vector<Scalar> dense_b;
};

namespace detail {

template <typename Params, typename Fn>
void visit_tensors(Params& p, Fn&& fn) {
  using Scalar = typename std::remove_const_t<Params>::scalar_type;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    std::visit(
        [&](auto& layer) {
          using L = std::remove_const_t<std::remove_reference_t<decltype(layer)>>;
          if constexpr (std::is_same_v<L, ElmanCell<Scalar>>) {
            fn(prefix + "W_h", layer.W);
            fn(prefix + "U_h", layer.U);
            fn(prefix + "b_h", layer.b);
          } else {
            const auto gates = std::array{std::pair{"f", &layer.forget}, std::pair{"i", &layer.input},
                                          std::pair{"o", &layer.output}, std::pair{"c", &layer.candidate}};
            for (const auto& [tag, gate] : gates) {
              fn(prefix + "W_" + tag, gate->W);
              fn(prefix + "U_" + tag, gate->U);
              fn(prefix + "b_" + tag, gate->b);
            }
          }
        },
        p.layers[l]);
  }
  fn(std::string("dense.W"), p.dense_W);
  fn(std::string("dense.b"), p.dense_b);
}

}  // namespace detail

/// Calls fn(name, tensor) on every tensor in a fixed order.
template <typename Scalar, typename Fn>
void for_each_tensor(Parameters<Scalar>& p, Fn&& fn) {
  detail::visit_tensors(p, std::forward<Fn>(fn));
}

template <typename Scalar, typename Fn>
void for_each_tensor(const Parameters<Scalar>& p, Fn&& fn) {
  detail::visit_tensors(p, std::forward<Fn>(fn));
}

/// Calls fn(name, a_tensor, b_tensor) over two identically shaped parameter sets.
template <typename Scalar, typename Fn>
void for_each_tensor_pair(Parameters<Scalar>& a, const Parameters<Scalar>& b, Fn&& fn) {
  std::vector<const Scalar*> b_data;
  std::vector<Index> b_size;
  for_each_tensor(b, [&](const std::string&, const auto& t) {
    b_data.push_back(t.data());
    b_size.push_back(t.size());
  });
  std::size_t k = 0;
  for_each_tensor(a, [&](const std::string& name, auto& t) {
    if (k >= b_data.size() || b_size[k] != t.size()) throw DomainError("parameter shapes differ at " + name);
    Eigen::Map<const Matrix<Scalar>> other(b_data[k], t.rows(), t.cols());
    fn(name, t, other);
    ++k;
  });
  if (k != b_data.size()) throw DomainError("parameter sets have different tensor counts");
}

template <typename Scalar>
Parameters<Scalar> zeros_like(const Parameters<Scalar>& p) {
  Parameters<Scalar> z = p;
  for_each_tensor(z, [](const std::string&, auto& t) { t.setZero(); });
  return z;
}

template <typename Scalar>
Index parameter_count(const Parameters<Scalar>& p) {
  Index n = 0;
  for_each_tensor(p, [&](const std::string&, const auto& t) { n += t.size(); });
  return n;
}

namespace detail {
inline std::atomic<std::uint64_t>& version_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}
inline std::uint64_t next_version() { return ++version_counter(); }
}  // namespace detail

/// Architecture plus parameters. Every mutable access stamps a fresh version so
/// caches taken before the change are detected as stale.
template <typename Scalar>
class Model {
 public:
  Model() = default;
  Model(StackedSpec spec, Parameters<Scalar> params)
      : spec_(std::move(spec)), params_(std::move(params)), version_(detail::next_version()) {
    spec_.validate();
    check_shapes();
  }

  const StackedSpec& spec() const { return spec_; }
  const Parameters<Scalar>& params() const { return params_; }
  Parameters<Scalar>& mutable_params() {
    version_ = detail::next_version();
    return params_;
  }
  std::uint64_t version() const { return version_; }

 private:
  void check_shapes() const {
    if (params_.layers.size() != spec_.layers.size()) throw DomainError("layer count differs from spec");
    for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
      const auto& ls = spec_.layers[l];
      const Index in = spec_.layer_input(l);
      bool ok = false;
      if (ls.kind == CellKind::elman) {
        if (const auto* c = std::get_if<ElmanCell<Scalar>>(&params_.layers[l])) {
          ok = c->W.rows() == ls.hidden && c->W.cols() == in && c->U.rows() == ls.hidden &&
               c->U.cols() == ls.hidden && c->b.size() == ls.hidden;
        }
      } else if (const auto* p = std::get_if<LstmParams<Scalar>>(&params_.layers[l])) {
        ok = true;
        for (const auto* g : {&p->forget, &p->input, &p->output, &p->candidate}) {
          ok = ok && g->W.rows() == ls.hidden && g->W.cols() == in && g->U.rows() == ls.hidden &&
               g->U.cols() == ls.hidden && g->b.size() == ls.hidden;
        }
      }
      if (!ok) throw DomainError("layer " + std::to_string(l) + " parameters do not match the model spec");
    }
    const Index last = spec_.layers.back().hidden;
    if (params_.dense_W.rows() != spec_.output_dim || params_.dense_W.cols() != last ||
        params_.dense_b.size() != spec_.output_dim) {
      throw DomainError("dense head does not match the model spec");
    }
  }

  StackedSpec spec_;
  Parameters<Scalar> params_;
  std::uint64_t version_ = 0;
};

/// Same model in another scalar type.
template <typename To, typename From>
Model<To> cast_model(const Model<From>& model) {
  const auto& p = model.params();
  Parameters<To> out;
  auto gate = [](const GateParams<From>& g) {
    return GateParams<To>{g.W.template cast<To>(), g.U.template cast<To>(), g.b.template cast<To>()};
  };
  for (const auto& layer : p.layers) {
    if (const auto* e = std::get_if<ElmanCell<From>>(&layer)) {
      out.layers.emplace_back(
          ElmanCell<To>{e->W.template cast<To>(), e->U.template cast<To>(), e->b.template cast<To>(), e->activation});
    } else {
      const auto& l = std::get<LstmParams<From>>(layer);
      out.layers.emplace_back(LstmParams<To>{gate(l.forget), gate(l.input), gate(l.output), gate(l.candidate),
                                             l.gate_activation, l.candidate_activation, l.cell_output_activation});
    }
  }
  out.dense_W = p.dense_W.template cast<To>();
  out.dense_b = p.dense_b.template cast<To>();
  return Model<To>(model.spec(), std::move(out));
}

/// One-layer Elman model whose dense head is the Elman output layer.
template <typename Scalar>
Model<Scalar> to_model(const ElmanParams<Scalar>& p) {
  StackedSpec spec = StackedSpec::single(CellKind::elman, p.hidden.input(), p.hidden.hidden(), p.W_y.rows());
  spec.output_activation = p.output_activation;
  return Model<Scalar>(std::move(spec), Parameters<Scalar>{{p.hidden}, p.W_y, p.b_y});
}

enum class InitScheme {
  fan_in_uniform,  // U[-s, s], s = 1/sqrt(columns of the matrix)
  unit_fan_in_uniform,  // s = 1/sqrt(input + hidden), shared by W and U of a layer
};

template <typename Scalar>
Model<Scalar> init_params(const StackedSpec& spec, std::uint64_t seed, InitScheme scheme = InitScheme::fan_in_uniform) {
  spec.validate();
  std::mt19937_64 rng(seed);
  auto fill = [&](Matrix<Scalar>& m, Index fan_in) {
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-s, s);
    for (Index j = 0; j < m.cols(); ++j) {
      for (Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<Scalar>(u(rng));
    }
  };
  auto fans = [&](Index in, Index hidden) {
    if (scheme == InitScheme::unit_fan_in_uniform) return std::pair{in + hidden, in + hidden};
    return std::pair{in, hidden};
  };

  Parameters<Scalar> p;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const Index in = spec.layer_input(l);
    const Index h = spec.layers[l].hidden;
    const auto [fan_w, fan_u] = fans(in, h);
    if (spec.layers[l].kind == CellKind::elman) {
      auto cell = ElmanCell<Scalar>::zeros(in, h);
      fill(cell.W, fan_w);
      fill(cell.U, fan_u);
      p.layers.emplace_back(std::move(cell));
    } else {
      auto lstm = LstmParams<Scalar>::zeros(in, h);
      for (auto* g : {&lstm.forget, &lstm.input, &lstm.output, &lstm.candidate}) {
        fill(g->W, fan_w);
        fill(g->U, fan_u);
      }
      lstm.forget.b.setOnes();
      p.layers.emplace_back(std::move(lstm));
    }
  }
  p.dense_W.resize(spec.output_dim, spec.layers.back().hidden);
  fill(p.dense_W, spec.layers.back().hidden);
  p.dense_b = Vector<Scalar>::Zero(spec.output_dim);
  return Model<Scalar>(spec, std::move(p));
}

/// Per-step record of one layer. Elman layers leave the gate fields empty and c at zero.
template <typename Scalar>
struct StepRecord {
  Vector<Scalar> x;
  Vector<Scalar> h_prev;
  Vector<Scalar> c_prev;
  LstmTrace<Scalar> trace;  // for Elman only trace.h and trace.c are set
};

template <typename Scalar>
struct ForwardCache {
  std::uint64_t version = 0;
  std::vector<std::vector<StepRecord<Scalar>>> layers;  // [layer][step]
  Vector<Scalar> prediction;

  Index steps() const { return layers.empty() ? 0 : static_cast<Index>(layers.front().size()); }
  /// Per-layer state after processing `step` (0-based) of the window.
  std::vector<LstmState<Scalar>> states_after(Index step) const {
    std::vector<LstmState<Scalar>> out;
    for (const auto& layer : layers) {
      const auto& r = layer[static_cast<std::size_t>(step)];
      out.push_back({r.trace.c, r.trace.h});
    }
    return out;
  }
};

template <typename Scalar>
struct ForwardResult {
  Vector<Scalar> prediction;
  ForwardCache<Scalar> cache;
  std::vector<LstmState<Scalar>> final_states;
};

template <typename Scalar>
std::vector<LstmState<Scalar>> zero_states(const StackedSpec& spec) {
  std::vector<LstmState<Scalar>> s;
  for (const auto& l : spec.layers) s.push_back(LstmState<Scalar>::zeros(l.hidden));
  return s;
}

/// Runs a window (one row per time step) through the stack. An empty `initial_states`
/// means zero states for every layer.
template <typename Scalar, typename Derived>
ForwardResult<Scalar> forward_sequence(const Model<Scalar>& model, const Eigen::MatrixBase<Derived>& window,
                                       const std::vector<LstmState<Scalar>>& initial_states = {}) {
  const auto& spec = model.spec();
  const auto& params = model.params();
  if (window.rows() < 1) throw DomainError("window must contain at least one time step");
  if (window.cols() != spec.input_dim) {
    throw DomainError("window has " + std::to_string(window.cols()) + " features, model expects " +
                      std::to_string(spec.input_dim));
  }
  auto states = initial_states.empty() ? zero_states<Scalar>(spec) : initial_states;
  if (states.size() != spec.layers.size()) throw DomainError("need one initial state per layer");
  for (std::size_t l = 0; l < states.size(); ++l) {
    if (states[l].h.size() != spec.layers[l].hidden || states[l].c.size() != spec.layers[l].hidden) {
      throw DomainError("initial state of layer " + std::to_string(l) + " has the wrong size");
    }
  }

  const Index steps = window.rows();
  ForwardResult<Scalar> out;
  out.cache.version = model.version();
  out.cache.layers.resize(spec.layers.size());

  std::vector<Vector<Scalar>> inputs(static_cast<std::size_t>(steps));
  for (Index t = 0; t < steps; ++t) inputs[static_cast<std::size_t>(t)] = window.row(t).transpose().template cast<Scalar>();

  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    auto& records = out.cache.layers[l];
    records.resize(static_cast<std::size_t>(steps));
    LstmState<Scalar> state = states[l];
    for (Index t = 0; t < steps; ++t) {
      auto& r = records[static_cast<std::size_t>(t)];
      r.x = std::move(inputs[static_cast<std::size_t>(t)]);
      r.h_prev = state.h;
      r.c_prev = state.c;
      if (const auto* cell = std::get_if<ElmanCell<Scalar>>(&params.layers[l])) {
        r.trace.h = elman_hidden(*cell, r.x, state.h);
        r.trace.c = state.c;
      } else {
        r.trace = lstm_trace(std::get<LstmParams<Scalar>>(params.layers[l]), r.x, state);
      }
      state = {r.trace.c, r.trace.h};
      inputs[static_cast<std::size_t>(t)] = r.trace.h;
    }
    out.final_states.push_back(std::move(state));
  }
  const auto& top = out.cache.layers.back().back().trace.h;
  out.prediction = activate(spec.output_activation, params.dense_W * top + params.dense_b);
  out.cache.prediction = out.prediction;
  return out;
}

template <typename Scalar>
Scalar mse_loss(const Vector<Scalar>& prediction, const Vector<Scalar>& target) {
  if (prediction.size() != target.size()) throw DomainError("prediction and target lengths differ");
  if (prediction.size() == 0) throw DomainError("mse of empty vectors is undefined");
  return (prediction - target).squaredNorm() / static_cast<Scalar>(prediction.size());
}

/// Reverse-mode gradients of mse_loss(prediction, target) through the cached forward pass.
/// Gradients do not flow into the initial states.
template <typename Scalar>
Parameters<Scalar> backward(const Model<Scalar>& model, const ForwardCache<Scalar>& cache,
                            const Vector<Scalar>& target) {
  if (cache.version != model.version()) {
    throw UsageError("forward cache is stale: model parameters changed since the forward pass");
  }
  const auto& spec = model.spec();
  const auto& params = model.params();
  if (target.size() != spec.output_dim) throw DomainError("target length differs from model output");

  Parameters<Scalar> grad = zeros_like(params);
  const Index steps = cache.steps();
  const auto& top_h = cache.layers.back().back().trace.h;

  Vector<Scalar> d_pred = (Scalar(2) / static_cast<Scalar>(target.size())) * (cache.prediction - target);
  Vector<Scalar> d_pre = d_pred.cwiseProduct(activation_slope(spec.output_activation, cache.prediction));
  grad.dense_W = d_pre * top_h.transpose();
  grad.dense_b = d_pre;

  // d_out[t]: loss gradient w.r.t. the current layer's output h_t.
  std::vector<Vector<Scalar>> d_out(static_cast<std::size_t>(steps));
  for (auto& v : d_out) v = Vector<Scalar>::Zero(spec.layers.back().hidden);
  d_out.back() = params.dense_W.transpose() * d_pre;

  for (std::size_t l = spec.layers.size(); l-- > 0;) {
    const auto& records = cache.layers[l];
    const Index hidden = spec.layers[l].hidden;
    Vector<Scalar> dh_next = Vector<Scalar>::Zero(hidden);
    Vector<Scalar> dc_next = Vector<Scalar>::Zero(hidden);
    std::vector<Vector<Scalar>> d_in(static_cast<std::size_t>(steps));

    if (const auto* cell = std::get_if<ElmanCell<Scalar>>(&params.layers[l])) {
      auto& g = std::get<ElmanCell<Scalar>>(grad.layers[l]);
      for (Index t = steps; t-- > 0;) {
        const auto& r = records[static_cast<std::size_t>(t)];
        const Vector<Scalar> dh = d_out[static_cast<std::size_t>(t)] + dh_next;
        const Vector<Scalar> da = dh.cwiseProduct(activation_slope(cell->activation, r.trace.h));
        g.W.noalias() += da * r.x.transpose();
        g.U.noalias() += da * r.h_prev.transpose();
        g.b += da;
        d_in[static_cast<std::size_t>(t)] = cell->W.transpose() * da;
        dh_next = cell->U.transpose() * da;
      }
    } else {
      const auto& p = std::get<LstmParams<Scalar>>(params.layers[l]);
      auto& g = std::get<LstmParams<Scalar>>(grad.layers[l]);
      for (Index t = steps; t-- > 0;) {
        const auto& r = records[static_cast<std::size_t>(t)];
        const auto& tr = r.trace;
        const Vector<Scalar> dh = d_out[static_cast<std::size_t>(t)] + dh_next;
        const Vector<Scalar> d_o = dh.cwiseProduct(tr.cell_out);
        const Vector<Scalar> dc =
            dc_next + dh.cwiseProduct(tr.o).cwiseProduct(activation_slope(p.cell_output_activation, tr.cell_out));
        const Vector<Scalar> da_f = dc.cwiseProduct(r.c_prev).cwiseProduct(activation_slope(p.gate_activation, tr.f));
        const Vector<Scalar> da_i = dc.cwiseProduct(tr.g).cwiseProduct(activation_slope(p.gate_activation, tr.i));
        const Vector<Scalar> da_o = d_o.cwiseProduct(activation_slope(p.gate_activation, tr.o));
        const Vector<Scalar> da_g = dc.cwiseProduct(tr.i).cwiseProduct(activation_slope(p.candidate_activation, tr.g));
        dc_next = dc.cwiseProduct(tr.f);

        Vector<Scalar> dx = Vector<Scalar>::Zero(r.x.size());
        dh_next.setZero();
        const std::pair<const Vector<Scalar>*, std::pair<const GateParams<Scalar>*, GateParams<Scalar>*>> blocks[] = {
            {&da_f, {&p.forget, &g.forget}},
            {&da_i, {&p.input, &g.input}},
            {&da_o, {&p.output, &g.output}},
            {&da_g, {&p.candidate, &g.candidate}}};
        for (const auto& [da, gates] : blocks) {
          gates.second->W.noalias() += *da * r.x.transpose();
          gates.second->U.noalias() += *da * r.h_prev.transpose();
          gates.second->b += *da;
          dx.noalias() += gates.first->W.transpose() * *da;
          dh_next.noalias() += gates.first->U.transpose() * *da;
        }
        d_in[static_cast<std::size_t>(t)] = std::move(dx);
      }
    }
    d_out = std::move(d_in);
  }
  return grad;
}

/// Loss of one sample: forward pass plus mse.
template <typename Scalar, typename WindowT, typename TargetT>
Scalar sample_loss(const Model<Scalar>& model, const Eigen::MatrixBase<WindowT>& window,
                   const Eigen::MatrixBase<TargetT>& target, const std::vector<LstmState<Scalar>>& initial = {}) {
  return mse_loss<Scalar>(forward_sequence(model, window, initial).prediction, target.template cast<Scalar>());
}

}  // namespace hpf::neural
