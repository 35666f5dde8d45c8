#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "hpf/core.hpp"

namespace hpf::neural {

enum class Activation { identity, logistic, tanh };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::logistic: return "logistic";
    case Activation::tanh: return "tanh";
  }
  return "identity";
}

inline std::optional<Activation> parse_activation(std::string_view s) {
  if (s == "identity") return Activation::identity;
  if (s == "logistic") return Activation::logistic;
  if (s == "tanh") return Activation::tanh;
  return std::nullopt;
}

template <typename Derived>
auto activate(Activation a, const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> out(x.size());
  switch (a) {
    case Activation::identity: out = x; break;
    case Activation::logistic: out = (Scalar(1) + (-x.array()).exp()).inverse().matrix(); break;
    case Activation::tanh: out = x.array().tanh().matrix(); break;
  }
  return out;
}

/// Derivative expressed through the activation's output y = a(x).
template <typename Derived>
auto activation_slope(Activation a, const Eigen::MatrixBase<Derived>& y) {
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> out(y.size());
  switch (a) {
    case Activation::identity: out.setOnes(); break;
    case Activation::logistic: out = (y.array() * (Scalar(1) - y.array())).matrix(); break;
    case Activation::tanh: out = (Scalar(1) - y.array().square()).matrix(); break;
  }
  return out;
}

}  // namespace hpf::neural
