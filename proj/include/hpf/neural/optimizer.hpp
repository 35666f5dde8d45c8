#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "hpf/neural/model.hpp"

namespace hpf::neural {

struct SgdConfig {
  double learning_rate = 0.01;
  /// Rescale the whole gradient to this global L2 norm when it is larger.
  std::optional<double> clip_norm;
};

template <typename Scalar>
double global_norm(const Parameters<Scalar>& grads) {
  double sq = 0.0;
  for_each_tensor(grads, [&](const std::string&, const auto& t) { sq += static_cast<double>(t.squaredNorm()); });
  return std::sqrt(sq);
}

/// theta <- theta - lr * g, with g optionally clipped by global norm.
template <typename Scalar>
void optimizer_step(Parameters<Scalar>& params, const Parameters<Scalar>& grads, const SgdConfig& config) {
  if (!(config.learning_rate > 0.0)) throw DomainError("learning rate must be positive");
  for_each_tensor(grads, [](const std::string& name, const auto& t) {
    if (!t.allFinite()) throw NumericError("non-finite gradient in " + name);
  });
  double scale = config.learning_rate;
  if (config.clip_norm) {
    const double norm = global_norm(grads);
    if (norm > *config.clip_norm) scale *= *config.clip_norm / norm;
  }
  for_each_tensor_pair(params, grads, [&](const std::string&, auto& p, const auto& g) {
    p -= static_cast<Scalar>(scale) * g;
  });
}

template <typename Scalar>
void optimizer_step(Model<Scalar>& model, const Parameters<Scalar>& grads, const SgdConfig& config) {
  optimizer_step(model.mutable_params(), grads, config);
}

/// acc += weight * g, tensor by tensor.
template <typename Scalar>
void accumulate(Parameters<Scalar>& acc, const Parameters<Scalar>& g, Scalar weight = Scalar(1)) {
  for_each_tensor_pair(acc, g, [&](const std::string&, auto& a, const auto& b) { a += weight * b; });
}

}  // namespace hpf::neural
