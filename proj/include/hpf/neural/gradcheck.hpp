#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "hpf/neural/model.hpp"

namespace hpf::neural {

struct TensorCheck {
  std::string name;
  double max_discrepancy = 0.0;
  Index worst_entry = 0;  // column-major linear index
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  double max_discrepancy = 0.0;
  std::vector<TensorCheck> tensors;

  bool passed(double tolerance = 1e-4) const { return max_discrepancy < tolerance; }
};

inline double relative_discrepancy(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

/// Compares `analytic` against central differences of the sample loss, entry by entry.
/// The differences are taken in long double so that their rounding error stays well
/// below the tolerance even for gradient entries near 1e-8.
template <typename Scalar, typename WindowT, typename TargetT>
GradCheckReport grad_check_against(const Model<Scalar>& model, const Eigen::MatrixBase<WindowT>& window,
                                   const Eigen::MatrixBase<TargetT>& target, const Parameters<Scalar>& analytic,
                                   double epsilon = 1e-5,
                                   const std::vector<LstmState<Scalar>>& initial = {}) {
  using Wide = long double;
  if (!(epsilon > 0.0)) throw UsageError("gradient check epsilon must be positive");
  Model<Wide> probe = cast_model<Wide>(model);
  const Matrix<Wide> w = window.template cast<Wide>();
  const Vector<Wide> t = target.template cast<Wide>();
  std::vector<LstmState<Wide>> init;
  for (const auto& s : initial) init.push_back({s.c.template cast<Wide>(), s.h.template cast<Wide>()});
  const Wide eps = static_cast<Wide>(epsilon);

  GradCheckReport report;
  auto loss_at = [&](const std::string& name) {
    const Wide v = sample_loss(probe, w, t, init);
    if (!std::isfinite(static_cast<double>(v))) throw NumericError("non-finite loss while perturbing " + name);
    return v;
  };
  auto check_tensor = [&](const std::string& name, auto& tensor, const auto& grad) {
    if (grad.size() != tensor.size()) throw DomainError("gradient tensor " + name + " has the wrong size");
    TensorCheck check{name};
    for (Index k = 0; k < tensor.size(); ++k) {
      const Wide saved = tensor.data()[k];
      tensor.data()[k] = saved + eps;
      const Wide up = loss_at(name);
      tensor.data()[k] = saved - eps;
      const Wide down = loss_at(name);
      tensor.data()[k] = saved;
      const double numeric = static_cast<double>((up - down) / (2 * eps));
      const double a = static_cast<double>(grad.data()[k]);
      const double d = relative_discrepancy(a, numeric);
      if (d > check.max_discrepancy || k == 0) {
        check.max_discrepancy = d;
        check.worst_entry = k;
        check.analytic = a;
        check.numeric = numeric;
      }
    }
    report.max_discrepancy = std::max(report.max_discrepancy, check.max_discrepancy);
    report.tensors.push_back(std::move(check));
  };

  std::vector<std::pair<std::string, const Scalar*>> flat;
  std::vector<Index> sizes;
  for_each_tensor(analytic, [&](const std::string& name, const auto& g) {
    flat.emplace_back(name, g.data());
    sizes.push_back(g.size());
  });
  std::size_t i = 0;
  for_each_tensor(probe.mutable_params(), [&](const std::string& name, auto& tensor) {
    if (i >= flat.size() || flat[i].first != name) throw DomainError("gradient set does not match the model");
    const Eigen::Map<const Matrix<Scalar>> grad(flat[i].second, sizes[i], 1);
    check_tensor(name, tensor, grad);
    ++i;
  });
  return report;
}

template <typename Scalar, typename WindowT, typename TargetT>
GradCheckReport grad_check(const Model<Scalar>& model, const Eigen::MatrixBase<WindowT>& window,
                           const Eigen::MatrixBase<TargetT>& target, double epsilon = 1e-5,
                           const std::vector<LstmState<Scalar>>& initial = {}) {
  if (!(epsilon > 0.0)) throw UsageError("gradient check epsilon must be positive");
  const auto fwd = forward_sequence(model, window, initial);
  const Vector<Scalar> t = target.template cast<Scalar>();
  if (!std::isfinite(static_cast<double>(mse_loss(fwd.prediction, t)))) {
    throw NumericError("non-finite loss at the unperturbed parameters");
  }
  const auto analytic = backward(model, fwd.cache, t);
  return grad_check_against(model, window, target, analytic, epsilon, initial);
}

}  // namespace hpf::neural
