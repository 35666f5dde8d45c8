#include "hpf/seriesprep.hpp"

#include <numeric>
#include <utility>

#include "hpf/errors.hpp"

namespace hpf::prep {

namespace {

void check_columns(const NormalizationParams& p, Index cols) {
  if (p.scope == NormScope::per_district && p.lo.size() != cols) {
    throw UsageError("normalization params fitted on " + std::to_string(p.lo.size()) +
                     " districts, got " + std::to_string(cols));
  }
}

}  // namespace

MatrixXd NormalizationParams::apply(const MatrixXd& values) const {
  check_columns(*this, values.cols());
  MatrixXd out(values.rows(), values.cols());
  for (Index d = 0; d < values.cols(); ++d) {
    out.col(d) = (values.col(d).array() - lo_for(d)) / (hi_for(d) - lo_for(d));
  }
  return out;
}

MatrixXd NormalizationParams::invert(const MatrixXd& normalized) const {
  check_columns(*this, normalized.cols());
  MatrixXd out(normalized.rows(), normalized.cols());
  for (Index d = 0; d < normalized.cols(); ++d) {
    out.col(d) = normalized.col(d).array() * (hi_for(d) - lo_for(d)) + lo_for(d);
  }
  return out;
}

VectorXd NormalizationParams::apply_column(const VectorXd& values, Index col) const {
  return (values.array() - lo_for(col)) / (hi_for(col) - lo_for(col));
}

VectorXd NormalizationParams::invert_column(const VectorXd& normalized, Index col) const {
  return normalized.array() * (hi_for(col) - lo_for(col)) + lo_for(col);
}

Normalized normalize(const MatrixXd& values, NormScope scope,
                     const std::vector<std::string>& district_names, std::optional<Index> fit_rows) {
  if (values.size() == 0) throw DomainError("cannot normalize an empty matrix");
  if (values.array().isNaN().any()) throw DomainError("cannot normalize a matrix with missing cells");
  const Index rows = fit_rows.value_or(values.rows());
  if (rows < 1 || rows > values.rows()) throw DomainError("normalization fit rows out of range");
  const auto fit = values.topRows(rows);

  NormalizationParams p;
  p.scope = scope;
  if (scope == NormScope::global) {
    p.lo = VectorXd::Constant(1, fit.minCoeff());
    p.hi = VectorXd::Constant(1, fit.maxCoeff());
    if (!(p.hi(0) > p.lo(0))) throw DomainError("matrix is constant; global normalization undefined");
  } else {
    p.lo = fit.colwise().minCoeff().transpose();
    p.hi = fit.colwise().maxCoeff().transpose();
    for (Index d = 0; d < values.cols(); ++d) {
      if (!(p.hi(d) > p.lo(d))) {
        const auto name = static_cast<std::size_t>(d) < district_names.size()
                              ? district_names[static_cast<std::size_t>(d)]
                              : "#" + std::to_string(d);
        throw DomainError("district '" + name + "' is constant; per-district normalization undefined");
      }
    }
  }
  return {p.apply(values), p};
}

WindowedDataset::WindowedDataset(MatrixXd source, Index window_len)
    : source_(std::move(source)), window_len_(window_len) {}

WindowedDataset make_windows(const MatrixXd& normalized, Index window_len) {
  if (window_len < 1) throw DomainError("window length must be at least 1");
  if (normalized.rows() <= window_len) {
    throw DomainError("need more than " + std::to_string(window_len) + " months to build windows, got " +
                      std::to_string(normalized.rows()));
  }
  WindowedDataset ds(normalized, window_len);
  ds.train.resize(static_cast<std::size_t>(ds.size()));
  std::iota(ds.train.begin(), ds.train.end(), Index{0});
  return ds;
}

WindowedDataset split(WindowedDataset dataset, Index n_val) {
  const Index n = dataset.size();
  if (n_val < 0 || n_val >= n) {
    throw DomainError("validation size " + std::to_string(n_val) + " must be below the sample count " +
                      std::to_string(n));
  }
  dataset.train.clear();
  dataset.validation.clear();
  for (Index k = 0; k < n - n_val; ++k) dataset.train.push_back(k);
  for (Index k = n - n_val; k < n; ++k) dataset.validation.push_back(k);
  return dataset;
}

StatefulBatchLayout stateful_reshape(WindowedDataset dataset, Index batch_size, Index steps_per_batch,
                                     Index train_steps) {
  if (batch_size < 1 || steps_per_batch < 1) throw DomainError("stateful layout dimensions must be positive");
  if (train_steps < 1 || train_steps > steps_per_batch) {
    throw DomainError("train_steps must lie in [1, steps_per_batch]");
  }
  if (batch_size * steps_per_batch > dataset.size()) {
    throw DomainError("stateful layout " + std::to_string(batch_size) + "x" + std::to_string(steps_per_batch) +
                      " exceeds the " + std::to_string(dataset.size()) + " available samples");
  }
  return StatefulBatchLayout{std::move(dataset), batch_size, steps_per_batch, train_steps};
}

}  // namespace hpf::prep
