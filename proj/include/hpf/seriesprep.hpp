#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hpf/core.hpp"

namespace hpf::prep {

enum class NormScope { global, per_district };

/// Min-max parameters. Global scope stores a single lo/hi pair; per-district one per column.
struct NormalizationParams {
  NormScope scope = NormScope::per_district;
  VectorXd lo;
  VectorXd hi;

  Index columns() const { return scope == NormScope::global ? -1 : lo.size(); }
  double lo_for(Index col) const { return scope == NormScope::global ? lo(0) : lo(col); }
  double hi_for(Index col) const { return scope == NormScope::global ? hi(0) : hi(col); }

  /// Values may be any subset of rows; columns must line up with the fitted scope.
  MatrixXd apply(const MatrixXd& values) const;
  MatrixXd invert(const MatrixXd& normalized) const;
  /// Single-column helpers for district `col`.
  VectorXd apply_column(const VectorXd& values, Index col) const;
  VectorXd invert_column(const VectorXd& normalized, Index col) const;
};

struct Normalized {
  MatrixXd values;
  NormalizationParams params;
};

/// Fits min-max statistics on the first `fit_rows` rows (all rows when nullopt) and
/// maps the whole matrix. Restricting `fit_rows` is the leakage-safe mode; its output can
/// leave [0, 1] on the held-out tail.
Normalized normalize(const MatrixXd& values, NormScope scope,
                     const std::vector<std::string>& district_names = {},
                     std::optional<Index> fit_rows = std::nullopt);

/// Chronological (input window, next row) samples over a normalized matrix.
///
/// Windows are views into the stored matrix: sample k is rows k..k+window_len-1 and its
/// target is row k+window_len.
class WindowedDataset {
 public:
  WindowedDataset() = default;
  WindowedDataset(MatrixXd source, Index window_len);

  Index size() const { return source_.rows() - window_len_; }
  Index window_len() const { return window_len_; }
  Index dim() const { return source_.cols(); }
  const MatrixXd& source() const { return source_; }

  auto window(Index k) const { return source_.middleRows(k, window_len_); }
  auto target(Index k) const { return source_.row(k + window_len_).transpose(); }

  std::vector<Index> train;
  std::vector<Index> validation;

 private:
  MatrixXd source_;
  Index window_len_ = 0;
};

WindowedDataset make_windows(const MatrixXd& normalized, Index window_len = 15);

/// Holds out the last `n_val` samples as validation.
WindowedDataset split(WindowedDataset dataset, Index n_val = 14);

/// Row-major lanes over the first batch_size * steps_per_batch samples: lane l, step s
/// is flat sample l * steps_per_batch + s. Steps [0, train_steps) train, the rest test.
struct StatefulBatchLayout {
  WindowedDataset dataset;
  Index batch_size = 5;
  Index steps_per_batch = 27;
  Index train_steps = 25;

  Index sample(Index lane, Index step) const { return lane * steps_per_batch + step; }
  Index used_samples() const { return batch_size * steps_per_batch; }
  Index train_positions() const { return batch_size * train_steps; }
  Index test_positions() const { return batch_size * (steps_per_batch - train_steps); }
};

StatefulBatchLayout stateful_reshape(WindowedDataset dataset, Index batch_size = 5,
                                     Index steps_per_batch = 27, Index train_steps = 25);

}  // namespace hpf::prep
