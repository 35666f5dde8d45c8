#pragma once

#include <compare>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hpf/core.hpp"

namespace hpf::ingest {

/// Calendar year-month. Days are not represented.
struct YearMonth {
  int year = 2000;
  int month = 1;  // 1..12

  /// Months since year 0; consecutive months differ by exactly one.
  int ordinal() const { return year * 12 + (month - 1); }
  static YearMonth from_ordinal(int ordinal);

  YearMonth next(int months = 1) const { return from_ordinal(ordinal() + months); }
  std::string to_string() const;

  /// Accepts `YYYY-MM` and `YYYY-MM-DD` (day is validated then dropped).
  static std::optional<YearMonth> parse_iso(std::string_view s);
  /// Pattern of `YYYY`, `MM`, `DD` tokens with literal separators, e.g. `MM/YYYY`.
  static std::optional<YearMonth> parse_pattern(std::string_view s, std::string_view pattern);

  friend auto operator<=>(const YearMonth&, const YearMonth&) = default;
};

struct CalendarRange {
  YearMonth first;
  YearMonth last;

  int size() const { return last.ordinal() - first.ordinal() + 1; }
  bool contains(YearMonth ym) const { return first <= ym && ym <= last; }
  std::vector<YearMonth> months() const;
};

struct TransactionRecord {
  YearMonth date;
  std::string district;
  double price = 0.0;  // currency per square meter
};

enum class RejectReason {
  wrong_field_count,
  bad_date,
  empty_district,
  missing_price,
  bad_price,
  nonpositive_price,
  out_of_range,
};

std::string to_string(RejectReason reason);

struct RejectedRow {
  std::size_t line = 0;  // 1-based physical line, header is line 1
  RejectReason reason = RejectReason::bad_date;
};

struct ParseOptions {
  /// Tried after ISO parsing fails, e.g. "MM/YYYY".
  std::optional<std::string> alternate_date_format;
  /// Rows outside this range are rejected as out_of_range.
  std::optional<CalendarRange> calendar;
};

struct ParseResult {
  std::vector<TransactionRecord> records;
  std::vector<RejectedRow> rejected;
  std::size_t data_rows = 0;  // non-blank rows after the header
};

/// District keys are trimmed and lower-cased.
std::string canonical_district(std::string_view raw);

/// Reads the `date,district,price` CSV. Columns may appear in any order and extra
/// columns are ignored. Throws FormatError on a missing header or column, IoError
/// if the stream goes bad.
ParseResult parse_transactions(std::istream& source, const ParseOptions& options = {});

void write_rejections(std::ostream& out, const std::vector<RejectedRow>& rejected);

/// Months x districts grid of monthly mean prices.
///
/// Missing cells hold NaN until fill_gaps runs. coverage counts the transactions
/// behind each cell and is zero exactly where the value was produced by gap filling.
struct PriceMatrix {
  std::vector<YearMonth> months;
  std::vector<std::string> districts;
  MatrixXd values;
  MatrixXi coverage;

  Index num_months() const { return values.rows(); }
  Index num_districts() const { return values.cols(); }
  Index missing_cells() const;
  Index zero_coverage_cells() const { return (coverage.array() == 0).count(); }
  std::optional<Index> district_index(std::string_view name) const;
};

PriceMatrix aggregate_monthly(const std::vector<TransactionRecord>& records,
                              const CalendarRange& calendar);

enum class GapPolicy {
  interpolate,    // linear between neighbours, flat extension at the edges
  drop_district,  // remove every column that has a missing cell
};

PriceMatrix fill_gaps(const PriceMatrix& matrix, GapPolicy policy = GapPolicy::interpolate);

/// Matrix CSV: `month,<district>...` header, one row per month, empty field for a
/// missing cell. Reading sets coverage to 1 on present cells and 0 on empty ones.
void write_matrix_csv(std::ostream& out, const PriceMatrix& matrix);
PriceMatrix read_matrix_csv(std::istream& in);

}  // namespace hpf::ingest
