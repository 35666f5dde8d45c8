#include "hpf/ingest.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>

#include "hpf/errors.hpp"
#include "hpf/text.hpp"

namespace hpf::ingest {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool valid_day(int year, int month, int day) {
  return day >= 1 && std::chrono::year_month_day{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                                                  std::chrono::day{static_cast<unsigned>(day)}}
                         .ok();
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::string_view unquote(std::string_view field) {
  field = text::trim(field);
  if (field.size() >= 2 && field.front() == '"' && field.back() == '"') {
    field = field.substr(1, field.size() - 2);
  }
  return text::trim(field);
}

}  // namespace

YearMonth YearMonth::from_ordinal(int ordinal) {
  int year = ordinal / 12;
  int month = ordinal % 12;
  if (month < 0) {
    month += 12;
    --year;
  }
  return YearMonth{year, month + 1};
}

std::string YearMonth::to_string() const {
  std::array<char, 16> buf{};
  std::snprintf(buf.data(), buf.size(), "%04d-%02d", year, month);
  return buf.data();
}

std::optional<YearMonth> YearMonth::parse_iso(std::string_view s) {
  s = text::trim(s);
  auto parts = text::split(s, '-');
  if (parts.size() != 2 && parts.size() != 3) return std::nullopt;
  if (parts[0].size() != 4 || !all_digits(parts[0])) return std::nullopt;
  if (parts[1].size() != 2 || !all_digits(parts[1])) return std::nullopt;
  const int year = static_cast<int>(*text::parse_long(parts[0]));
  const int month = static_cast<int>(*text::parse_long(parts[1]));
  if (month < 1 || month > 12) return std::nullopt;
  if (parts.size() == 3) {
    if (parts[2].size() != 2 || !all_digits(parts[2])) return std::nullopt;
    if (!valid_day(year, month, static_cast<int>(*text::parse_long(parts[2])))) return std::nullopt;
  }
  return YearMonth{year, month};
}

std::optional<YearMonth> YearMonth::parse_pattern(std::string_view s, std::string_view pattern) {
  s = text::trim(s);
  int year = -1;
  int month = -1;
  int day = 1;
  std::size_t si = 0;
  std::size_t pi = 0;
  auto take = [&](std::size_t width) -> std::optional<int> {
    if (si + width > s.size()) return std::nullopt;
    auto field = s.substr(si, width);
    if (!all_digits(field)) return std::nullopt;
    si += width;
    return static_cast<int>(*text::parse_long(field));
  };
  while (pi < pattern.size()) {
    auto rest = pattern.substr(pi);
    if (rest.starts_with("YYYY")) {
      auto v = take(4);
      if (!v) return std::nullopt;
      year = *v;
      pi += 4;
    } else if (rest.starts_with("MM")) {
      auto v = take(2);
      if (!v) return std::nullopt;
      month = *v;
      pi += 2;
    } else if (rest.starts_with("DD")) {
      auto v = take(2);
      if (!v) return std::nullopt;
      day = *v;
      pi += 2;
    } else {
      if (si >= s.size() || s[si] != pattern[pi]) return std::nullopt;
      ++si;
      ++pi;
    }
  }
  if (si != s.size() || year < 0 || month < 1 || month > 12 || !valid_day(year, month, day)) return std::nullopt;
  return YearMonth{year, month};
}

std::vector<YearMonth> CalendarRange::months() const {
  std::vector<YearMonth> out;
  for (int o = first.ordinal(); o <= last.ordinal(); ++o) out.push_back(YearMonth::from_ordinal(o));
  return out;
}

std::string to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::wrong_field_count: return "wrong_field_count";
    case RejectReason::bad_date: return "bad_date";
    case RejectReason::empty_district: return "empty_district";
    case RejectReason::missing_price: return "missing_price";
    case RejectReason::bad_price: return "bad_price";
    case RejectReason::nonpositive_price: return "nonpositive_price";
    case RejectReason::out_of_range: return "out_of_range";
  }
  return "unknown";
}

std::string canonical_district(std::string_view raw) { return text::lower(text::trim(raw)); }

ParseResult parse_transactions(std::istream& source, const ParseOptions& options) {
  if (!source) throw IoError("transaction stream is not readable");

  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(source, line)) {
    ++line_no;
    strip_cr(line);
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (!text::trim(line).empty()) {
      have_header = true;
      break;
    }
  }
  if (!have_header) throw FormatError("transaction CSV is empty: missing header row");

  std::map<std::string, std::size_t> column;
  const auto header = text::split(line, ',');
  for (std::size_t i = 0; i < header.size(); ++i) column.emplace(text::lower(unquote(header[i])), i);
  std::array<std::size_t, 3> idx{};
  const std::array<const char*, 3> required{"date", "district", "price"};
  for (std::size_t k = 0; k < required.size(); ++k) {
    auto it = column.find(required[k]);
    if (it == column.end()) {
      throw FormatError(std::string("transaction CSV header is missing column '") + required[k] + "'");
    }
    idx[k] = it->second;
  }

  ParseResult result;
  auto reject = [&](RejectReason why) { result.rejected.push_back({line_no, why}); };
  while (std::getline(source, line)) {
    ++line_no;
    strip_cr(line);
    if (text::trim(line).empty()) continue;
    ++result.data_rows;

    const auto fields = text::split(line, ',');
    if (fields.size() != header.size()) {
      reject(RejectReason::wrong_field_count);
      continue;
    }
    const auto date_field = unquote(fields[idx[0]]);
    auto date = YearMonth::parse_iso(date_field);
    if (!date && options.alternate_date_format) {
      date = YearMonth::parse_pattern(date_field, *options.alternate_date_format);
    }
    if (!date) {
      reject(RejectReason::bad_date);
      continue;
    }
    auto district = canonical_district(unquote(fields[idx[1]]));
    if (district.empty()) {
      reject(RejectReason::empty_district);
      continue;
    }
    const auto price_field = unquote(fields[idx[2]]);
    if (price_field.empty()) {
      reject(RejectReason::missing_price);
      continue;
    }
    const auto price = text::parse_double(price_field);
    if (!price || !std::isfinite(*price)) {
      reject(RejectReason::bad_price);
      continue;
    }
    if (*price <= 0.0) {
      reject(RejectReason::nonpositive_price);
      continue;
    }
    if (options.calendar && !options.calendar->contains(*date)) {
      reject(RejectReason::out_of_range);
      continue;
    }
    result.records.push_back({*date, std::move(district), *price});
  }
  if (source.bad()) throw IoError("read error in transaction stream at line " + std::to_string(line_no));
  return result;
}

void write_rejections(std::ostream& out, const std::vector<RejectedRow>& rejected) {
  out << "line,reason\n";
  for (const auto& r : rejected) out << r.line << ',' << to_string(r.reason) << '\n';
}

Index PriceMatrix::missing_cells() const { return values.array().isNaN().count(); }

std::optional<Index> PriceMatrix::district_index(std::string_view name) const {
  const auto key = canonical_district(name);
  auto it = std::find(districts.begin(), districts.end(), key);
  if (it == districts.end()) return std::nullopt;
  return static_cast<Index>(it - districts.begin());
}

PriceMatrix aggregate_monthly(const std::vector<TransactionRecord>& records,
                              const CalendarRange& calendar) {
  if (calendar.size() <= 0) throw DomainError("calendar range is empty");
  if (records.empty()) throw DomainError("no transaction records to aggregate");

  std::set<std::string> names;
  for (const auto& r : records) {
    if (calendar.contains(r.date)) names.insert(r.district);
  }
  if (names.empty()) throw DomainError("no transaction records fall inside the calendar range");

  PriceMatrix m;
  m.months = calendar.months();
  m.districts.assign(names.begin(), names.end());
  const Index rows = calendar.size();
  const Index cols = static_cast<Index>(m.districts.size());

  // Sum in sorted order per cell so the result does not depend on input order.
  std::vector<std::vector<double>> cell(static_cast<std::size_t>(rows * cols));
  for (const auto& r : records) {
    if (!calendar.contains(r.date)) continue;
    const Index row = r.date.ordinal() - calendar.first.ordinal();
    const Index col = *m.district_index(r.district);
    cell[static_cast<std::size_t>(row * cols + col)].push_back(r.price);
  }
  m.values = MatrixXd::Constant(rows, cols, kMissing);
  m.coverage = MatrixXi::Zero(rows, cols);
  for (Index row = 0; row < rows; ++row) {
    for (Index col = 0; col < cols; ++col) {
      auto& prices = cell[static_cast<std::size_t>(row * cols + col)];
      if (prices.empty()) continue;
      std::sort(prices.begin(), prices.end());
      double sum = 0.0;
      for (double p : prices) sum += p;
      m.values(row, col) = sum / static_cast<double>(prices.size());
      m.coverage(row, col) = static_cast<int>(prices.size());
    }
  }
  return m;
}

PriceMatrix fill_gaps(const PriceMatrix& matrix, GapPolicy policy) {
  if (policy == GapPolicy::drop_district) {
    std::vector<Index> keep;
    for (Index d = 0; d < matrix.num_districts(); ++d) {
      if (!matrix.values.col(d).array().isNaN().any()) keep.push_back(d);
    }
    if (keep.empty()) throw DomainError("every district has missing months; nothing left after dropping");
    PriceMatrix out;
    out.months = matrix.months;
    out.values.resize(matrix.num_months(), static_cast<Index>(keep.size()));
    out.coverage.resize(matrix.num_months(), static_cast<Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
      out.districts.push_back(matrix.districts[static_cast<std::size_t>(keep[k])]);
      out.values.col(static_cast<Index>(k)) = matrix.values.col(keep[k]);
      out.coverage.col(static_cast<Index>(k)) = matrix.coverage.col(keep[k]);
    }
    return out;
  }

  PriceMatrix out = matrix;
  const Index rows = matrix.num_months();
  for (Index d = 0; d < matrix.num_districts(); ++d) {
    auto col = out.values.col(d);
    std::vector<Index> observed;
    for (Index t = 0; t < rows; ++t) {
      if (!std::isnan(col(t))) observed.push_back(t);
    }
    if (observed.size() < 2) {
      throw DomainError("district '" + matrix.districts[static_cast<std::size_t>(d)] +
                        "' has fewer than two observed months; cannot fill gaps");
    }
    for (Index t = 0; t < observed.front(); ++t) col(t) = col(observed.front());
    for (Index t = observed.back() + 1; t < rows; ++t) col(t) = col(observed.back());
    for (std::size_t k = 0; k + 1 < observed.size(); ++k) {
      const Index a = observed[k];
      const Index b = observed[k + 1];
      for (Index t = a + 1; t < b; ++t) {
        const double w = static_cast<double>(t - a) / static_cast<double>(b - a);
        col(t) = (1.0 - w) * col(a) + w * col(b);
      }
    }
  }
  return out;
}

void write_matrix_csv(std::ostream& out, const PriceMatrix& matrix) {
  out << "month";
  for (const auto& d : matrix.districts) out << ',' << d;
  out << '\n';
  for (Index t = 0; t < matrix.num_months(); ++t) {
    out << matrix.months[static_cast<std::size_t>(t)].to_string();
    for (Index d = 0; d < matrix.num_districts(); ++d) {
      out << ',';
      if (!std::isnan(matrix.values(t, d))) out << text::format_double(matrix.values(t, d));
    }
    out << '\n';
  }
}

PriceMatrix read_matrix_csv(std::istream& in) {
  if (!in) throw IoError("matrix stream is not readable");
  std::string line;
  if (!std::getline(in, line)) throw FormatError("matrix CSV is empty");
  strip_cr(line);
  const auto header = text::split(line, ',');
  if (header.size() < 2 || text::lower(text::trim(header[0])) != "month") {
    throw FormatError("matrix CSV header must be 'month,<district>...'");
  }
  PriceMatrix m;
  for (std::size_t i = 1; i < header.size(); ++i) m.districts.push_back(canonical_district(header[i]));

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (text::trim(line).empty()) continue;
    const auto fields = text::split(line, ',');
    if (fields.size() != header.size()) {
      throw FormatError("matrix CSV line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields");
    }
    auto month = YearMonth::parse_iso(fields[0]);
    if (!month) throw FormatError("matrix CSV line " + std::to_string(line_no) + ": bad month label");
    if (!m.months.empty() && month->ordinal() != m.months.back().ordinal() + 1) {
      throw FormatError("matrix CSV line " + std::to_string(line_no) + ": months are not consecutive");
    }
    m.months.push_back(*month);
    std::vector<double> row;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      if (text::trim(fields[i]).empty()) {
        row.push_back(kMissing);
        continue;
      }
      auto v = text::parse_double(fields[i]);
      if (!v) throw FormatError("matrix CSV line " + std::to_string(line_no) + ": bad value");
      row.push_back(*v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("matrix CSV has no month rows");
  const Index r = static_cast<Index>(rows.size());
  const Index c = static_cast<Index>(m.districts.size());
  m.values.resize(r, c);
  m.coverage.resize(r, c);
  for (Index t = 0; t < r; ++t) {
    for (Index d = 0; d < c; ++d) {
      m.values(t, d) = rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(d)];
      m.coverage(t, d) = std::isnan(m.values(t, d)) ? 0 : 1;
    }
  }
  return m;
}

}  // namespace hpf::ingest
