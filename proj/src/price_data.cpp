#include "mfmpc/price_data.hpp"

#include "mfmpc/error.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

namespace mfmpc {

namespace {

int parse_field(std::string_view text, std::size_t pos, std::size_t len, std::string_view whole) {
  int value = 0;
  const char* first = text.data() + pos;
  const auto [ptr, ec] = std::from_chars(first, first + len, value);
  if (ec != std::errc{} || ptr != first + len) {
    throw DataError("malformed timestamp '" + std::string(whole) + "'");
  }
  return value;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) { return a / b - ((a % b != 0) && ((a < 0) != (b < 0))); }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::int64_t parse_timestamp(std::string_view text) {
  std::string_view s = trim(text);
  if (!s.empty() && s.back() == 'Z') s.remove_suffix(1);
  // YYYY-MM-DDTHH:MM:SS, seconds optional
  if ((s.size() != 19 && s.size() != 16) || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') ||
      s[13] != ':' || (s.size() == 19 && s[16] != ':')) {
    throw DataError("malformed timestamp '" + std::string(text) + "'");
  }
  using namespace std::chrono;
  const year_month_day ymd{year{parse_field(s, 0, 4, text)}, month{static_cast<unsigned>(parse_field(s, 5, 2, text))},
                           day{static_cast<unsigned>(parse_field(s, 8, 2, text))}};
  const int h = parse_field(s, 11, 2, text);
  const int minute = parse_field(s, 14, 2, text);
  const int second = s.size() == 19 ? parse_field(s, 17, 2, text) : 0;
  if (!ymd.ok() || h > 23) throw DataError("invalid date or hour in timestamp '" + std::string(text) + "'");
  if (minute != 0 || second != 0) throw DataError("timestamp '" + std::string(text) + "' is not on the hour");
  return static_cast<std::int64_t>(sys_days{ymd}.time_since_epoch().count()) * 24 + h;
}

std::string format_timestamp(std::int64_t hour) {
  using namespace std::chrono;
  const std::int64_t days = floor_div(hour, 24);
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:00:00", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hour - days * 24));
  return buf;
}

int hour_of_week(std::int64_t hour) {
  // 1970-01-01 was a Thursday, three days after a Monday.
  const std::int64_t shifted = hour + 3 * 24;
  return static_cast<int>(shifted - floor_div(shifted, kHoursPerWeek) * kHoursPerWeek);
}

PriceSeries PriceSeries::hourly(std::int64_t first_hour, std::vector<double> prices) {
  PriceSeries s;
  s.prices = std::move(prices);
  s.hours.resize(s.prices.size());
  s.hour_of_week.resize(s.prices.size());
  for (std::size_t i = 0; i < s.prices.size(); ++i) {
    s.hours[i] = first_hour + static_cast<std::int64_t>(i);
    s.hour_of_week[i] = mfmpc::hour_of_week(s.hours[i]);
  }
  return s;
}

void PriceSeries::validate() const {
  if (hours.size() != prices.size() || hour_of_week.size() != prices.size()) {
    throw DataError("price series fields have different lengths");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (!std::isfinite(prices[i]) || prices[i] <= 0.0) {
      throw DataError("non-positive price at " + format_timestamp(hours[i]));
    }
    if (i > 0 && hours[i] != hours[i - 1] + 1) {
      throw DataError("missing hour " + format_timestamp(hours[i - 1] + 1));
    }
    if (hour_of_week[i] != mfmpc::hour_of_week(hours[i])) throw DataError("inconsistent hour of week");
  }
}

PriceSeries load_prices(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::string_view header;
  while (std::getline(in, line)) {
    ++line_no;
    header = trim(line);
    if (!header.empty()) break;
  }
  if (header != "timestamp,price") throw DataError("expected CSV header 'timestamp,price'");

  PriceSeries s;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = trim(line);
    if (row.empty()) continue;
    const auto where = [&] { return "line " + std::to_string(line_no) + ": "; };
    const std::size_t comma = row.find(',');
    if (comma == std::string_view::npos || row.find(',', comma + 1) != std::string_view::npos) {
      throw DataError(where() + "expected two fields");
    }
    std::int64_t hour = 0;
    try {
      hour = parse_timestamp(row.substr(0, comma));
    } catch (const DataError& e) {
      throw DataError(where() + e.what());
    }
    const std::string_view field = trim(row.substr(comma + 1));
    double price = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), price);
    if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(price)) {
      throw DataError(where() + "malformed price '" + std::string(field) + "'");
    }
    if (price <= 0.0) throw DataError(where() + "non-positive price " + std::string(field));
    if (!s.hours.empty()) {
      const std::int64_t expected = s.hours.back() + 1;
      if (hour < expected) throw DataError(where() + "timestamps are not increasing");
      if (hour > expected) throw DataError(where() + "missing hour " + format_timestamp(expected));
    }
    s.hours.push_back(hour);
    s.prices.push_back(price);
    s.hour_of_week.push_back(hour_of_week(hour));
  }
  return s;
}

PriceSeries load_prices(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open price file " + path.string());
  return load_prices(in);
}

void write_prices(std::ostream& out, const PriceSeries& series) {
  out << "timestamp,price\n";
  char buf[64];
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, series.prices[i]);
    out << format_timestamp(series.hours[i]) << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf))
        << '\n';
  }
}

double quantile(std::span<const double> values, double percentile) {
  if (values.empty()) throw DataError("quantile of an empty series");
  if (!(percentile >= 0.0 && percentile <= 100.0)) throw std::invalid_argument("percentile must lie in [0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = percentile / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return frac == 0.0 ? sorted[lo] : sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

PriceSeries winsorize_low(const PriceSeries& series, double percentile) {
  if (series.empty()) throw DataError("cannot winsorize an empty series");
  if (!(percentile > 0.0 && percentile < 100.0)) throw std::invalid_argument("percentile must lie in (0, 100)");
  const double level = quantile(series.prices, percentile);
  PriceSeries out = series;
  for (double& p : out.prices) p = std::max(p, level);
  return out;
}

double loglog(double price) {
  if (!(price > 1.0)) throw DataError("log log undefined for price " + std::to_string(price) + " <= 1");
  return std::log(std::log(price));
}

std::vector<double> loglog(std::span<const double> prices) {
  std::vector<double> z(prices.size());
  std::transform(prices.begin(), prices.end(), z.begin(), [](double p) { return loglog(p); });
  return z;
}

double expexp(double z) { return std::exp(std::exp(z)); }

std::vector<double> expexp(std::span<const double> values) {
  std::vector<double> p(values.size());
  std::transform(values.begin(), values.end(), p.begin(), [](double z) { return expexp(z); });
  return p;
}

PriceSeries slice(const PriceSeries& series, std::size_t first, std::size_t count) {
  if (first + count > series.size()) throw DataError("slice extends past the end of the series");
  PriceSeries out;
  const auto b = static_cast<std::ptrdiff_t>(first);
  const auto e = static_cast<std::ptrdiff_t>(first + count);
  out.hours.assign(series.hours.begin() + b, series.hours.begin() + e);
  out.prices.assign(series.prices.begin() + b, series.prices.begin() + e);
  out.hour_of_week.assign(series.hour_of_week.begin() + b, series.hour_of_week.begin() + e);
  return out;
}

std::pair<PriceSeries, PriceSeries> split(const PriceSeries& series, std::size_t train_len, std::size_t test_len) {
  if (train_len + test_len > series.size()) {
    throw DataError("need " + std::to_string(train_len + test_len) + " hours for the train/test split, have " +
                    std::to_string(series.size()));
  }
  return {slice(series, 0, train_len), slice(series, train_len, test_len)};
}

}  // namespace mfmpc
