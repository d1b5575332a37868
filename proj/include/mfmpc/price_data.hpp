#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mfmpc {

constexpr int kHoursPerWeek = 168;

/// Hours since 1970-01-01T00:00:00 of an ISO-8601 timestamp
/// "YYYY-MM-DDTHH:MM:SS" (a space instead of 'T' and a trailing 'Z' are
/// accepted). Throws DataError on malformed input or non-hourly instants.
[[nodiscard]] std::int64_t parse_timestamp(std::string_view text);
[[nodiscard]] std::string format_timestamp(std::int64_t hour);

/// Hour of the week with Monday 00:00 as 0.
[[nodiscard]] int hour_of_week(std::int64_t hour);

/// Consecutive hourly prices.
struct PriceSeries {
  std::vector<std::int64_t> hours;  // hours since the epoch, spacing exactly 1
  std::vector<double> prices;       // $/MWh
  std::vector<int> hour_of_week;

  [[nodiscard]] std::size_t size() const { return prices.size(); }
  [[nodiscard]] bool empty() const { return prices.empty(); }

  /// Series starting at `first_hour` with the given prices.
  [[nodiscard]] static PriceSeries hourly(std::int64_t first_hour, std::vector<double> prices);
  /// Throws DataError on gaps, non-positive prices or inconsistent fields.
  void validate() const;
};

/// Reads a `timestamp,price` CSV. Rows must be consecutive hours; a gap is
/// reported with the first missing timestamp. Errors name the line number.
[[nodiscard]] PriceSeries load_prices(std::istream& in);
[[nodiscard]] PriceSeries load_prices(const std::filesystem::path& path);
void write_prices(std::ostream& out, const PriceSeries& series);

/// Empirical quantile with linear interpolation between order statistics
/// at position (percentile / 100) (n - 1).
[[nodiscard]] double quantile(std::span<const double> values, double percentile);

/// Prices below the `percentile` quantile raised to it.
[[nodiscard]] PriceSeries winsorize_low(const PriceSeries& series, double percentile);

/// z = log(log(p)); requires p > 1.
[[nodiscard]] double loglog(double price);
[[nodiscard]] std::vector<double> loglog(std::span<const double> prices);
[[nodiscard]] double expexp(double z);
[[nodiscard]] std::vector<double> expexp(std::span<const double> values);

/// Contiguous train/test windows: the first `train_len` hours and the
/// `test_len` hours right after them.
[[nodiscard]] std::pair<PriceSeries, PriceSeries> split(const PriceSeries& series, std::size_t train_len,
                                                        std::size_t test_len);

/// Hours [first, first + count) of a series.
[[nodiscard]] PriceSeries slice(const PriceSeries& series, std::size_t first, std::size_t count);

}  // namespace mfmpc
