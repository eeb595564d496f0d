#pragma once

#include <compare>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "mtqsar/errors.hpp"

namespace mtqsar {

// Calendar date stored as a day count from 1970-01-01 (proleptic Gregorian).
// Civil conversions follow Howard Hinnant's days_from_civil algorithm.
class Date {
 public:
  Date() = default;
  explicit Date(std::int64_t days_since_epoch) : days_(days_since_epoch) {}

  static Date from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = unsigned(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return Date(era * 146097 + std::int64_t(doe) - 719468);
  }

  struct Civil {
    int year;
    unsigned month;
    unsigned day;
  };

  Civil civil() const {
    std::int64_t z = days_ + 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = unsigned(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = std::int64_t(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return Civil{int(y + (m <= 2)), m, d};
  }

  std::int64_t days() const { return days_; }
  auto operator<=>(const Date&) const = default;

  // Strict ISO-8601 YYYY-MM-DD.
  static std::optional<Date> parse(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    int y = 0;
    unsigned m = 0, d = 0;
    for (int i : {0, 1, 2, 3}) {
      if (s[i] < '0' || s[i] > '9') return std::nullopt;
      y = y * 10 + (s[i] - '0');
    }
    for (int i : {5, 6}) {
      if (s[i] < '0' || s[i] > '9') return std::nullopt;
      m = m * 10 + unsigned(s[i] - '0');
    }
    for (int i : {8, 9}) {
      if (s[i] < '0' || s[i] > '9') return std::nullopt;
      d = d * 10 + unsigned(s[i] - '0');
    }
    if (m < 1 || m > 12 || d < 1 || d > days_in_month(y, m)) return std::nullopt;
    return from_civil(y, m, d);
  }

  std::string iso() const {
    const Civil c = civil();
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", c.year, c.month, c.day);
    return buf;
  }

 private:
  static unsigned days_in_month(int y, unsigned m) {
    static constexpr unsigned kDays[] = {31, 28, 31, 30, 31, 30,
                                         31, 31, 30, 31, 30, 31};
    if (m == 2 && (y % 4 == 0 && (y % 100 != 0 || y % 400 == 0))) return 29;
    return kDays[m - 1];
  }

  std::int64_t days_ = 0;
};

}  // namespace mtqsar
