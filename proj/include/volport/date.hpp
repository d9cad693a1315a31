#pragma once

#include <chrono>
#include <compare>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace volport {

/// Calendar day, ordered, printable as YYYY-MM-DD.
class Date {
public:
  constexpr Date() = default;
  constexpr explicit Date(std::chrono::year_month_day ymd) : ymd_(ymd) {}
  constexpr Date(int y, unsigned m, unsigned d)
      : ymd_(std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}) {}
  explicit Date(std::chrono::sys_days days) : ymd_(days) {}

  static std::optional<Date> parse(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    auto digits = [&](std::size_t pos, std::size_t len, int& out) {
      out = 0;
      for (std::size_t i = pos; i < pos + len; ++i) {
        if (text[i] < '0' || text[i] > '9') return false;
        out = out * 10 + (text[i] - '0');
      }
      return true;
    };
    int y = 0, m = 0, d = 0;
    if (!digits(0, 4, y) || !digits(5, 2, m) || !digits(8, 2, d)) return std::nullopt;
    Date out(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
    if (!out.ymd_.ok()) return std::nullopt;
    return out;
  }

  std::string str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd_.year()),
                  static_cast<unsigned>(ymd_.month()), static_cast<unsigned>(ymd_.day()));
    return buf;
  }

  std::chrono::sys_days days() const { return std::chrono::sys_days{ymd_}; }
  std::chrono::year_month_day ymd() const { return ymd_; }

  bool is_weekday() const {
    const std::chrono::weekday wd{days()};
    return wd != std::chrono::Saturday && wd != std::chrono::Sunday;
  }

  Date next_weekday() const {
    Date d(days() + std::chrono::days{1});
    while (!d.is_weekday()) d = Date(d.days() + std::chrono::days{1});
    return d;
  }

  friend bool operator==(const Date& a, const Date& b) { return a.days() == b.days(); }
  friend auto operator<=>(const Date& a, const Date& b) { return a.days() <=> b.days(); }

private:
  std::chrono::year_month_day ymd_{std::chrono::year{1970}, std::chrono::January,
                                   std::chrono::day{1}};
};

} // namespace volport
