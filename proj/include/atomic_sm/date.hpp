#pragma once

#include <chrono>
#include <compare>
#include <stdexcept>
#include <string>
#include <string_view>

namespace atomic_sm {

/// Calendar day, parsed from and printed as ISO-8601 `YYYY-MM-DD`.
class Date {
 public:
  Date() = default;
  explicit Date(std::chrono::sys_days days) : days_(days) {}
  Date(int year, unsigned month, unsigned day);

  /// Throws std::invalid_argument on malformed or impossible dates.
  static Date parse(std::string_view text);

  std::string to_string() const;
  std::chrono::sys_days sys_days() const { return days_; }
  std::chrono::year_month_day ymd() const { return std::chrono::year_month_day{days_}; }
  int year() const { return static_cast<int>(ymd().year()); }
  bool is_weekend() const;

  Date plus_days(int n) const { return Date{days_ + std::chrono::days{n}}; }
  /// Calendar days from `other` to this date.
  int days_since(const Date& other) const { return static_cast<int>((days_ - other.days_).count()); }

  auto operator<=>(const Date&) const = default;

 private:
  std::chrono::sys_days days_{};
};

}  // namespace atomic_sm
