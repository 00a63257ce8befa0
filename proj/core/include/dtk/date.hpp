#pragma once

#include <compare>
#include <string>
#include <string_view>

namespace dtk {

// Calendar date as days since 1970-01-01 (proleptic Gregorian).
class Date {
public:
    Date() = default;
    static Date from_ymd(int year, int month, int day);
    static Date from_days(int days) { return Date(days); }

    // Strict ISO-8601 YYYY-MM-DD. Throws InputError on anything else.
    static Date parse(std::string_view text);

    int days_since_epoch() const { return days_; }
    int year() const;
    int month() const;  // 1..12
    int day() const;    // 1..31

    std::string to_string() const;  // YYYY-MM-DD

    Date plus_days(int n) const { return Date(days_ + n); }
    friend int operator-(Date a, Date b) { return a.days_ - b.days_; }
    auto operator<=>(const Date&) const = default;

private:
    explicit Date(int days) : days_(days) {}
    int days_ = 0;
};

int days_in_month(int year, int month);

// Year-month arithmetic used by the 13-month observation window.
struct YearMonth {
    int year = 1970;
    int month = 1;  // 1..12

    static YearMonth of(Date d) { return {d.year(), d.month()}; }
    Date first_day() const { return Date::from_ymd(year, month, 1); }
    YearMonth plus_months(int n) const;
    // Signed number of calendar months from other to *this.
    int months_since(YearMonth other) const;
    auto operator<=>(const YearMonth&) const = default;
};

} // namespace dtk
