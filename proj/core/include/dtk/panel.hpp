#pragma once

#include "dtk/records.hpp"

#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

namespace dtk {

inline constexpr int kHistoryMonths = 12;
inline constexpr int kPanelMonths = 13;  // 12 history months + target month

// 13 calendar months anchored at a target month: indices 0..11 are the
// trailing history, 12 is the target month. The as-of date is the first day
// of the target month; features may only read strictly before it.
struct ObservationWindow {
    YearMonth target{2017, 9};

    YearMonth start_month() const { return target.plus_months(-kHistoryMonths); }
    Date start_date() const { return start_month().first_day(); }
    Date as_of() const { return target.first_day(); }  // start of month 12
    Date end_date() const;                             // exclusive

    // Month index 0..12 for dates inside the window; out-of-range otherwise.
    int month_index(Date d) const { return YearMonth::of(d).months_since(start_month()); }
    bool contains(Date d) const;
};

enum class Metric { GMV, BI, PD };

const char* to_string(Metric metric);
Metric parse_metric(const std::string& text);
double metric_value(const MonthlyActivity& row, Metric metric);

// Zero-filled per-customer monthly aggregates: exactly 13 rows per customer,
// ordered by (customer_id, month_index).
class MonthlyPanel {
public:
    MonthlyPanel() = default;
    MonthlyPanel(std::vector<MonthlyActivity> rows, ObservationWindow window);

    const ObservationWindow& window() const { return window_; }
    const std::vector<MonthlyActivity>& rows() const { return rows_; }
    const std::vector<std::string>& customer_ids() const { return ids_; }
    size_t customer_count() const { return ids_.size(); }

    bool has_customer(const std::string& id) const { return offset_.count(id) > 0; }
    // The customer's 13 rows in month order.
    std::span<const MonthlyActivity> months(const std::string& id) const;
    std::span<const MonthlyActivity> months_at(size_t customer_index) const;

    // History (months 0..11) for one metric.
    std::vector<double> history(const std::string& id, Metric metric) const;

private:
    std::vector<MonthlyActivity> rows_;
    std::vector<std::string> ids_;
    std::unordered_map<std::string, size_t> offset_;
    ObservationWindow window_;
};

// One MonthlyActivity per (customer, month): gmv = sum of amounts, bi = sum
// of item counts, pd = distinct purchase days. Throws InputError if any
// transaction is dated outside the window.
MonthlyPanel build_monthly_panel(const std::vector<Transaction>& transactions,
                                 const ObservationWindow& window);

// FB iff at least `fb_min_active_months` of months 0..11 have pd >= 1.
// Country is taken from `countries` when present, "NA" otherwise.
std::vector<CustomerProfile> assign_segment(
    const MonthlyPanel& panel, int fb_min_active_months = 6,
    const std::unordered_map<std::string, std::string>& countries = {});

void write_panel(const std::filesystem::path& path, const MonthlyPanel& panel);
MonthlyPanel read_panel(const std::filesystem::path& path, const ObservationWindow& window);

} // namespace dtk
