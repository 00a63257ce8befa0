#include "dtk/panel.hpp"

#include "dtk/csv.hpp"
#include "dtk/errors.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace dtk {

Date ObservationWindow::end_date() const {
    return target.plus_months(1).first_day();
}

bool ObservationWindow::contains(Date d) const {
    return d >= start_date() && d < end_date();
}

const char* to_string(Metric metric) {
    switch (metric) {
        case Metric::GMV: return "gmv";
        case Metric::BI: return "bi";
        case Metric::PD: return "pd";
    }
    return "gmv";
}

Metric parse_metric(const std::string& text) {
    if (text == "gmv") return Metric::GMV;
    if (text == "bi") return Metric::BI;
    if (text == "pd") return Metric::PD;
    throw InputError("unknown metric '" + text + "', expected gmv|bi|pd");
}

double metric_value(const MonthlyActivity& row, Metric metric) {
    switch (metric) {
        case Metric::GMV: return row.gmv;
        case Metric::BI: return row.bi;
        case Metric::PD: return row.pd;
    }
    return row.gmv;
}

MonthlyPanel::MonthlyPanel(std::vector<MonthlyActivity> rows, ObservationWindow window)
    : rows_(std::move(rows)), window_(window) {
    std::stable_sort(rows_.begin(), rows_.end(),
                     [](const MonthlyActivity& a, const MonthlyActivity& b) {
                         if (a.customer_id != b.customer_id) return a.customer_id < b.customer_id;
                         return a.month_index < b.month_index;
                     });
    for (size_t i = 0; i < rows_.size(); i += kPanelMonths) {
        const std::string& id = rows_[i].customer_id;
        for (int m = 0; m < kPanelMonths; ++m) {
            if (i + m >= rows_.size() || rows_[i + m].customer_id != id ||
                rows_[i + m].month_index != m)
                throw InputError("panel is not total: customer " + id +
                                 " lacks month " + std::to_string(m));
        }
        offset_.emplace(id, i);
        ids_.push_back(id);
    }
}

std::span<const MonthlyActivity> MonthlyPanel::months(const std::string& id) const {
    auto it = offset_.find(id);
    if (it == offset_.end())
        throw InputError("customer " + id + " not in panel");
    return {rows_.data() + it->second, kPanelMonths};
}

std::span<const MonthlyActivity> MonthlyPanel::months_at(size_t customer_index) const {
    return {rows_.data() + customer_index * kPanelMonths, kPanelMonths};
}

std::vector<double> MonthlyPanel::history(const std::string& id, Metric metric) const {
    auto span = months(id);
    std::vector<double> values(kHistoryMonths);
    for (int m = 0; m < kHistoryMonths; ++m)
        values[m] = metric_value(span[m], metric);
    return values;
}

MonthlyPanel build_monthly_panel(const std::vector<Transaction>& transactions,
                                 const ObservationWindow& window) {
    struct Cell {
        double gmv = 0;
        int bi = 0;
        std::set<Date> days;
    };
    // Ordered map keeps output sorted by customer_id without a second pass.
    std::map<std::string, std::array<Cell, kPanelMonths>> cells;
    for (const auto& t : transactions) {
        if (!window.contains(t.date))
            throw InputError("transaction for " + t.customer_id + " on " +
                             t.date.to_string() + " is outside the observation window " +
                             window.start_date().to_string() + ".." +
                             window.end_date().to_string());
        auto& months = cells[t.customer_id];
        Cell& cell = months[window.month_index(t.date)];
        cell.gmv += t.amount;
        cell.bi += t.item_count;
        cell.days.insert(t.date);
    }
    std::vector<MonthlyActivity> rows;
    rows.reserve(cells.size() * kPanelMonths);
    for (auto& [id, months] : cells) {
        for (int m = 0; m < kPanelMonths; ++m) {
            MonthlyActivity row;
            row.customer_id = id;
            row.month_index = m;
            row.gmv = months[m].gmv;
            row.bi = months[m].bi;
            row.pd = static_cast<int>(months[m].days.size());
            rows.push_back(std::move(row));
        }
    }
    return MonthlyPanel(std::move(rows), window);
}

std::vector<CustomerProfile> assign_segment(
    const MonthlyPanel& panel, int fb_min_active_months,
    const std::unordered_map<std::string, std::string>& countries) {
    std::vector<CustomerProfile> profiles;
    profiles.reserve(panel.customer_count());
    for (size_t i = 0; i < panel.customer_count(); ++i) {
        auto months = panel.months_at(i);
        int active = 0;
        for (int m = 0; m < kHistoryMonths; ++m)
            if (months[m].pd >= 1) ++active;
        CustomerProfile p;
        p.customer_id = months[0].customer_id;
        p.segment = active >= fb_min_active_months ? Segment::FB : Segment::IB;
        auto it = countries.find(p.customer_id);
        p.country = it != countries.end() ? it->second : "NA";
        profiles.push_back(std::move(p));
    }
    return profiles;
}

void write_panel(const std::filesystem::path& path, const MonthlyPanel& panel) {
    CsvWriter out(path, {"customer_id", "month_index", "gmv", "bi", "pd"});
    for (const auto& row : panel.rows())
        out.write_row({row.customer_id, std::to_string(row.month_index), format_double(row.gmv),
                       std::to_string(row.bi), std::to_string(row.pd)});
}

MonthlyPanel read_panel(const std::filesystem::path& path, const ObservationWindow& window) {
    CsvReader reader(path, {"customer_id", "month_index", "gmv", "bi", "pd"});
    std::vector<MonthlyActivity> rows;
    CsvRow row;
    while (reader.next(row)) {
        MonthlyActivity r;
        r.customer_id = row.fields[0];
        r.month_index = static_cast<int>(reader.as_int(row, 1));
        if (r.month_index < 0 || r.month_index >= kPanelMonths)
            reader.fail(row, "month_index out of range 0..12");
        r.gmv = reader.as_double(row, 2);
        r.bi = static_cast<int>(reader.as_int(row, 3));
        r.pd = static_cast<int>(reader.as_int(row, 4));
        if (r.gmv < 0 || r.bi < 0 || r.pd < 0 || r.pd > 31)
            reader.fail(row, "activity values out of range");
        if ((r.bi == 0) != (r.pd == 0))
            reader.fail(row, "bi and pd must be zero together");
        rows.push_back(std::move(r));
    }
    return MonthlyPanel(std::move(rows), window);
}

} // namespace dtk
