#include "dtk/records.hpp"

#include "dtk/csv.hpp"
#include "dtk/errors.hpp"

#include <algorithm>

namespace dtk {

const char* to_string(BceType type) {
    switch (type) {
        case BceType::item_not_received: return "item_not_received";
        case BceType::not_as_described: return "not_as_described";
        case BceType::late_delivery: return "late_delivery";
        case BceType::other: return "other";
    }
    return "other";
}

BceType parse_bce_type(const std::string& text) {
    if (text == "item_not_received") return BceType::item_not_received;
    if (text == "not_as_described") return BceType::not_as_described;
    if (text == "late_delivery") return BceType::late_delivery;
    if (text == "other") return BceType::other;
    throw InputError("unknown bce_type '" + text + "'");
}

const char* to_string(Segment segment) {
    return segment == Segment::FB ? "FB" : "IB";
}

Segment parse_segment(const std::string& text) {
    if (text == "FB") return Segment::FB;
    if (text == "IB") return Segment::IB;
    throw InputError("unknown segment '" + text + "'");
}

std::vector<Transaction> read_transactions(const std::filesystem::path& path) {
    CsvReader reader(path, {"customer_id", "date", "amount", "item_count"});
    std::vector<Transaction> rows;
    CsvRow row;
    while (reader.next(row)) {
        Transaction t;
        t.customer_id = row.fields[0];
        try {
            t.date = Date::parse(row.fields[1]);
        } catch (const InputError& e) {
            reader.fail(row, e.what());
        }
        t.amount = reader.as_double(row, 2);
        if (t.amount < 0)
            reader.fail(row, "negative amount");
        long long items = reader.as_int(row, 3);
        if (items < 1)
            reader.fail(row, "item_count must be >= 1");
        t.item_count = static_cast<int>(items);
        rows.push_back(std::move(t));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Transaction& a, const Transaction& b) {
        if (a.customer_id != b.customer_id) return a.customer_id < b.customer_id;
        return a.date < b.date;
    });
    return rows;
}

std::vector<BceEvent> read_bce_events(const std::filesystem::path& path) {
    CsvReader reader(path, {"customer_id", "date", "bce_type", "reported"});
    std::vector<BceEvent> rows;
    CsvRow row;
    while (reader.next(row)) {
        BceEvent e;
        e.customer_id = row.fields[0];
        try {
            e.date = Date::parse(row.fields[1]);
            e.bce_type = parse_bce_type(row.fields[2]);
        } catch (const InputError& ex) {
            reader.fail(row, ex.what());
        }
        long long reported = reader.as_int(row, 3);
        if (reported != 0 && reported != 1)
            reader.fail(row, "reported must be 0 or 1");
        e.reported = reported == 1;
        rows.push_back(std::move(e));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const BceEvent& a, const BceEvent& b) {
        if (a.customer_id != b.customer_id) return a.customer_id < b.customer_id;
        return a.date < b.date;
    });
    return rows;
}

std::vector<CustomerProfile> read_profiles(const std::filesystem::path& path) {
    CsvReader reader(path, {"customer_id", "segment", "country"});
    std::vector<CustomerProfile> rows;
    CsvRow row;
    while (reader.next(row)) {
        CustomerProfile p;
        p.customer_id = row.fields[0];
        try {
            p.segment = parse_segment(row.fields[1]);
        } catch (const InputError& ex) {
            reader.fail(row, ex.what());
        }
        p.country = row.fields[2];
        rows.push_back(std::move(p));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const CustomerProfile& a, const CustomerProfile& b) {
                         return a.customer_id < b.customer_id;
                     });
    return rows;
}

Dataset load_dataset(const DatasetPaths& paths) {
    Dataset ds;
    ds.transactions = read_transactions(paths.transactions);
    ds.bce_events = read_bce_events(paths.bce);
    if (!paths.profiles.empty())
        ds.profiles = read_profiles(paths.profiles);
    return ds;
}

void write_transactions(const std::filesystem::path& path, const std::vector<Transaction>& rows) {
    CsvWriter out(path, {"customer_id", "date", "amount", "item_count"});
    for (const auto& t : rows)
        out.write_row({t.customer_id, t.date.to_string(), format_money(t.amount),
                       std::to_string(t.item_count)});
}

void write_bce_events(const std::filesystem::path& path, const std::vector<BceEvent>& rows) {
    CsvWriter out(path, {"customer_id", "date", "bce_type", "reported"});
    for (const auto& e : rows)
        out.write_row({e.customer_id, e.date.to_string(), to_string(e.bce_type),
                       e.reported ? "1" : "0"});
}

void write_profiles(const std::filesystem::path& path, const std::vector<CustomerProfile>& rows) {
    CsvWriter out(path, {"customer_id", "segment", "country"});
    for (const auto& p : rows)
        out.write_row({p.customer_id, to_string(p.segment), p.country});
}

} // namespace dtk
