#pragma once

#include "dtk/date.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dtk {

struct Transaction {
    std::string customer_id;
    Date date;
    double amount = 0;   // >= 0
    int item_count = 1;  // >= 1
};

enum class BceType { item_not_received, not_as_described, late_delivery, other };

const char* to_string(BceType type);
BceType parse_bce_type(const std::string& text);  // throws InputError naming the value

struct BceEvent {
    std::string customer_id;
    Date date;
    BceType bce_type = BceType::other;
    bool reported = false;
};

enum class Segment { FB, IB };

const char* to_string(Segment segment);
Segment parse_segment(const std::string& text);

struct CustomerProfile {
    std::string customer_id;
    Segment segment = Segment::IB;
    std::string country;
};

struct MonthlyActivity {
    std::string customer_id;
    int month_index = 0;  // 0..11 trailing history, 12 target month
    double gmv = 0;
    int bi = 0;
    int pd = 0;
};

struct Dataset {
    std::vector<Transaction> transactions;
    std::vector<BceEvent> bce_events;
    std::vector<CustomerProfile> profiles;
};

struct DatasetPaths {
    std::filesystem::path transactions;
    std::filesystem::path bce;
    std::filesystem::path profiles;  // may be empty() when not yet built
};

// Loads and validates the raw CSV files; records come back sorted by
// (customer_id, date). Row counts are returned through the Dataset sizes.
Dataset load_dataset(const DatasetPaths& paths);

std::vector<Transaction> read_transactions(const std::filesystem::path& path);
std::vector<BceEvent> read_bce_events(const std::filesystem::path& path);
std::vector<CustomerProfile> read_profiles(const std::filesystem::path& path);

void write_transactions(const std::filesystem::path& path, const std::vector<Transaction>& rows);
void write_bce_events(const std::filesystem::path& path, const std::vector<BceEvent>& rows);
void write_profiles(const std::filesystem::path& path, const std::vector<CustomerProfile>& rows);

} // namespace dtk
