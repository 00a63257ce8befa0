#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

namespace dtk {

// Minimal CSV layer for the pipeline's artifact files: UTF-8, comma
// separated, one header row, no quoting (none of our fields embed commas).

struct CsvRow {
    std::vector<std::string> fields;
    int line_number = 0;  // 1-based, header is line 1
};

class CsvReader {
public:
    // Opens the file and consumes the header. Throws InputError if the file
    // is missing or the header does not match `expected_header` (when given).
    CsvReader(const std::filesystem::path& path,
              const std::vector<std::string>& expected_header = {});

    const std::vector<std::string>& header() const { return header_; }
    const std::filesystem::path& path() const { return path_; }

    // Returns false at end of input. Skips fully empty lines.
    bool next(CsvRow& row);

    // Parse helpers (throw InputError with file/line context).
    double as_double(const CsvRow& row, size_t field) const;
    long long as_int(const CsvRow& row, size_t field) const;

    [[noreturn]] void fail(const CsvRow& row, const std::string& message) const;

private:
    std::filesystem::path path_;
    std::ifstream in_;
    std::vector<std::string> header_;
    int line_ = 0;
};

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
    void write_row(const std::vector<std::string>& fields);

private:
    std::ofstream out_;
    size_t n_fields_;
    std::filesystem::path path_;
};

// Shortest decimal text that round-trips the exact double value. Keeps
// artifact files byte-stable across runs.
std::string format_double(double value);

// Fixed two fractional digits; used for currency amounts at generation time.
std::string format_money(double value);

std::vector<std::string> split_csv_line(const std::string& line);

} // namespace dtk
