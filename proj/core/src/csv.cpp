#include "dtk/csv.hpp"

#include "dtk/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace dtk {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
        size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

CsvReader::CsvReader(const std::filesystem::path& path,
                     const std::vector<std::string>& expected_header)
    : path_(path), in_(path) {
    if (!in_)
        throw InputError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in_, line))
        throw InputError(path.string() + ": empty file, expected a header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    header_ = split_csv_line(line);
    line_ = 1;
    if (!expected_header.empty() && header_ != expected_header) {
        std::string want;
        for (size_t i = 0; i < expected_header.size(); ++i)
            want += (i ? "," : "") + expected_header[i];
        throw InputError(path.string() + ": unexpected header, want '" + want + "'");
    }
}

bool CsvReader::next(CsvRow& row) {
    std::string line;
    while (std::getline(in_, line)) {
        ++line_;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        row.fields = split_csv_line(line);
        row.line_number = line_;
        if (row.fields.size() != header_.size())
            fail(row, "expected " + std::to_string(header_.size()) + " fields, got " +
                          std::to_string(row.fields.size()));
        return true;
    }
    return false;
}

double CsvReader::as_double(const CsvRow& row, size_t field) const {
    const std::string& text = row.fields[field];
    double value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value))
        fail(row, "invalid number '" + text + "' in column " + header_[field]);
    return value;
}

long long CsvReader::as_int(const CsvRow& row, size_t field) const {
    const std::string& text = row.fields[field];
    long long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        fail(row, "invalid integer '" + text + "' in column " + header_[field]);
    return value;
}

void CsvReader::fail(const CsvRow& row, const std::string& message) const {
    throw InputError(path_.string() + ": " + message + " at line " +
                     std::to_string(row.line_number));
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path), n_fields_(header.size()), path_(path) {
    if (!out_)
        throw InputError("cannot write " + path.string());
    write_row(header);
}

void CsvWriter::write_row(const std::vector<std::string>& fields) {
    if (fields.size() != n_fields_)
        throw std::logic_error(path_.string() + ": row width mismatch");
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i) out_ << ',';
        out_ << fields[i];
    }
    out_ << '\n';
    if (!out_)
        throw InputError("write failed: " + path_.string());
}

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

std::string format_money(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", value);
    return buf;
}

} // namespace dtk
