#include "dtk/pipeline.hpp"

#include "dtk/csv.hpp"
#include "dtk/errors.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace dtk {

// The report is assembled from artifact files only, so `dtk report` on a
// finished run directory reproduces the pipeline's report byte for byte.

namespace {

using nlohmann::json;

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

Table read_csv_table(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw InputError("report: missing artifact " + path.string());
    CsvReader reader(path);
    Table table;
    table.header = reader.header();
    CsvRow row;
    while (reader.next(row)) table.rows.push_back(row.fields);
    return table;
}

std::size_t count_csv_rows(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw InputError("report: missing artifact " + path.string());
    std::ifstream in(path);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    return rows == 0 ? 0 : rows - 1;  // minus header
}

void markdown_table(std::ostringstream& out, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows) {
    out << "|";
    for (const auto& cell : header) out << " " << cell << " |";
    out << "\n|";
    for (std::size_t i = 0; i < header.size(); ++i) out << " --- |";
    out << "\n";
    for (const auto& row : rows) {
        out << "|";
        for (const auto& cell : row) out << " " << (cell.empty() ? "-" : cell) << " |";
        out << "\n";
    }
}

std::string titled(const std::string& raw) {
    if (raw == "gmv") return "GMV";
    if (raw == "bi") return "BI";
    if (raw == "pd") return "PD";
    return raw;
}

void section_overview(std::ostringstream& out, const RunPaths& paths) {
    out << "## 1. Run Overview\n\n";
    if (std::filesystem::exists(paths.config_used())) {
        std::ifstream in(paths.config_used());
        json config;
        in >> config;
        out << "- master seed: " << config.value("seed", 0ULL) << "\n";
        if (config.contains("generator")) {
            const json& generator = config.at("generator");
            out << "- target month: " << generator.value("target", std::string("?")) << "\n";
        }
    } else {
        out << "- config_used.json not present; run parameters not recorded\n";
    }
    out << "- customers: " << count_csv_rows(paths.customers()) << "\n";

    std::size_t sufferers = 0, silent = 0, reporters = 0, drifters = 0, rows = 0;
    {
        CsvReader reader(paths.ground_truth(), {"customer_id", "is_sufferer", "is_reporter",
                                                "suffer_month", "is_drifter"});
        CsvRow row;
        while (reader.next(row)) {
            ++rows;
            const bool is_sufferer = row.fields[1] == "1";
            const bool is_reporter = row.fields[2] == "1";
            if (is_sufferer) ++sufferers;
            if (is_sufferer && !is_reporter) ++silent;
            if (is_reporter) ++reporters;
            if (row.fields[4] == "1") ++drifters;
        }
    }
    out << "- planted sufferers: " << sufferers << " (" << reporters << " reporters, " << silent
        << " silent)\n";
    out << "- organic drifters: " << drifters << "\n";
    out << "- scored customers: " << count_csv_rows(paths.scores()) << "\n\n";
}

void section_event_rates(std::ostringstream& out, const RunPaths& paths) {
    out << "## 2. Event Rates\n\n";
    std::vector<std::vector<std::string>> rows;
    for (Metric m : {Metric::GMV, Metric::BI, Metric::PD}) {
        const Table table = read_csv_table(paths.event_rates(m));
        for (const auto& row : table.rows)
            rows.push_back({titled(row[0]), row[1], row[2], row[3], row[4], row[5]});
    }
    markdown_table(out, {"Metric", "Segment", "Alpha", "Customers", "Positives", "Event rate"},
                   rows);
    out << "\n";
}

void section_model_performance(std::ostringstream& out, const RunPaths& paths) {
    out << "## 3. Model Performance\n\n";
    std::vector<std::vector<std::string>> rows;
    for (Metric m : {Metric::GMV, Metric::BI, Metric::PD}) {
        const Table table = read_csv_table(paths.metrics(m));
        for (const auto& row : table.rows)
            rows.push_back({titled(row[0]), row[1], row[2], row[3], row[4], row[5], row[6],
                            row[7], row[8]});
    }
    markdown_table(out,
                   {"Metric", "Train rows", "Holdout rows", "AUC", "Max F1", "F1 threshold",
                    "Min per-class accuracy", "Threshold", "Log loss"},
                   rows);
    out << "\n";
}

void section_importance(std::ostringstream& out, const RunPaths& paths) {
    out << "## 4. Variable Importance\n\n";
    for (Metric m : {Metric::GMV, Metric::BI, Metric::PD}) {
        if (!std::filesystem::exists(paths.model(m)))
            throw InputError("report: missing artifact " + paths.model(m).string());
        const gbdt::Model model = gbdt::load_model(paths.model(m));
        out << "### " << titled(to_string(m)) << " model\n\n";
        std::vector<std::vector<std::string>> rows;
        int rank = 1;
        for (const auto& [name, gain] : gbdt::variable_importance(model))
            rows.push_back({std::to_string(rank++), name, format_double(gain)});
        markdown_table(out, {"Rank", "Feature", "Relative importance"}, rows);
        out << "\n";
    }
}

void section_causal(std::ostringstream& out, const RunPaths& paths) {
    out << "## 5. Causal Analysis\n\n";
    if (!std::filesystem::exists(paths.golden_set()))
        throw InputError("report: missing artifact " + paths.golden_set().string());
    {
        std::ifstream in(paths.golden_set());
        json golden;
        in >> golden;
        out << "- golden set: " << golden.value("n_members", 0ULL) << " customers ("
            << golden.value("rule", std::string("?")) << ")\n\n";
    }
    const Table table = read_csv_table(paths.causal_report());
    std::vector<std::vector<std::string>> rows;
    for (const auto& row : table.rows)
        rows.push_back({row[0], row[1], row[2], row[3], row[4], row[5] == "1" ? "pass" : "fail",
                        row[6]});
    markdown_table(out,
                   {"Segment", "Direction", "Coefficient", "Distance correlation", "p-value",
                    "Independence", "Verdict"},
                   rows);
    out << "\n";
}

void section_spyem(std::ostringstream& out, const RunPaths& paths) {
    out << "## 6. Silent Sufferer Recovery\n\n";
    std::size_t golden = 0, silent = 0, normal = 0;
    {
        CsvReader reader(paths.labeled_population(), {"customer_id", "status", "score"});
        CsvRow row;
        while (reader.next(row)) {
            if (row.fields[1] == "golden")
                ++golden;
            else if (row.fields[1] == "silent_sufferer")
                ++silent;
            else
                ++normal;
        }
    }
    out << "- golden: " << golden << ", silent sufferers: " << silent << ", normal: " << normal
        << "\n\n";
    const Table trace = read_csv_table(paths.spyem_trace());
    markdown_table(out, {"Iteration", "Label change rate", "Holdout recall", "Cutoff"},
                   trace.rows);
    out << "\n";
}

void section_abtest(std::ostringstream& out, const RunPaths& paths) {
    out << "## 7. Campaign Readout\n\n";
    const Table table = read_csv_table(paths.abtest_report());
    std::vector<std::vector<std::string>> counts;
    std::vector<std::vector<std::string>> stats;
    for (const auto& row : table.rows) {
        if (row[0] == "n_test" || row[0] == "n_control" || row[0] == "n_total")
            counts.push_back(row);
        else
            stats.push_back({row[0], row[3]});
    }
    markdown_table(out, {"Group", "Golden", "Silent sufferer", "Total"}, counts);
    out << "\n";
    markdown_table(out, {"Statistic", "Value"}, stats);
    out << "\n";
}

} // namespace

std::string render_report(const RunPaths& paths) {
    std::ostringstream out;
    out << "# Downtrend Detection Run Report\n\n";
    section_overview(out, paths);
    section_event_rates(out, paths);
    section_model_performance(out, paths);
    section_importance(out, paths);
    section_causal(out, paths);
    section_spyem(out, paths);
    section_abtest(out, paths);
    return out.str();
}

} // namespace dtk
