#include "dtk/ab_test.hpp"

#include "dtk/csv.hpp"
#include "dtk/errors.hpp"
#include "dtk/rng.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dtk {

const char* to_string(AbGroup group) { return group == AbGroup::Test ? "test" : "control"; }

double AbConfig::fraction_for(PopulationStatus status) const {
    auto it = stratum_fractions.find(to_string(status));
    return it != stratum_fractions.end() ? it->second : test_fraction;
}

void AbConfig::validate() const {
    auto check = [](double f, const std::string& what) {
        if (!(f > 0 && f < 1))
            throw InputError("abtest: " + what + " must be in (0,1)");
    };
    check(test_fraction, "test_fraction");
    for (const auto& [name, f] : stratum_fractions) {
        if (name != "golden" && name != "silent_sufferer")
            throw InputError("abtest: unknown stratum in fractions: " + name);
        check(f, "fraction for " + name);
    }
    if (!(cl > 0 && cl < 1))
        throw InputError("abtest: cl must be in (0,1)");
}

int AbAssignment::count(PopulationStatus status, AbGroup group) const {
    int n = 0;
    for (std::size_t i = 0; i < customer_ids.size(); ++i)
        if (statuses[i] == status && groups[i] == group) ++n;
    return n;
}

int AbAssignment::count(AbGroup group) const {
    return static_cast<int>(std::count(groups.begin(), groups.end(), group));
}

AbAssignment assign_groups(const LabeledPopulation& population, const AbConfig& config) {
    config.validate();
    if (population.members.empty())
        throw InputError("abtest: empty population");

    AbAssignment out;
    out.seed = config.seed;
    const PopulationStatus strata[] = {PopulationStatus::Golden,
                                       PopulationStatus::SilentSufferer};
    for (std::size_t s = 0; s < 2; ++s) {
        std::vector<std::string> ids;
        for (const auto& member : population.members)
            if (member.status == strata[s]) ids.push_back(member.customer_id);
        std::sort(ids.begin(), ids.end());
        if (ids.empty()) {
            out.warnings.push_back(std::string("empty stratum: ") + to_string(strata[s]));
            continue;
        }
        auto rng = make_rng(derive_seed(config.seed, "assign", s));
        std::shuffle(ids.begin(), ids.end(), rng);
        const double fraction = config.fraction_for(strata[s]);
        const int n_test = static_cast<int>(
            std::lround(fraction * static_cast<double>(ids.size())));
        for (std::size_t i = 0; i < ids.size(); ++i) {
            out.customer_ids.push_back(ids[i]);
            out.statuses.push_back(strata[s]);
            out.groups.push_back(static_cast<int>(i) < n_test ? AbGroup::Test
                                                              : AbGroup::Control);
        }
    }
    if (out.customer_ids.empty())
        throw InputError("abtest: no golden or silent_sufferer members to assign");
    return out;
}

namespace {

struct SampleStats {
    double mean = 0;
    double variance = 0;  // sample variance, n-1 divisor
    double n = 0;
};

SampleStats sample_stats(const std::vector<double>& sample) {
    SampleStats s;
    s.n = static_cast<double>(sample.size());
    s.mean = std::accumulate(sample.begin(), sample.end(), 0.0) / s.n;
    double ss = 0;
    for (double v : sample) ss += (v - s.mean) * (v - s.mean);
    s.variance = ss / (s.n - 1);
    return s;
}

} // namespace

WelchResult welch_t_test(const std::vector<double>& sample_a,
                         const std::vector<double>& sample_b) {
    if (sample_a.size() < 2 || sample_b.size() < 2)
        throw InputError("welch_t_test: each sample needs at least 2 observations");
    const SampleStats a = sample_stats(sample_a);
    const SampleStats b = sample_stats(sample_b);

    WelchResult out;
    const double va = a.variance / a.n;
    const double vb = b.variance / b.n;
    const double se2 = va + vb;
    if (se2 <= 0) {
        // Both samples constant: identical means are a perfect null, any
        // difference is infinitely significant.
        out.df = a.n + b.n - 2;
        if (a.mean == b.mean) {
            out.t = 0;
            out.p = 1;
        } else {
            out.t = a.mean > b.mean ? std::numeric_limits<double>::infinity()
                                    : -std::numeric_limits<double>::infinity();
            out.p = 0;
        }
        return out;
    }
    out.t = (a.mean - b.mean) / std::sqrt(se2);
    out.df = se2 * se2 / (va * va / (a.n - 1) + vb * vb / (b.n - 1));
    const boost::math::students_t dist(out.df);
    out.p = 2 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t)));
    return out;
}

double lift(double test_mean, double control_mean) {
    if (!(control_mean > 0))
        throw InputError("lift: undefined lift for non-positive control mean");
    return (test_mean - control_mean) / control_mean * 100.0;
}

AbReadout campaign_readout(const AbAssignment& assignment,
                           const std::map<std::string, double>& post_gmv, double cl) {
    if (!(cl > 0 && cl < 1))
        throw InputError("campaign_readout: cl must be in (0,1)");
    std::vector<double> test;
    std::vector<double> control;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        auto it = post_gmv.find(assignment.customer_ids[i]);
        if (it == post_gmv.end())
            throw InputError("campaign_readout: missing post-period gmv for " +
                             assignment.customer_ids[i]);
        (assignment.groups[i] == AbGroup::Test ? test : control).push_back(it->second);
    }

    AbReadout out;
    out.cl = cl;
    out.n_test = static_cast<int>(test.size());
    out.n_control = static_cast<int>(control.size());
    const WelchResult welch = welch_t_test(test, control);
    out.t = welch.t;
    out.p = welch.p;
    out.df = welch.df;
    out.test_mean = std::accumulate(test.begin(), test.end(), 0.0) / test.size();
    out.control_mean = std::accumulate(control.begin(), control.end(), 0.0) / control.size();
    out.lift_percent = lift(out.test_mean, out.control_mean);
    out.significant = out.p < cl;
    return out;
}

void write_assignment(const std::filesystem::path& path, const AbAssignment& assignment) {
    CsvWriter writer(path, {"customer_id", "status", "group"});
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        writer.write_row({assignment.customer_ids[i], to_string(assignment.statuses[i]),
                          to_string(assignment.groups[i])});
    }
}

AbAssignment read_assignment(const std::filesystem::path& path) {
    CsvReader reader(path, {"customer_id", "status", "group"});
    AbAssignment out;
    CsvRow row;
    while (reader.next(row)) {
        out.customer_ids.push_back(row.fields[0]);
        out.statuses.push_back(parse_population_status(row.fields[1]));
        if (row.fields[2] == "test")
            out.groups.push_back(AbGroup::Test);
        else if (row.fields[2] == "control")
            out.groups.push_back(AbGroup::Control);
        else
            reader.fail(row, "unknown group: " + row.fields[2]);
    }
    return out;
}

void write_abtest_report(const std::filesystem::path& path, const AbAssignment& assignment,
                         const AbReadout& readout) {
    CsvWriter writer(path, {"row", "golden", "silent_sufferer", "total"});
    const auto golden = PopulationStatus::Golden;
    const auto silent = PopulationStatus::SilentSufferer;
    auto counts = [&](AbGroup group) {
        return std::vector<std::string>{std::to_string(assignment.count(golden, group)),
                                        std::to_string(assignment.count(silent, group)),
                                        std::to_string(assignment.count(group))};
    };
    auto c_test = counts(AbGroup::Test);
    auto c_control = counts(AbGroup::Control);
    writer.write_row({"n_test", c_test[0], c_test[1], c_test[2]});
    writer.write_row({"n_control", c_control[0], c_control[1], c_control[2]});
    writer.write_row(
        {"n_total",
         std::to_string(assignment.count(golden, AbGroup::Test) +
                        assignment.count(golden, AbGroup::Control)),
         std::to_string(assignment.count(silent, AbGroup::Test) +
                        assignment.count(silent, AbGroup::Control)),
         std::to_string(static_cast<int>(assignment.size()))});
    auto stat = [&](const std::string& name, const std::string& value) {
        writer.write_row({name, "", "", value});
    };
    stat("test_mean", format_double(readout.test_mean));
    stat("control_mean", format_double(readout.control_mean));
    stat("t_statistic", format_double(readout.t));
    stat("df", format_double(readout.df));
    stat("p_value", format_double(readout.p));
    stat("lift_percent", format_double(readout.lift_percent));
    stat("significant", readout.significant ? "1" : "0");
}

} // namespace dtk
