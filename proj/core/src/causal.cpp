#include "dtk/causal.hpp"

#include "dtk/errors.hpp"
#include "dtk/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <numeric>
#include <set>

namespace dtk::causal {

const char* to_string(Direction direction) {
    return direction == Direction::XtoY ? "x_to_y" : "y_to_x";
}

const char* to_string(Verdict verdict) {
    switch (verdict) {
    case Verdict::ForwardCausal: return "forward_causal";
    case Verdict::BackwardCausal: return "backward_causal";
    default: return "inconclusive";
    }
}

namespace {

// Fenwick tree over y-ranks accumulating per-point (count, x, y, x*y). Used to
// split already-inserted points into those at or below a query rank, which is
// what the closed form for sum |x_i-x_j||y_i-y_j| over sorted x needs.
struct BitNode {
    double count = 0;
    double sx = 0;
    double sy = 0;
    double sxy = 0;
};

class RankTree {
public:
    explicit RankTree(int size) : nodes_(static_cast<std::size_t>(size) + 1) {}

    void reset() { std::fill(nodes_.begin(), nodes_.end(), BitNode{}); }

    void add(int rank, double x, double y) {
        for (int i = rank + 1; i < static_cast<int>(nodes_.size()); i += i & -i) {
            nodes_[i].count += 1;
            nodes_[i].sx += x;
            nodes_[i].sy += y;
            nodes_[i].sxy += x * y;
        }
    }

    BitNode prefix(int rank) const {
        BitNode out;
        for (int i = rank + 1; i > 0; i -= i & -i) {
            out.count += nodes_[i].count;
            out.sx += nodes_[i].sx;
            out.sy += nodes_[i].sy;
            out.sxy += nodes_[i].sxy;
        }
        return out;
    }

private:
    std::vector<BitNode> nodes_;
};

// Row sums of the pairwise absolute-difference matrix, O(n log n).
std::vector<double> abs_row_sums(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return v[a] < v[b]; });
    std::vector<double> out(n, 0.0);
    double prefix = 0;
    double total = std::accumulate(v.begin(), v.end(), 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const double x = v[order[k]];
        const double below = static_cast<double>(k) * x - prefix;
        const double above = (total - prefix - x) - static_cast<double>(n - 1 - k) * x;
        out[order[k]] = below + above;
        prefix += x;
    }
    return out;
}

// sum over i<j of (v_j - v_i)^2 on sorted values, O(n).
double sum_squared_gaps(std::span<const double> sorted) {
    double prefix = 0;
    double prefix_sq = 0;
    double total = 0;
    for (std::size_t j = 0; j < sorted.size(); ++j) {
        const double x = sorted[j];
        total += static_cast<double>(j) * x * x - 2.0 * x * prefix + prefix_sq;
        prefix += x;
        prefix_sq += x * x;
    }
    return total;
}

double dvar_from(std::span<const double> v, const std::vector<double>& row_sums) {
    const double n = static_cast<double>(v.size());
    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end());
    const double d = 2.0 * sum_squared_gaps(sorted);
    double s2 = 0;
    double grand = 0;
    for (double r : row_sums) {
        s2 += r * r;
        grand += r;
    }
    return d / (n * n) - 2.0 * s2 / (n * n * n) + grand * grand / (n * n * n * n);
}

// Precomputes everything that survives a permutation of y so each permuted
// statistic costs one Fenwick sweep plus an O(n) dot product.
class PairedDcor {
public:
    PairedDcor(std::span<const double> x_in, std::span<const double> y_in)
        : n_(x_in.size()), x_(x_in.begin(), x_in.end()), y_(y_in.begin(), y_in.end()) {
        // Distances are translation invariant; centering keeps the raw-moment
        // accumulators small.
        center(x_);
        center(y_);
        x_order_.resize(n_);
        std::iota(x_order_.begin(), x_order_.end(), 0);
        std::sort(x_order_.begin(), x_order_.end(),
                  [&](int a, int b) { return x_[a] != x_[b] ? x_[a] < x_[b] : a < b; });

        std::vector<double> y_sorted(y_);
        std::sort(y_sorted.begin(), y_sorted.end());
        y_sorted.erase(std::unique(y_sorted.begin(), y_sorted.end()), y_sorted.end());
        y_rank_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            y_rank_[i] = static_cast<int>(
                std::lower_bound(y_sorted.begin(), y_sorted.end(), y_[i]) - y_sorted.begin());
        }
        tree_ = std::make_unique<RankTree>(static_cast<int>(y_sorted.size()));

        x_rows_ = abs_row_sums(x_);
        y_rows_ = abs_row_sums(y_);
        x_grand_ = std::accumulate(x_rows_.begin(), x_rows_.end(), 0.0);
        y_grand_ = std::accumulate(y_rows_.begin(), y_rows_.end(), 0.0);
        dvar_x_ = dvar_from(x_, x_rows_);
        dvar_y_ = dvar_from(y_, y_rows_);
        identity_.resize(n_);
        std::iota(identity_.begin(), identity_.end(), 0);
    }

    bool degenerate() const { return dvar_x_ <= 0 || dvar_y_ <= 0; }

    double observed() const { return dcor(identity_); }

    // perm[i] gives the index whose y value is paired with x_i.
    double dcor(std::span<const int> perm) const {
        if (degenerate()) return 0;
        const double n = static_cast<double>(n_);
        tree_->reset();
        double d = 0;
        double tc = 0, tx = 0, ty = 0, txy = 0;
        for (int idx : x_order_) {
            const double xj = x_[idx];
            const double yj = y_[perm[idx]];
            const int rank = y_rank_[perm[idx]];
            const BitNode low = tree_->prefix(rank);
            const double hc = tc - low.count;
            const double hx = tx - low.sx;
            const double hy = ty - low.sy;
            const double hxy = txy - low.sxy;
            d += xj * yj * low.count - xj * low.sy - yj * low.sx + low.sxy;
            d += xj * hy - xj * yj * hc + yj * hx - hxy;
            tree_->add(rank, xj, yj);
            tc += 1;
            tx += xj;
            ty += yj;
            txy += xj * yj;
        }
        double s2 = 0;
        for (std::size_t i = 0; i < n_; ++i) s2 += x_rows_[i] * y_rows_[perm[i]];
        const double dcov2 = 2.0 * d / (n * n) - 2.0 * s2 / (n * n * n) +
                             x_grand_ * y_grand_ / (n * n * n * n);
        const double denom = std::sqrt(dvar_x_ * dvar_y_);
        if (!(denom > 0)) return 0;
        return std::sqrt(std::max(0.0, dcov2 / denom));
    }

private:
    static void center(std::vector<double>& v) {
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        for (double& x : v) x -= mean;
    }

    std::size_t n_;
    std::vector<double> x_;
    std::vector<double> y_;
    std::vector<int> x_order_;
    std::vector<int> y_rank_;
    std::vector<double> x_rows_;
    std::vector<double> y_rows_;
    std::vector<int> identity_;
    double x_grand_ = 0;
    double y_grand_ = 0;
    double dvar_x_ = 0;
    double dvar_y_ = 0;
    std::unique_ptr<RankTree> tree_;
};

} // namespace

double distance_correlation(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw InputError("distance_correlation: length mismatch");
    if (x.size() < 2)
        throw InputError("distance_correlation: need at least 2 points");
    PairedDcor paired(x, y);
    if (paired.degenerate()) return 0;
    return paired.observed();
}

IndependenceResult independence_test(std::span<const double> residuals,
                                     std::span<const double> regressor,
                                     const CausalConfig& config) {
    if (residuals.size() != regressor.size())
        throw InputError("independence_test: length mismatch");
    if (residuals.size() < 2)
        throw InputError("independence_test: need at least 2 points");
    if (config.n_permutations < 1)
        throw InputError("independence_test: n_permutations must be positive");

    PairedDcor paired(residuals, regressor);
    IndependenceResult out;
    if (paired.degenerate()) {
        // A constant vector is independent of anything.
        out.statistic = 0;
        out.p_value = 1;
        out.pass = true;
        return out;
    }
    out.statistic = paired.observed();

    auto rng = make_rng(derive_seed(config.seed, "dcor_perm"));
    std::vector<int> perm(residuals.size());
    std::iota(perm.begin(), perm.end(), 0);
    int at_least = 0;
    for (int k = 0; k < config.n_permutations; ++k) {
        std::shuffle(perm.begin(), perm.end(), rng);
        if (paired.dcor(perm) >= out.statistic) ++at_least;
    }
    out.p_value = (1.0 + at_least) / (1.0 + config.n_permutations);
    out.pass = out.p_value >= config.cl;
    return out;
}

namespace {

// Least squares on [1, t, t^2, t^3] via normal equations with partial-pivot
// elimination. Degree drops when the regressor has too few distinct values to
// support a cubic.
std::vector<double> fit_polynomial(const std::vector<double>& t, std::span<const double> y,
                                   int degree) {
    const int terms = degree + 1;
    std::vector<double> a(static_cast<std::size_t>(terms) * terms, 0.0);
    std::vector<double> b(terms, 0.0);
    std::vector<double> powers(terms);
    for (std::size_t i = 0; i < t.size(); ++i) {
        powers[0] = 1;
        for (int p = 1; p < terms; ++p) powers[p] = powers[p - 1] * t[i];
        for (int r = 0; r < terms; ++r) {
            b[r] += powers[r] * y[i];
            for (int c = 0; c < terms; ++c) a[r * terms + c] += powers[r] * powers[c];
        }
    }
    for (int col = 0; col < terms; ++col) {
        int pivot = col;
        for (int r = col + 1; r < terms; ++r)
            if (std::abs(a[r * terms + col]) > std::abs(a[pivot * terms + col])) pivot = r;
        if (std::abs(a[pivot * terms + col]) < 1e-12)
            throw InputError("fit_direction: singular design matrix");
        if (pivot != col) {
            for (int c = 0; c < terms; ++c) std::swap(a[pivot * terms + c], a[col * terms + c]);
            std::swap(b[pivot], b[col]);
        }
        for (int r = col + 1; r < terms; ++r) {
            const double f = a[r * terms + col] / a[col * terms + col];
            for (int c = col; c < terms; ++c) a[r * terms + c] -= f * a[col * terms + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> coef(terms, 0.0);
    for (int r = terms - 1; r >= 0; --r) {
        double s = b[r];
        for (int c = r + 1; c < terms; ++c) s -= a[r * terms + c] * coef[c];
        coef[r] = s / a[r * terms + r];
    }
    return coef;
}

} // namespace

DirectionResult fit_direction(std::span<const double> x, std::span<const double> y,
                              Direction direction, const CausalConfig& config) {
    if (x.size() != y.size())
        throw InputError("fit_direction: length mismatch");
    const auto& reg = direction == Direction::XtoY ? x : y;
    const auto& resp = direction == Direction::XtoY ? y : x;
    if (static_cast<int>(reg.size()) < config.min_sample) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "fit_direction: need at least %d points, got %zu",
                      config.min_sample, reg.size());
        throw InputError(buf);
    }

    const double n = static_cast<double>(reg.size());
    const double mean = std::accumulate(reg.begin(), reg.end(), 0.0) / n;
    double ss = 0;
    for (double v : reg) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1));
    if (!(sd > 0))
        throw InputError("fit_direction: degenerate regressor (constant)");

    std::vector<double> t(reg.size());
    std::set<double> distinct;
    for (std::size_t i = 0; i < reg.size(); ++i) {
        t[i] = (reg[i] - mean) / sd;
        distinct.insert(t[i]);
    }
    const int degree = std::min<int>(3, static_cast<int>(distinct.size()) - 1);
    std::vector<double> coef = fit_polynomial(t, resp, degree);
    coef.resize(4, 0.0);

    DirectionResult out;
    out.direction = direction;
    out.coefficients = coef;
    out.coefficient = coef[1];
    out.residuals.resize(reg.size());
    for (std::size_t i = 0; i < reg.size(); ++i) {
        const double ti = t[i];
        const double fit = coef[0] + ti * (coef[1] + ti * (coef[2] + ti * coef[3]));
        out.residuals[i] = resp[i] - fit;
    }
    out.independence = independence_test(out.residuals, reg, config);
    return out;
}

Verdict asymmetry_verdict(const DirectionResult& forward, const DirectionResult& backward) {
    if (forward.pass() && !backward.pass()) return Verdict::ForwardCausal;
    if (!forward.pass() && backward.pass()) return Verdict::BackwardCausal;
    return Verdict::Inconclusive;
}

GoldenSet build_golden_set(std::span<const std::string> customer_ids,
                           std::span<const int> ensemble_buckets,
                           const std::vector<BceEvent>& bce_events,
                           const std::vector<Transaction>& transactions, Date as_of,
                           int decile_min) {
    if (customer_ids.size() != ensemble_buckets.size())
        throw InputError("build_golden_set: ids and buckets length mismatch");

    std::map<std::string, Date> last_purchase;
    for (const auto& tx : transactions) {
        if (!(tx.date < as_of)) continue;
        auto [it, inserted] = last_purchase.try_emplace(tx.customer_id, tx.date);
        if (!inserted && it->second < tx.date) it->second = tx.date;
    }
    // Only reported events count: an unreported defect gives no trusted link
    // between the experience and the walk-away, which is what silent-sufferer
    // recovery exists to find.
    std::map<std::string, std::set<Date>> bce_days;
    for (const auto& event : bce_events) {
        if (!event.reported || !(event.date < as_of)) continue;
        bce_days[event.customer_id].insert(event.date);
    }

    GoldenSet out;
    out.decile_min = decile_min;
    {
        char buf[96];
        std::snprintf(buf, sizeof buf,
                      "ensemble_bucket >= %d and reported bce on last purchase day", decile_min);
        out.rule = buf;
    }
    for (std::size_t i = 0; i < customer_ids.size(); ++i) {
        if (ensemble_buckets[i] < decile_min) continue;
        auto last = last_purchase.find(customer_ids[i]);
        if (last == last_purchase.end()) continue;
        auto days = bce_days.find(customer_ids[i]);
        if (days == bce_days.end()) continue;
        if (days->second.count(last->second)) out.ids.push_back(customer_ids[i]);
    }
    std::sort(out.ids.begin(), out.ids.end());
    return out;
}

} // namespace dtk::causal
