#pragma once

#include "combts/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace combts {

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

inline void require_finite_losses(const std::vector<double>& x, const char* what) {
    for (double v : x) {
        if (!std::isfinite(v)) {
            throw NonFiniteError(std::string(what) + ": non-finite loss in sample");
        }
    }
}

inline double mu_hat(const std::vector<double>& losses) {
    if (losses.empty()) {
        throw InsufficientDataError("mu_hat needs at least one loss");
    }
    require_finite_losses(losses, "mu_hat");
    // Shifted, compensated sum: exact for constant samples.
    const double x0 = losses.front();
    double s = 0.0;
    double c = 0.0;
    for (double v : losses) {
        const double d = v - x0;
        const double t = s + d;
        c += std::abs(s) >= std::abs(d) ? (s - t) + d : (d - t) + s;
        s = t;
    }
    return x0 + (s + c) / static_cast<double>(losses.size());
}

/// Bessel-corrected standard deviation (Welford update).
inline double sigma_hat(const std::vector<double>& losses) {
    if (losses.size() < 2) {
        throw InsufficientDataError("sigma_hat needs at least two losses, got " + std::to_string(losses.size()));
    }
    require_finite_losses(losses, "sigma_hat");
    double mean = 0.0;
    double m2 = 0.0;
    std::size_t k = 0;
    for (double v : losses) {
        ++k;
        const double d = v - mean;
        mean += d / static_cast<double>(k);
        m2 += d * (v - mean);
    }
    return std::sqrt(std::max(m2, 0.0) / static_cast<double>(k - 1));
}

inline double l_best(const std::vector<double>& losses) {
    if (losses.empty()) {
        throw InsufficientDataError("l_best needs at least one loss");
    }
    require_finite_losses(losses, "l_best");
    return *std::min_element(losses.begin(), losses.end());
}

// ---------------------------------------------------------------------------
// Student-t quantile
// ---------------------------------------------------------------------------

namespace detail {

/// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double beta_cf(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-16;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) {
        d = tiny;
    }
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 10000; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) {
            c = tiny;
        }
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) {
            c = tiny;
        }
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) {
            return h;
        }
    }
    return h;
}

} // namespace detail

/// I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0) || x < 0.0 || x > 1.0) {
        throw ParameterError("incomplete_beta: need a, b > 0 and x in [0, 1]");
    }
    if (x == 0.0 || x == 1.0) {
        return x;
    }
    const double lbt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double bt = std::exp(lbt);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return bt * detail::beta_cf(a, b, x) / a;
    }
    return 1.0 - bt * detail::beta_cf(b, a, 1.0 - x) / b;
}

/// P(T <= t) for Student's t with `dof` degrees of freedom.
inline double student_t_cdf(double t, double dof) {
    if (!(dof > 0.0)) {
        throw ParameterError("student_t_cdf: dof must be positive");
    }
    const double tail = 0.5 * incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
    return t >= 0.0 ? 1.0 - tail : tail;
}

/// Inverse of student_t_cdf by bracketing and bisection to machine precision.
inline double student_t_quantile(double p, double dof) {
    if (!(p > 0.0 && p < 1.0)) {
        throw ParameterError("student_t_quantile: p must lie in (0, 1)");
    }
    if (p < 0.5) {
        return -student_t_quantile(1.0 - p, dof);
    }
    if (p == 0.5) {
        return 0.0;
    }
    double lo = 0.0;
    double hi = 1.0;
    while (student_t_cdf(hi, dof) < p) {
        lo = hi;
        hi *= 2.0;
    }
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) {
            break;
        }
        (student_t_cdf(mid, dof) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// mu +- t_{0.975, K-1} * sigma / sqrt(K).
inline std::pair<double, double> ci95(const std::vector<double>& losses) {
    const double mu = mu_hat(losses);
    const double sd = sigma_hat(losses);
    const auto K = static_cast<double>(losses.size());
    const double half = student_t_quantile(0.975, K - 1.0) * sd / std::sqrt(K);
    return {mu - half, mu + half};
}

/// Percentile bootstrap interval for the mean, for sensitivity checks.
inline std::pair<double, double> bootstrap_ci95(const std::vector<double>& losses, std::size_t resamples,
                                                std::uint64_t seed) {
    if (losses.size() < 2 || resamples < 2) {
        throw InsufficientDataError("bootstrap_ci95 needs at least two losses and two resamples");
    }
    require_finite_losses(losses, "bootstrap_ci95");
    Rng rng(seed);
    std::vector<double> means(resamples);
    for (auto& m : means) {
        double s = 0.0;
        for (std::size_t i = 0; i < losses.size(); ++i) {
            s += losses[rng.below(losses.size())];
        }
        m = s / static_cast<double>(losses.size());
    }
    std::sort(means.begin(), means.end());
    auto at = [&means](double q) {
        const double pos = q * static_cast<double>(means.size() - 1);
        const auto i = static_cast<std::size_t>(pos);
        const double f = pos - static_cast<double>(i);
        return i + 1 < means.size() ? means[i] * (1.0 - f) + means[i + 1] * f : means[i];
    };
    return {at(0.025), at(0.975)};
}

// ---------------------------------------------------------------------------
// Mann-Whitney U
// ---------------------------------------------------------------------------

struct MannWhitneyResult {
    double u = 0.0; // U of the first sample: pairs (x_i > y_j) + 0.5 * ties
    double p = 1.0; // one-tailed, alternative: x stochastically smaller than y
    bool exact = false;
};

/// Number of orderings of n x's and m y's with U_x == u, for u in [0, n*m].
inline std::vector<double> mann_whitney_counts(std::size_t n, std::size_t m) {
    // f[i][j][u]; the largest element is either an x (adds j) or a y (adds 0).
    std::vector<std::vector<std::vector<double>>> f(n + 1, std::vector<std::vector<double>>(m + 1));
    for (std::size_t i = 0; i <= n; ++i) {
        for (std::size_t j = 0; j <= m; ++j) {
            auto& cur = f[i][j];
            cur.assign(i * j + 1, 0.0);
            if (i == 0 || j == 0) {
                cur[0] = 1.0;
                continue;
            }
            const auto& with_x = f[i - 1][j];
            const auto& with_y = f[i][j - 1];
            for (std::size_t u = 0; u < with_x.size(); ++u) {
                cur[u + j] += with_x[u];
            }
            for (std::size_t u = 0; u < with_y.size(); ++u) {
                cur[u] += with_y[u];
            }
        }
    }
    return f[n][m];
}

inline std::size_t mann_whitney_exact_limit() { return 16; }

inline MannWhitneyResult mann_whitney_one_tailed(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.empty() || y.empty()) {
        throw InsufficientDataError("mann_whitney_one_tailed needs non-empty samples");
    }
    require_finite_losses(x, "mann_whitney_one_tailed");
    require_finite_losses(y, "mann_whitney_one_tailed");
    const std::size_t n = x.size();
    const std::size_t m = y.size();
    const std::size_t N = n + m;
    std::vector<std::pair<double, bool>> all;
    all.reserve(N);
    for (double v : x) {
        all.emplace_back(v, true);
    }
    for (double v : y) {
        all.emplace_back(v, false);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double rank_sum_x = 0.0;
    double tie_term = 0.0;
    bool ties = false;
    for (std::size_t i = 0; i < N;) {
        std::size_t j = i;
        while (j < N && all[j].first == all[i].first) {
            ++j;
        }
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        const auto t = static_cast<double>(j - i);
        if (j - i > 1) {
            ties = true;
            tie_term += t * t * t - t;
        }
        for (std::size_t k = i; k < j; ++k) {
            if (all[k].second) {
                rank_sum_x += midrank;
            }
        }
        i = j;
    }
    MannWhitneyResult res;
    const auto dn = static_cast<double>(n);
    const auto dm = static_cast<double>(m);
    res.u = rank_sum_x - dn * (dn + 1.0) / 2.0;
    if (N <= mann_whitney_exact_limit() && !ties) {
        const auto counts = mann_whitney_counts(n, m);
        const auto u_obs = static_cast<std::size_t>(std::llround(res.u));
        double below = 0.0;
        double total = 0.0;
        for (std::size_t u = 0; u < counts.size(); ++u) {
            total += counts[u];
            if (u <= u_obs) {
                below += counts[u];
            }
        }
        res.p = below / total;
        res.exact = true;
        return res;
    }
    const auto dN = static_cast<double>(N);
    const double mean = dn * dm / 2.0;
    const double var = dn * dm / 12.0 * ((dN + 1.0) - tie_term / (dN * (dN - 1.0)));
    if (!(var > 0.0)) {
        res.p = 1.0;
        return res;
    }
    const double z = (res.u - mean + 0.5) / std::sqrt(var);
    res.p = std::min(1.0, 0.5 * std::erfc(-z / std::sqrt(2.0)));
    return res;
}

// ---------------------------------------------------------------------------
// Grouping
// ---------------------------------------------------------------------------

/// Value of a grouping field for a record: "eo", or any condition field. Unset
/// stage fields resolve to the stage under audit or the pipeline default.
inline std::string group_value(const RunRecord& r, const std::string& field) {
    if (field == "eo" || field == r.stage) {
        return r.eo;
    }
    const json j = r.ec.to_json();
    if (!j.contains(field)) {
        throw ReportError("unknown grouping field '" + field + "'");
    }
    const auto& v = j.at(field);
    if (v.is_null()) {
        if (field == "embedding") {
            return "patch";
        }
        if (field == "encoder") {
            return "identity";
        }
        if (field == "transform") {
            return "none";
        }
        return "-";
    }
    return v.is_string() ? v.get<std::string>() : v.dump();
}

/// Numeric-aware ordering so "96" sorts before "192".
inline bool natural_less(const std::string& a, const std::string& b) {
    char* ea = nullptr;
    char* eb = nullptr;
    const double da = std::strtod(a.c_str(), &ea);
    const double db = std::strtod(b.c_str(), &eb);
    const bool na = !a.empty() && *ea == '\0';
    const bool nb = !b.empty() && *eb == '\0';
    if (na && nb && da != db) {
        return da < db;
    }
    if (na != nb) {
        return na;
    }
    return a < b;
}

struct NaturalLess {
    bool operator()(const std::string& a, const std::string& b) const { return natural_less(a, b); }
};

// ---------------------------------------------------------------------------
// Best configuration
// ---------------------------------------------------------------------------

struct BestConfig {
    std::string group;
    EvaluationCondition ec;
    double loss = 0.0;
    std::string key;
};

/// Minimum-MSE ok record; ties go to the smallest canonical condition.
inline BestConfig best_config(const std::vector<RunRecord>& records, const std::string& group = "all") {
    const RunRecord* best = nullptr;
    std::string best_canon;
    for (const auto& r : records) {
        if (!r.ok()) {
            continue;
        }
        const std::string canon = r.ec.canonical();
        if (!best || r.test_mse < best->test_mse || (r.test_mse == best->test_mse && canon < best_canon)) {
            best = &r;
            best_canon = canon;
        }
    }
    if (!best) {
        throw InsufficientDataError("group '" + group + "' has no successful runs");
    }
    return {group, best->ec, best->test_mse, best->key};
}

inline std::vector<BestConfig> best_configs(const std::vector<RunRecord>& records, const std::string& group_by = "eo") {
    std::map<std::string, std::vector<RunRecord>, NaturalLess> groups;
    for (const auto& r : records) {
        groups[group_value(r, group_by)].push_back(r);
    }
    std::vector<BestConfig> out;
    for (const auto& [g, rs] : groups) {
        out.push_back(best_config(rs, g));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct SummaryStats {
    std::string group;
    std::string dataset;
    std::string horizon; // "avg" for pooled rows
    std::size_t k_ok = 0;
    double mu = std::numeric_limits<double>::quiet_NaN();
    double sigma = std::numeric_limits<double>::quiet_NaN();
    double lbest = std::numeric_limits<double>::quiet_NaN();
    double ci_low = std::numeric_limits<double>::quiet_NaN();
    double ci_high = std::numeric_limits<double>::quiet_NaN();
    std::size_t excluded = 0;
};

/// Statistics over whatever is defined for the sample size.
inline SummaryStats summarize(const std::vector<double>& losses, std::size_t excluded) {
    SummaryStats s;
    s.k_ok = losses.size();
    s.excluded = excluded;
    if (!losses.empty()) {
        s.mu = mu_hat(losses);
        s.lbest = l_best(losses);
    }
    if (losses.size() >= 2) {
        s.sigma = sigma_hat(losses);
        std::tie(s.ci_low, s.ci_high) = ci95(losses);
    }
    return s;
}

struct ReportRow {
    std::string dataset;
    std::string horizon;
    std::vector<SummaryStats> cells; // one per group
};

struct Report {
    std::string plan_hash;
    std::string group_by;
    std::vector<std::string> groups;
    std::vector<ReportRow> rows;

    /// Aligned text: one row per (dataset, horizon) plus pooled avg rows,
    /// mu / sigma / min per group.
    std::string text() const {
        auto num = [](double v) {
            if (std::isnan(v)) {
                return std::string("-");
            }
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.4f", v);
            return std::string(buf);
        };
        std::vector<std::vector<std::string>> cells;
        std::vector<std::string> head{"dataset", "horizon"};
        for (const auto& g : groups) {
            head.push_back(g + " mu");
            head.push_back(g + " sigma");
            head.push_back(g + " min");
        }
        cells.push_back(head);
        for (const auto& row : rows) {
            std::vector<std::string> line{row.dataset, row.horizon};
            for (const auto& c : row.cells) {
                line.push_back(num(c.mu));
                line.push_back(num(c.sigma));
                line.push_back(row.horizon == "avg" ? "-" : num(c.lbest));
            }
            cells.push_back(line);
        }
        std::vector<std::size_t> width(head.size(), 0);
        for (const auto& line : cells) {
            for (std::size_t i = 0; i < line.size(); ++i) {
                width[i] = std::max(width[i], line[i].size());
            }
        }
        std::ostringstream out;
        out << "plan " << plan_hash << ", grouped by " << group_by << "\n";
        for (std::size_t r = 0; r < cells.size(); ++r) {
            for (std::size_t i = 0; i < cells[r].size(); ++i) {
                const auto& s = cells[r][i];
                if (i < 2) {
                    out << s << std::string(width[i] - s.size(), ' ');
                } else {
                    out << std::string(width[i] - s.size(), ' ') << s;
                }
                out << (i + 1 < cells[r].size() ? "  " : "\n");
            }
            if (r == 0) {
                std::size_t total = 0;
                for (auto w : width) {
                    total += w + 2;
                }
                out << std::string(total - 2, '-') << "\n";
            }
        }
        bool any_excluded = false;
        for (const auto& row : rows) {
            if (row.dataset != "all") {
                continue;
            }
            for (const auto& c : row.cells) {
                if (c.excluded > 0) {
                    if (!any_excluded) {
                        out << "excluded (diverged or failed):";
                        any_excluded = true;
                    }
                    out << " " << c.group << "=" << c.excluded;
                }
            }
        }
        if (any_excluded) {
            out << "\n";
        }
        return out.str();
    }

    /// One line per (group, row): group,dataset,horizon,K_ok,mu,sigma,lbest,ci_low,ci_high,excluded.
    std::string table_csv() const {
        auto num = [](double v) {
            if (std::isnan(v)) {
                return std::string();
            }
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            return std::string(buf);
        };
        std::ostringstream out;
        out << "group,dataset,horizon,K_ok,mu,sigma,lbest,ci_low,ci_high,excluded\n";
        for (const auto& row : rows) {
            for (const auto& c : row.cells) {
                out << c.group << ',' << c.dataset << ',' << c.horizon << ',' << c.k_ok << ',' << num(c.mu) << ','
                    << num(c.sigma) << ',' << num(c.lbest) << ',' << num(c.ci_low) << ',' << num(c.ci_high) << ','
                    << c.excluded << '\n';
            }
        }
        return out.str();
    }

    const SummaryStats& cell(const std::string& dataset, const std::string& horizon, const std::string& group) const {
        for (const auto& row : rows) {
            if (row.dataset == dataset && row.horizon == horizon) {
                for (const auto& c : row.cells) {
                    if (c.group == group) {
                        return c;
                    }
                }
            }
        }
        throw ReportError("no report cell for (" + dataset + ", " + horizon + ", " + group + ")");
    }
};

inline std::string require_single_plan(const std::vector<RunRecord>& records) {
    if (records.empty()) {
        throw ReportError("no run records to report");
    }
    std::set<std::string> hashes;
    for (const auto& r : records) {
        hashes.insert(r.plan_hash);
    }
    if (hashes.size() != 1) {
        std::string list;
        for (const auto& h : hashes) {
            list += (list.empty() ? "" : ", ") + h;
        }
        throw ReportError("records mix plan hashes: " + list);
    }
    return *hashes.begin();
}

/// Per (dataset, horizon) rows, a pooled "avg" row per dataset over the union
/// of its horizons' runs, and a final pooled row over everything.
inline Report report(const std::vector<RunRecord>& records, const std::string& group_by = "eo") {
    Report rep;
    rep.plan_hash = require_single_plan(records);
    rep.group_by = group_by;
    std::set<std::string, NaturalLess> groups;
    std::set<std::string, NaturalLess> datasets;
    std::map<std::string, std::set<std::string, NaturalLess>> horizons;
    for (const auto& r : records) {
        groups.insert(group_value(r, group_by));
        datasets.insert(r.ec.dataset);
        horizons[r.ec.dataset].insert(std::to_string(r.ec.horizon));
    }
    rep.groups.assign(groups.begin(), groups.end());
    auto make_row = [&](const std::string& ds, const std::string& h, auto&& select) {
        ReportRow row{ds, h, {}};
        for (const auto& g : rep.groups) {
            std::vector<double> losses;
            std::size_t excluded = 0;
            for (const auto& r : records) {
                if (group_value(r, group_by) != g || !select(r)) {
                    continue;
                }
                if (r.ok()) {
                    losses.push_back(r.test_mse);
                } else {
                    ++excluded;
                }
            }
            auto s = summarize(losses, excluded);
            s.group = g;
            s.dataset = ds;
            s.horizon = h;
            row.cells.push_back(std::move(s));
        }
        return row;
    };
    for (const auto& ds : datasets) {
        for (const auto& h : horizons[ds]) {
            rep.rows.push_back(make_row(ds, h, [&](const RunRecord& r) {
                return r.ec.dataset == ds && std::to_string(r.ec.horizon) == h;
            }));
        }
        rep.rows.push_back(make_row(ds, "avg", [&](const RunRecord& r) { return r.ec.dataset == ds; }));
    }
    rep.rows.push_back(make_row("all", "avg", [](const RunRecord&) { return true; }));
    return rep;
}

// ---------------------------------------------------------------------------
// Significance
// ---------------------------------------------------------------------------

struct SignificanceRow {
    std::string scope; // dataset id or "overall"
    std::size_t n = 0; // paired conditions with both runs ok
    double u = std::numeric_limits<double>::quiet_NaN();
    double p = std::numeric_limits<double>::quiet_NaN();
    bool exact = false;
    bool significant = false;
};

struct Significance {
    std::string a;
    std::string b;
    double alpha = 0.05;
    std::size_t unpaired_excluded = 0;
    std::vector<SignificanceRow> rows;

    std::string text() const {
        std::ostringstream out;
        out << "H1: " << a << " has lower MSE than " << b << " (one-tailed Mann-Whitney U, alpha = " << alpha
            << ")\n";
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-16s %4s %10s %10s  %-6s %s\n", "scope", "n", "U", "p", "method",
                      "verdict");
        out << buf;
        for (const auto& r : rows) {
            if (std::isnan(r.p)) {
                std::snprintf(buf, sizeof(buf), "%-16s %4zu %10s %10s  %-6s %s\n", r.scope.c_str(), r.n, "-", "-",
                              "-", "insufficient data");
            } else {
                std::snprintf(buf, sizeof(buf), "%-16s %4zu %10.1f %10.4g  %-6s %s\n", r.scope.c_str(), r.n, r.u,
                              r.p, r.exact ? "exact" : "normal", r.significant ? "significant" : "not significant");
            }
            out << buf;
        }
        if (unpaired_excluded > 0) {
            out << "conditions dropped because a run was not ok: " << unpaired_excluded << "\n";
        }
        return out.str();
    }
};

/// Pair A's and B's runs by condition hash, then test per dataset and pooled.
inline Significance significance(const std::vector<RunRecord>& records, const std::string& a, const std::string& b,
                                 double alpha = 0.05) {
    require_single_plan(records);
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ParameterError("alpha must lie in (0, 1)");
    }
    std::map<std::string, const RunRecord*> ra;
    std::map<std::string, const RunRecord*> rb;
    for (const auto& r : records) {
        if (r.eo == a) {
            ra[r.ec_hash] = &r;
        } else if (r.eo == b) {
            rb[r.ec_hash] = &r;
        }
    }
    if (ra.empty() || rb.empty()) {
        throw PairingError("no runs for '" + (ra.empty() ? a : b) + "'");
    }
    std::string missing;
    for (const auto& [h, r] : ra) {
        if (!rb.count(h)) {
            missing += " " + b + ":" + h;
        }
    }
    for (const auto& [h, r] : rb) {
        if (!ra.count(h)) {
            missing += " " + a + ":" + h;
        }
    }
    if (!missing.empty()) {
        throw PairingError("unpaired conditions, missing runs:" + missing);
    }
    Significance sig;
    sig.a = a;
    sig.b = b;
    sig.alpha = alpha;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>, NaturalLess> per_ds;
    std::pair<std::vector<double>, std::vector<double>> pooled;
    for (const auto& [h, x] : ra) {
        const RunRecord* y = rb.at(h);
        auto& slot = per_ds[x->ec.dataset];
        if (!x->ok() || !y->ok()) {
            ++sig.unpaired_excluded;
            continue;
        }
        slot.first.push_back(x->test_mse);
        slot.second.push_back(y->test_mse);
        pooled.first.push_back(x->test_mse);
        pooled.second.push_back(y->test_mse);
    }
    auto test = [alpha](const std::string& scope, const auto& xy) {
        SignificanceRow row;
        row.scope = scope;
        row.n = xy.first.size();
        if (row.n > 0) {
            const auto mw = mann_whitney_one_tailed(xy.first, xy.second);
            row.u = mw.u;
            row.p = mw.p;
            row.exact = mw.exact;
            row.significant = mw.p < alpha;
        }
        return row;
    };
    for (const auto& [ds, xy] : per_ds) {
        sig.rows.push_back(test(ds, xy));
    }
    sig.rows.push_back(test("overall", pooled));
    return sig;
}

} // namespace combts
