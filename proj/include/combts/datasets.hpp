#pragma once

#include "combts/error.hpp"
#include "combts/rng.hpp"
#include "combts/tensor.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace combts {

struct SplitBounds {
    std::size_t train_end = 0;
    std::size_t val_end = 0;
    std::size_t test_end = 0;
};

enum class Split { train, val, test };

inline const char* to_string(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "?";
}

/// A multivariate series stored time-major: values[t * variates + n].
struct SeriesDataset {
    std::string name;
    std::vector<double> values;
    std::size_t time_len = 0;
    std::size_t variates = 0;
    std::string frequency;
    std::optional<SplitBounds> split;

    double at(std::size_t t, std::size_t n) const { return values[t * variates + n]; }

    /// [begin, end) of a split. Requires split bounds.
    std::pair<std::size_t, std::size_t> range(Split s) const {
        if (!split) {
            throw ConfigError("dataset '" + name + "' has no split bounds");
        }
        switch (s) {
        case Split::train: return {0, split->train_end};
        case Split::val: return {split->train_end, split->val_end};
        case Split::test: return {split->val_end, split->test_end};
        }
        return {0, 0};
    }
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return cells;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) {
        s.remove_suffix(1);
    }
    return s;
}

} // namespace detail

/// Parse a CSV stream: header row, optional leading timestamp column, then
/// decimal numerals. Rows stay in file order.
inline SeriesDataset parse_csv(std::istream& in, bool date_column, std::string name = "") {
    SeriesDataset ds;
    ds.name = std::move(name);
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("csv '" + ds.name + "': empty input (missing header)");
    }
    const std::size_t header_cols = detail::split_csv_line(line).size();
    const std::size_t skip = date_column ? 1 : 0;
    if (header_cols <= skip) {
        throw FormatError("csv '" + ds.name + "': header has no value columns");
    }
    ds.variates = header_cols - skip;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (detail::trim(line).empty()) {
            continue;
        }
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header_cols) {
            throw FormatError("csv '" + ds.name + "': row " + std::to_string(row) + " has " +
                              std::to_string(cells.size()) + " columns, header has " +
                              std::to_string(header_cols));
        }
        for (std::size_t c = skip; c < cells.size(); ++c) {
            const auto cell = detail::trim(cells[c]);
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
                throw ParseError("csv '" + ds.name + "': row " + std::to_string(row) + ", column " +
                                 std::to_string(c + 1) + ": not a finite number: '" + std::string(cell) +
                                 "'");
            }
            ds.values.push_back(v);
        }
        ++ds.time_len;
    }
    if (ds.time_len == 0) {
        throw FormatError("csv '" + ds.name + "': no data rows");
    }
    return ds;
}

inline SeriesDataset load_csv(const std::string& path, bool date_column, std::string name = "") {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open dataset file '" + path + "'");
    }
    return parse_csv(in, date_column, name.empty() ? path : std::move(name));
}

/// Train/val/test split counts of the benchmark datasets.
inline const std::map<std::string, std::array<std::size_t, 3>>& named_split_counts() {
    static const std::map<std::string, std::array<std::size_t, 3>> table = {
        {"ETTh1", {8545, 2881, 2881}},   {"ETTh2", {8545, 2881, 2881}},
        {"ETTm1", {34465, 11521, 11521}}, {"ETTm2", {34465, 11521, 11521}},
        {"Weather", {36792, 5271, 10540}}, {"Electricity", {18317, 2633, 5261}},
    };
    return table;
}

struct SplitPolicy {
    enum class Kind { named_or_ratio, ratio } kind = Kind::named_or_ratio;
    double train = 0.7;
    double val = 0.1;

    static SplitPolicy ratio(double train = 0.7, double val = 0.1) {
        return {Kind::ratio, train, val};
    }
};

/// Attach split bounds. Known benchmark names use their fixed counts (the
/// series is truncated to the counted prefix); anything else uses floor'd
/// ratios with the test split taking the remainder.
inline SeriesDataset apply_split(SeriesDataset ds, const SplitPolicy& policy = {}) {
    const auto& named = named_split_counts();
    const auto it = named.find(ds.name);
    if (policy.kind == SplitPolicy::Kind::named_or_ratio && it != named.end()) {
        const auto [tr, va, te] = it->second;
        const std::size_t total = tr + va + te;
        if (total > ds.time_len) {
            throw RangeError("split counts (" + std::to_string(tr) + ", " + std::to_string(va) + ", " +
                             std::to_string(te) + ") exceed series length " + std::to_string(ds.time_len));
        }
        ds.values.resize(total * ds.variates);
        ds.time_len = total;
        ds.split = SplitBounds{tr, tr + va, total};
        return ds;
    }
    const auto n = static_cast<double>(ds.time_len);
    const auto tr = static_cast<std::size_t>(std::floor(policy.train * n + 1e-9));
    const auto va = static_cast<std::size_t>(std::floor(policy.val * n + 1e-9));
    if (tr == 0 || va == 0 || tr + va >= ds.time_len) {
        throw RangeError("series of length " + std::to_string(ds.time_len) +
                         " too short for ratio split");
    }
    ds.split = SplitBounds{tr, tr + va, ds.time_len};
    return ds;
}

/// Per-variate statistics fitted on the training split.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> std;
    std::vector<bool> clamped;

    bool any_clamped() const {
        for (bool c : clamped) {
            if (c) {
                return true;
            }
        }
        return false;
    }
};

/// z-score every split with train-split statistics. A variate whose train
/// std is zero gets std = 1 and a clamp flag.
inline std::pair<SeriesDataset, Standardizer> standardize(SeriesDataset ds) {
    const auto [lo, hi] = ds.range(Split::train);
    const std::size_t N = ds.variates;
    Standardizer st{std::vector<double>(N, 0.0), std::vector<double>(N, 0.0), std::vector<bool>(N, false)};
    const auto count = static_cast<double>(hi - lo);
    for (std::size_t n = 0; n < N; ++n) {
        double m = 0.0;
        for (std::size_t t = lo; t < hi; ++t) {
            m += ds.at(t, n);
        }
        m /= count;
        double v = 0.0;
        for (std::size_t t = lo; t < hi; ++t) {
            const double e = ds.at(t, n) - m;
            v += e * e;
        }
        double s = std::sqrt(v / count);
        if (!(s > 0.0)) {
            s = 1.0;
            st.clamped[n] = true;
        }
        st.mean[n] = m;
        st.std[n] = s;
    }
    for (std::size_t t = 0; t < ds.time_len; ++t) {
        for (std::size_t n = 0; n < N; ++n) {
            auto& x = ds.values[t * N + n];
            x = (x - st.mean[n]) / st.std[n];
        }
    }
    return {std::move(ds), std::move(st)};
}

inline SeriesDataset destandardize(SeriesDataset ds, const Standardizer& st) {
    const std::size_t N = ds.variates;
    for (std::size_t t = 0; t < ds.time_len; ++t) {
        for (std::size_t n = 0; n < N; ++n) {
            auto& x = ds.values[t * N + n];
            x = x * st.std[n] + st.mean[n];
        }
    }
    return ds;
}

/// A batch of (lookback, horizon) windows. `starts` holds the absolute time
/// index of each window's first input step.
struct WindowBatch {
    Tensor4 inputs;
    Tensor4 targets;
    std::vector<std::size_t> starts;
};

/// Sliding windows confined to one split. Training order is shuffled with
/// the supplied generator; val/test windows come in time order. The final
/// batch may be short.
class WindowLoader {
public:
    WindowLoader(const SeriesDataset& ds, Split split, std::size_t lookback, std::size_t horizon,
                 std::size_t batch_size, Rng* rng = nullptr)
        : ds_(&ds), lookback_(lookback), horizon_(horizon), batch_(batch_size) {
        if (batch_size == 0 || lookback == 0 || horizon == 0) {
            throw ParameterError("lookback, horizon and batch size must be positive");
        }
        const auto [lo, hi] = ds.range(split);
        const std::size_t len = hi - lo;
        if (len < lookback + horizon) {
            throw InsufficientDataError("split '" + std::string(to_string(split)) + "' of dataset '" +
                                        ds.name + "' has length " + std::to_string(len) +
                                        ", fewer than T + P = " + std::to_string(lookback) + " + " +
                                        std::to_string(horizon));
        }
        const std::size_t count = len - lookback - horizon + 1;
        starts_.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
            starts_[i] = lo + i;
        }
        if (split == Split::train && rng != nullptr) {
            rng->shuffle(starts_);
        }
    }

    std::size_t window_count() const noexcept { return starts_.size(); }
    std::size_t batch_count() const noexcept { return (starts_.size() + batch_ - 1) / batch_; }
    const std::vector<std::size_t>& starts() const noexcept { return starts_; }

    WindowBatch batch(std::size_t i) const {
        const std::size_t first = i * batch_;
        const std::size_t last = std::min(first + batch_, starts_.size());
        const std::size_t B = last - first;
        const std::size_t N = ds_->variates;
        WindowBatch wb{Tensor4(Shape{B, N, lookback_, 1}), Tensor4(Shape{B, N, horizon_, 1}), {}};
        wb.starts.assign(starts_.begin() + static_cast<std::ptrdiff_t>(first),
                         starts_.begin() + static_cast<std::ptrdiff_t>(last));
        for (std::size_t b = 0; b < B; ++b) {
            const std::size_t s = wb.starts[b];
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t t = 0; t < lookback_; ++t) {
                    wb.inputs.at(b, n, t, 0) = ds_->at(s + t, n);
                }
                for (std::size_t p = 0; p < horizon_; ++p) {
                    wb.targets.at(b, n, p, 0) = ds_->at(s + lookback_ + p, n);
                }
            }
        }
        return wb;
    }

private:
    const SeriesDataset* ds_;
    std::size_t lookback_;
    std::size_t horizon_;
    std::size_t batch_;
    std::vector<std::size_t> starts_;
};

/// Parameters of the bundled synthetic generator: a sum of sinusoid
/// harmonics of one base period, a linear trend and Gaussian noise.
struct SyntheticSpec {
    std::size_t length = 960;
    std::size_t variates = 2;
    std::size_t period = 24;
    std::size_t harmonics = 1;
    double trend = 0.0;
    double noise = 0.0;
    std::uint64_t seed = 0;
    std::string frequency = "hourly";
};

/// Each variate is sqrt(2/H) * sum_h sin(2 pi h t / W + phase_nh) with random
/// phases, so the noiseless periodic part has unit variance over whole periods.
inline SeriesDataset make_synthetic(const SyntheticSpec& spec, std::string name = "synthetic") {
    if (spec.length == 0 || spec.variates == 0 || spec.period == 0 || spec.harmonics == 0) {
        throw ParameterError("synthetic series needs positive length, variates, period and harmonics");
    }
    Rng rng(spec.seed);
    SeriesDataset ds;
    ds.name = std::move(name);
    ds.time_len = spec.length;
    ds.variates = spec.variates;
    ds.frequency = spec.frequency;
    ds.values.resize(spec.length * spec.variates);
    std::vector<std::vector<double>> phases(spec.variates, std::vector<double>(spec.harmonics));
    for (auto& ph : phases) {
        for (auto& p : ph) {
            p = rng.uniform(0.0, 2.0 * std::numbers::pi);
        }
    }
    const double amp = std::sqrt(2.0 / static_cast<double>(spec.harmonics));
    const auto W = static_cast<double>(spec.period);
    for (std::size_t t = 0; t < spec.length; ++t) {
        for (std::size_t n = 0; n < spec.variates; ++n) {
            double v = 0.0;
            for (std::size_t h = 0; h < spec.harmonics; ++h) {
                const double k = static_cast<double>(h + 1);
                v += amp * std::sin(2.0 * std::numbers::pi * k * static_cast<double>(t % spec.period) / W +
                                    phases[n][h]);
            }
            v += spec.trend * static_cast<double>(t) / static_cast<double>(spec.length);
            if (spec.noise > 0.0) {
                v += spec.noise * rng.normal();
            }
            ds.values[t * spec.variates + n] = v;
        }
    }
    return ds;
}

/// Write a dataset as CSV with an integer "date" index column.
inline void write_csv(std::ostream& out, const SeriesDataset& ds) {
    out << "date";
    for (std::size_t n = 0; n < ds.variates; ++n) {
        out << ",v" << n;
    }
    out << '\n';
    char buf[64];
    for (std::size_t t = 0; t < ds.time_len; ++t) {
        out << t;
        for (std::size_t n = 0; n < ds.variates; ++n) {
            const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), ds.at(t, n));
            out << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
        }
        out << '\n';
    }
}

} // namespace combts
