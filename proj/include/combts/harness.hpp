#pragma once

#include "combts/stats.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace combts {

namespace fs = std::filesystem;

/// Environment variable naming the root directory for relative CSV paths.
inline constexpr const char* data_root_env = "COMBTS_DATA_ROOT";

struct DatasetSource {
    enum class Kind { synthetic, csv } kind = Kind::synthetic;
    SyntheticSpec synthetic;
    std::string path;
    bool date_column = true;
    std::optional<SplitPolicy> split; // unset: named counts, else 0.7 / 0.1

    json to_json() const {
        json j;
        if (kind == Kind::synthetic) {
            j["synthetic"] = {{"length", synthetic.length},       {"variates", synthetic.variates},
                              {"period", synthetic.period},       {"harmonics", synthetic.harmonics},
                              {"trend", synthetic.trend},         {"noise", synthetic.noise},
                              {"seed", synthetic.seed},           {"frequency", synthetic.frequency}};
        } else {
            j["csv"] = {{"path", path}, {"date_column", date_column}};
        }
        if (split) {
            j["split"] = {{"train", split->train}, {"val", split->val}};
        }
        return j;
    }
};

struct ExperimentConfig {
    std::string name;
    Stage stage = Stage::encoder;
    std::vector<std::string> variants;
    EcSpace space;
    std::size_t K = 0;
    std::uint64_t plan_seed = 0;
    std::vector<std::uint64_t> seeds;
    std::map<std::string, DatasetSource> datasets;
    std::string output = "runs";
    fs::path base_dir; // directory of the config file

    json to_json() const {
        json space_j;
        space_j["datasets"] = space.datasets;
        space_j["lookback"] = space.lookbacks;
        space_j["horizon"] = space.horizons;
        space_j["layers"] = space.layers;
        space_j["d_model"] = space.d_models;
        space_j["lr"] = space.lrs;
        auto names = [](const auto& kinds) {
            std::vector<std::string> out;
            for (auto k : kinds) {
                out.emplace_back(to_string(k));
            }
            return out;
        };
        // Empty stage lists are omitted; the audited stage is never listed.
        if (!space.embeddings.empty()) space_j["embedding"] = names(space.embeddings);
        if (!space.encoders.empty()) space_j["encoder"] = names(space.encoders);
        if (!space.transforms.empty()) space_j["transform"] = names(space.transforms);
        space_j["kernel"] = space.kernels;
        space_j["ms_levels"] = space.ms_levels;
        space_j["ms_factor"] = space.ms_factors;
        space_j["cycle_len"] = space.cycle_lens;
        space_j["patch_len"] = space.patch_lens;
        space_j["stride"] = space.strides;
        json ds_j = json::object();
        for (const auto& [id, src] : datasets) {
            ds_j[id] = src.to_json();
        }
        return {{"name", name},
                {"eo", {{"stage", to_string(stage)}, {"variants", variants}}},
                {"space", space_j},
                {"fixed",
                 {{"seed", space.fixed.seed},
                  {"batch", space.fixed.batch},
                  {"epochs", space.fixed.epochs},
                  {"patience", space.fixed.patience},
                  {"dropout", space.fixed.dropout},
                  {"max_steps", space.fixed.max_steps}}},
                {"K", K},
                {"strata", "dataset_horizon"},
                {"plan_seed", plan_seed},
                {"seeds", seeds},
                {"datasets", ds_j},
                {"output", output}};
    }

    std::string canonical() const { return to_json().dump(); }
    std::string hash() const { return hex64(fnv1a64(canonical())); }
};

namespace detail {

/// Strict reader that reports the JSON path of the first offending field.
class ConfigReader {
public:
    [[noreturn]] static void fail(const std::string& path, const std::string& msg) {
        throw ConfigError(path + ": " + msg);
    }

    static void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
        if (!j.is_object()) {
            fail(path, "expected an object");
        }
        for (const auto& [k, v] : j.items()) {
            bool known = false;
            for (const char* a : allowed) {
                known = known || k == a;
            }
            if (!known) {
                fail(path + "." + k, "unknown field");
            }
        }
    }

    static const json& need(const json& j, const std::string& path, const char* key) {
        if (!j.contains(key)) {
            fail(path + "." + key, "missing required field");
        }
        return j.at(key);
    }

    static std::size_t natural(const json& v, const std::string& path, bool allow_zero = false) {
        if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < (allow_zero ? 0 : 1))) {
            fail(path, allow_zero ? "expected a non-negative integer" : "expected a positive integer");
        }
        return v.get<std::size_t>();
    }

    static std::uint64_t seed(const json& v, const std::string& path) {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
            fail(path, "expected a non-negative integer seed");
        }
        return v.get<std::uint64_t>();
    }

    static double real(const json& v, const std::string& path) {
        if (!v.is_number()) {
            fail(path, "expected a number");
        }
        const double d = v.get<double>();
        if (!std::isfinite(d)) {
            fail(path, "expected a finite number");
        }
        return d;
    }

    static std::string str(const json& v, const std::string& path) {
        if (!v.is_string()) {
            fail(path, "expected a string");
        }
        return v.get<std::string>();
    }

    template <typename F>
    static auto list(const json& v, const std::string& path, F&& item, bool allow_empty = false) {
        using T = decltype(item(v, path));
        if (!v.is_array()) {
            fail(path, "expected a list");
        }
        if (v.empty() && !allow_empty) {
            fail(path, "list must not be empty");
        }
        std::vector<T> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            out.push_back(item(v.at(i), path + "[" + std::to_string(i) + "]"));
        }
        return out;
    }
};

} // namespace detail

inline ExperimentConfig parse_config(const json& j, const fs::path& base_dir = {}) {
    using R = detail::ConfigReader;
    R::only_keys(j, "config",
                 {"name", "eo", "space", "fixed", "K", "strata", "plan_seed", "seeds", "datasets", "output"});
    ExperimentConfig cfg;
    cfg.base_dir = base_dir;
    cfg.name = R::str(R::need(j, "config", "name"), "config.name");

    const auto& eo = R::need(j, "config", "eo");
    R::only_keys(eo, "config.eo", {"stage", "variants"});
    const auto stage_name = R::str(R::need(eo, "config.eo", "stage"), "config.eo.stage");
    const auto stage = parse_stage(stage_name);
    if (!stage) {
        R::fail("config.eo.stage", "unknown stage '" + stage_name + "' (embedding, encoder, transform)");
    }
    cfg.stage = *stage;
    cfg.variants = R::list(R::need(eo, "config.eo", "variants"), "config.eo.variants", [&](const json& v, auto p) {
        auto s = R::str(v, p);
        if (!is_valid_variant(cfg.stage, s)) {
            R::fail(p, "unknown " + stage_name + " variant '" + s + "'");
        }
        return s;
    });
    if (cfg.variants.size() < 2) {
        R::fail("config.eo.variants", "need at least two variants");
    }

    const auto& sp = R::need(j, "config", "space");
    const std::string spp = "config.space";
    R::only_keys(sp, spp,
                 {"datasets", "lookback", "horizon", "layers", "d_model", "lr", "embedding", "encoder", "transform",
                  "kernel", "ms_levels", "ms_factor", "cycle_len", "patch_len", "stride"});
    auto nat = [](const json& v, const std::string& p) { return R::natural(v, p); };
    auto pos_real = [](const json& v, const std::string& p) {
        const double d = R::real(v, p);
        if (d < 0.0) {
            R::fail(p, "expected a non-negative number");
        }
        return d;
    };
    auto nat_list = [&](const char* key, std::vector<std::size_t>& dst) {
        if (sp.contains(key)) {
            dst = R::list(sp.at(key), spp + "." + key, nat);
        }
    };
    cfg.space.datasets = R::list(R::need(sp, spp, "datasets"), spp + ".datasets", R::str);
    cfg.space.lookbacks = R::list(R::need(sp, spp, "lookback"), spp + ".lookback", nat);
    cfg.space.horizons = R::list(R::need(sp, spp, "horizon"), spp + ".horizon", nat);
    cfg.space.d_models = R::list(R::need(sp, spp, "d_model"), spp + ".d_model", nat);
    cfg.space.lrs = R::list(R::need(sp, spp, "lr"), spp + ".lr", pos_real);
    nat_list("layers", cfg.space.layers);
    nat_list("kernel", cfg.space.kernels);
    nat_list("ms_levels", cfg.space.ms_levels);
    nat_list("ms_factor", cfg.space.ms_factors);
    nat_list("cycle_len", cfg.space.cycle_lens);
    nat_list("patch_len", cfg.space.patch_lens);
    nat_list("stride", cfg.space.strides);
    auto kinds = [&](const char* key, auto parse, auto& dst) {
        if (!sp.contains(key)) {
            return;
        }
        if (std::string(key) == to_string(cfg.stage)) {
            R::fail(spp + "." + key, "the audited stage cannot also be a condition dimension");
        }
        dst = R::list(
            sp.at(key), spp + "." + key,
            [&](const json& v, const std::string& p) {
                const auto s = R::str(v, p);
                const auto k = parse(s);
                if (!k) {
                    R::fail(p, std::string("unknown ") + key + " '" + s + "'");
                }
                return *k;
            },
            true);
    };
    kinds("embedding", parse_embedding_kind, cfg.space.embeddings);
    kinds("encoder", parse_encoder_kind, cfg.space.encoders);
    kinds("transform", parse_transform_kind, cfg.space.transforms);

    if (j.contains("fixed")) {
        const auto& fx = j.at("fixed");
        R::only_keys(fx, "config.fixed", {"seed", "batch", "epochs", "patience", "dropout", "max_steps"});
        auto& f = cfg.space.fixed;
        if (fx.contains("seed")) {
            f.seed = R::seed(fx.at("seed"), "config.fixed.seed");
        }
        if (fx.contains("batch")) {
            f.batch = R::natural(fx.at("batch"), "config.fixed.batch");
        }
        if (fx.contains("epochs")) {
            f.epochs = R::natural(fx.at("epochs"), "config.fixed.epochs");
        }
        if (fx.contains("patience")) {
            f.patience = R::natural(fx.at("patience"), "config.fixed.patience");
        }
        if (fx.contains("dropout")) {
            f.dropout = R::real(fx.at("dropout"), "config.fixed.dropout");
            if (f.dropout < 0.0 || f.dropout >= 1.0) {
                R::fail("config.fixed.dropout", "must lie in [0, 1)");
            }
        }
        if (fx.contains("max_steps")) {
            f.max_steps = R::natural(fx.at("max_steps"), "config.fixed.max_steps", true);
        }
    }
    cfg.K = R::natural(R::need(j, "config", "K"), "config.K");
    if (j.contains("strata") && R::str(j.at("strata"), "config.strata") != "dataset_horizon") {
        R::fail("config.strata", "only 'dataset_horizon' stratification is supported");
    }
    cfg.plan_seed = j.contains("plan_seed") ? R::seed(j.at("plan_seed"), "config.plan_seed") : 0;
    cfg.seeds = j.contains("seeds") ? R::list(j.at("seeds"), "config.seeds", R::seed)
                                    : std::vector<std::uint64_t>{cfg.space.fixed.seed};
    if (j.contains("output")) {
        cfg.output = R::str(j.at("output"), "config.output");
    }

    const auto& dss = R::need(j, "config", "datasets");
    if (!dss.is_object()) {
        R::fail("config.datasets", "expected an object mapping dataset ids to sources");
    }
    for (const auto& [id, src] : dss.items()) {
        const std::string p = "config.datasets." + id;
        R::only_keys(src, p, {"synthetic", "csv", "split"});
        DatasetSource ds;
        if (src.contains("synthetic") == src.contains("csv")) {
            R::fail(p, "give exactly one of 'synthetic' or 'csv'");
        }
        if (src.contains("synthetic")) {
            const auto& s = src.at("synthetic");
            const std::string q = p + ".synthetic";
            R::only_keys(s, q, {"length", "variates", "period", "harmonics", "trend", "noise", "seed", "frequency"});
            auto& y = ds.synthetic;
            if (s.contains("length")) y.length = R::natural(s.at("length"), q + ".length");
            if (s.contains("variates")) y.variates = R::natural(s.at("variates"), q + ".variates");
            if (s.contains("period")) y.period = R::natural(s.at("period"), q + ".period");
            if (s.contains("harmonics")) y.harmonics = R::natural(s.at("harmonics"), q + ".harmonics");
            if (s.contains("trend")) y.trend = R::real(s.at("trend"), q + ".trend");
            if (s.contains("noise")) y.noise = pos_real(s.at("noise"), q + ".noise");
            if (s.contains("seed")) y.seed = R::seed(s.at("seed"), q + ".seed");
            if (s.contains("frequency")) y.frequency = R::str(s.at("frequency"), q + ".frequency");
        } else {
            const auto& c = src.at("csv");
            const std::string q = p + ".csv";
            R::only_keys(c, q, {"path", "date_column"});
            ds.kind = DatasetSource::Kind::csv;
            ds.path = R::str(R::need(c, q, "path"), q + ".path");
            if (c.contains("date_column")) {
                if (!c.at("date_column").is_boolean()) {
                    R::fail(q + ".date_column", "expected true or false");
                }
                ds.date_column = c.at("date_column").get<bool>();
            }
        }
        if (src.contains("split")) {
            const auto& s = src.at("split");
            R::only_keys(s, p + ".split", {"train", "val"});
            const double tr = R::real(R::need(s, p + ".split", "train"), p + ".split.train");
            const double va = R::real(R::need(s, p + ".split", "val"), p + ".split.val");
            if (!(tr > 0.0 && va > 0.0 && tr + va < 1.0)) {
                R::fail(p + ".split", "need train > 0, val > 0 and train + val < 1");
            }
            ds.split = SplitPolicy::ratio(tr, va);
        }
        cfg.datasets.emplace(id, std::move(ds));
    }
    for (std::size_t i = 0; i < cfg.space.datasets.size(); ++i) {
        if (!cfg.datasets.count(cfg.space.datasets[i])) {
            R::fail("config.space.datasets[" + std::to_string(i) + "]",
                    "dataset '" + cfg.space.datasets[i] + "' has no entry under config.datasets");
        }
    }
    return cfg;
}

inline ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path.string() + "'");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_config(j, path.parent_path());
}

inline fs::path resolve_data_path(const ExperimentConfig& cfg, const std::string& path) {
    fs::path p(path);
    if (p.is_absolute()) {
        return p;
    }
    if (const char* root = std::getenv(data_root_env); root && *root) {
        return fs::path(root) / p;
    }
    return cfg.base_dir / p;
}

/// Raw series for one configured dataset, before splitting.
inline SeriesDataset load_source(const ExperimentConfig& cfg, const std::string& id) {
    const auto& src = cfg.datasets.at(id);
    if (src.kind == DatasetSource::Kind::synthetic) {
        return make_synthetic(src.synthetic, id);
    }
    const fs::path p = resolve_data_path(cfg, src.path);
    if (!fs::exists(p)) {
        throw Error("dataset '" + id + "': file '" + p.string() + "' not found (set " + data_root_env +
                    " or use an absolute path)");
    }
    return load_csv(p.string(), src.date_column, id);
}

/// Load, split and standardize every dataset the condition space references.
inline std::map<std::string, std::shared_ptr<const SeriesDataset>> load_datasets(const ExperimentConfig& cfg) {
    std::map<std::string, std::shared_ptr<const SeriesDataset>> out;
    for (const auto& id : cfg.space.datasets) {
        if (out.count(id)) {
            continue;
        }
        const auto& src = cfg.datasets.at(id);
        auto raw = load_source(cfg, id);
        auto split = apply_split(std::move(raw), src.split.value_or(SplitPolicy{}));
        out.emplace(id, std::make_shared<const SeriesDataset>(standardize(std::move(split)).first));
    }
    return out;
}

inline DatasetProvider provider_of(std::map<std::string, std::shared_ptr<const SeriesDataset>> datasets) {
    auto shared = std::make_shared<decltype(datasets)>(std::move(datasets));
    return [shared](const std::string& id) -> std::shared_ptr<const SeriesDataset> {
        const auto it = shared->find(id);
        return it == shared->end() ? nullptr : it->second;
    };
}

inline ExperimentPlan plan_for(const ExperimentConfig& cfg, std::optional<std::uint64_t> seed = std::nullopt) {
    EcSpace space = cfg.space;
    if (seed) {
        space.fixed.seed = *seed;
    }
    return build_plan(cfg.stage, cfg.variants, sample_ecs(space, cfg.K, cfg.plan_seed));
}

inline std::size_t default_parallelism() {
    return std::max<unsigned>(1, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------
// Commands. Each prints to `out` and returns a process exit status.
// ---------------------------------------------------------------------------

struct RunSummary {
    std::string config_hash;
    std::string plan_hash;
    fs::path log_path;
    std::size_t executed = 0;
    std::size_t resumed = 0;
    std::size_t ok = 0;
    std::size_t diverged = 0;
    std::size_t failed = 0;
    std::vector<RunRecord> records;
};

inline RunSummary run_plan(const ExperimentConfig& cfg, const ExperimentPlan& plan, const fs::path& out_dir,
                           std::size_t parallelism, std::ostream& out, bool verbose = true) {
    auto datasets = load_datasets(cfg);
    fs::create_directories(out_dir);
    {
        std::ofstream pf(out_dir / "plan.json");
        json pj = {{"plan_hash", plan.hash},
                   {"config_hash", cfg.hash()},
                   {"stage", to_string(plan.stage)},
                   {"variants", plan.variants},
                   {"ecs", json::array()}};
        for (const auto& ec : plan.ecs) {
            pj["ecs"].push_back(ec.to_json());
        }
        pf << pj.dump(2) << "\n";
    }
    RunSummary s;
    s.config_hash = cfg.hash();
    s.plan_hash = plan.hash;
    s.log_path = out_dir / "runs.jsonl";
    ExecuteOptions opt;
    opt.parallelism = parallelism;
    opt.log_path = s.log_path;
    if (verbose) {
        opt.on_record = [&out](const RunRecord& r, std::size_t done, std::size_t total) {
            out << "[" << done << "/" << total << "] " << r.eo << " " << r.ec_hash << " " << to_string(r.status);
            if (r.ok()) {
                out << " mse=" << std::setprecision(6) << r.test_mse << " epochs=" << r.stopped_epoch;
            } else {
                out << " (" << r.reason << ")";
            }
            out << " " << std::fixed << std::setprecision(2) << r.wall_seconds << "s" << std::defaultfloat << "\n";
            out.flush();
        };
    }
    auto res = execute(plan, provider_of(std::move(datasets)), opt);
    s.executed = res.executed;
    s.resumed = res.resumed;
    for (const auto& r : res.records) {
        (r.status == RunStatus::ok ? s.ok : r.status == RunStatus::diverged ? s.diverged : s.failed)++;
    }
    s.records = std::move(res.records);
    return s;
}

inline fs::path output_dir(const ExperimentConfig& cfg, const std::optional<fs::path>& out_override) {
    if (out_override) {
        return *out_override;
    }
    const fs::path p(cfg.output);
    return p.is_absolute() ? p : cfg.base_dir / p;
}

inline int cmd_run(const fs::path& config_path, std::size_t parallelism, const std::optional<fs::path>& out_dir,
                   std::ostream& out) {
    const auto cfg = load_config(config_path);
    out << "config " << cfg.name << " hash " << cfg.hash() << "\n";
    const auto plan = plan_for(cfg);
    out << "plan " << plan.hash << ": " << plan.variants.size() << " variants x " << plan.ecs.size()
        << " conditions = " << plan.runs.size() << " runs\n";
    const auto s = run_plan(cfg, plan, output_dir(cfg, out_dir), parallelism, out);
    out << "executed " << s.executed << ", resumed " << s.resumed << "; ok " << s.ok << ", diverged " << s.diverged
        << ", failed " << s.failed << "\nlog " << s.log_path.string() << "\n";
    return 0;
}

inline int cmd_report(const fs::path& log_path, const std::string& group_by, const std::optional<fs::path>& table_path,
                      std::ostream& out) {
    std::size_t skipped = 0;
    const auto records = read_run_log(log_path, &skipped);
    const auto rep = report(records, group_by);
    out << rep.text();
    if (skipped > 0) {
        out << "skipped " << skipped << " malformed log lines\n";
    }
    out << "\nbest configurations (min test MSE):\n";
    std::map<std::string, std::vector<RunRecord>, NaturalLess> groups;
    for (const auto& r : records) {
        groups[group_value(r, group_by)].push_back(r);
    }
    for (const auto& [g, rs] : groups) {
        try {
            const auto b = best_config(rs, g);
            out << "  " << g << ": " << std::setprecision(6) << b.loss << " " << b.ec.canonical() << "\n";
        } catch (const InsufficientDataError&) {
            out << "  " << g << ": no successful runs\n";
        }
    }
    const fs::path tp = table_path ? *table_path : log_path.parent_path() / ("report-" + group_by + ".csv");
    std::ofstream tf(tp);
    if (!tf) {
        throw Error("cannot write report table '" + tp.string() + "'");
    }
    tf << rep.table_csv();
    out << "table " << tp.string() << "\n";
    return 0;
}

inline int cmd_significance(const fs::path& log_path, const std::string& a, const std::string& b, double alpha,
                            std::ostream& out) {
    const auto records = read_run_log(log_path);
    out << significance(records, a, b, alpha).text();
    return 0;
}

struct MultiseedColumn {
    std::uint64_t seed = 0;
    std::string plan_hash;
    Report report;
};

/// Per-seed pooled mu / sigma per group, side by side, plus the largest
/// cross-seed spread of mu for each group.
inline std::string multiseed_table(const std::vector<MultiseedColumn>& cols) {
    std::ostringstream out;
    char buf[64];
    out << std::left << std::setw(16) << "group";
    for (const auto& c : cols) {
        std::snprintf(buf, sizeof(buf), "%12s %12s", ("mu@" + std::to_string(c.seed)).c_str(),
                      ("sigma@" + std::to_string(c.seed)).c_str());
        out << " " << buf;
    }
    out << " " << std::right << std::setw(12) << "max|dmu|" << "\n";
    for (const auto& g : cols.front().report.groups) {
        out << std::left << std::setw(16) << g << std::right;
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (const auto& c : cols) {
            const auto& cell = c.report.cell("all", "avg", g);
            std::snprintf(buf, sizeof(buf), "%12.6f %12.6f", cell.mu, cell.sigma);
            out << " " << buf;
            lo = std::min(lo, cell.mu);
            hi = std::max(hi, cell.mu);
        }
        std::snprintf(buf, sizeof(buf), "%12.6f", hi - lo);
        out << " " << buf << "\n";
    }
    return out.str();
}

inline std::vector<MultiseedColumn> run_multiseed(const ExperimentConfig& cfg, const fs::path& out_dir,
                                                  std::size_t parallelism, std::ostream& out) {
    if (cfg.seeds.size() < 2) {
        throw ConfigError("config.seeds: multiseed needs at least two seeds");
    }
    std::vector<MultiseedColumn> cols;
    for (auto seed : cfg.seeds) {
        const auto plan = plan_for(cfg, seed);
        out << "seed " << seed << ": plan " << plan.hash << ", " << plan.runs.size() << " runs\n";
        const auto s = run_plan(cfg, plan, out_dir / ("seed-" + std::to_string(seed)), parallelism, out, false);
        out << "  executed " << s.executed << ", resumed " << s.resumed << "; ok " << s.ok << ", diverged "
            << s.diverged << ", failed " << s.failed << "\n";
        cols.push_back({seed, plan.hash, report(s.records)});
    }
    return cols;
}

inline int cmd_multiseed(const fs::path& config_path, std::size_t parallelism,
                         const std::optional<fs::path>& out_override, std::ostream& out) {
    const auto cfg = load_config(config_path);
    out << "config " << cfg.name << " hash " << cfg.hash() << "\n";
    const auto dir = output_dir(cfg, out_override);
    const auto cols = run_multiseed(cfg, dir, parallelism, out);
    const std::string table = multiseed_table(cols);
    out << "\n" << table;
    std::ofstream(dir / "multiseed.txt") << table;
    return 0;
}

inline int cmd_validate_config(const fs::path& config_path, std::ostream& out) {
    const auto cfg = load_config(config_path);
    const auto plan = plan_for(cfg);
    out << "config " << cfg.name << " hash " << cfg.hash() << " is valid\n"
        << "stage " << to_string(cfg.stage) << ", " << cfg.variants.size() << " variants, K = " << cfg.K << ", "
        << cfg.space.datasets.size() * cfg.space.horizons.size() << " strata of "
        << cfg.space.stratum_cardinality() << " grid points\n"
        << "plan " << plan.hash << ": " << plan.runs.size() << " runs\n";
    for (const auto& id : cfg.space.datasets) {
        const auto& src = cfg.datasets.at(id);
        if (src.kind == DatasetSource::Kind::csv) {
            const auto p = resolve_data_path(cfg, src.path);
            out << "dataset " << id << ": " << p.string() << (fs::exists(p) ? "" : " (missing)") << "\n";
        } else {
            out << "dataset " << id << ": synthetic, length " << src.synthetic.length << "\n";
        }
    }
    return 0;
}

inline int cmd_gen_synthetic(const SyntheticSpec& spec, const fs::path& path, std::ostream& out) {
    const auto ds = make_synthetic(spec);
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream f(path);
    if (!f) {
        throw Error("cannot write '" + path.string() + "'");
    }
    write_csv(f, ds);
    out << "wrote " << ds.time_len << " x " << ds.variates << " series to " << path.string() << "\n";
    return 0;
}

} // namespace combts
