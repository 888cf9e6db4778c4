#pragma once

#include "combts/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

namespace combts {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Stages under audit
// ---------------------------------------------------------------------------

enum class Stage { embedding, encoder, transform };

inline const char* to_string(Stage s) {
    switch (s) {
    case Stage::embedding: return "embedding";
    case Stage::encoder: return "encoder";
    case Stage::transform: return "transform";
    }
    return "?";
}

inline std::optional<Stage> parse_stage(std::string_view s) {
    for (auto st : {Stage::embedding, Stage::encoder, Stage::transform}) {
        if (s == to_string(st)) {
            return st;
        }
    }
    return std::nullopt;
}

inline bool is_valid_variant(Stage stage, std::string_view v) {
    switch (stage) {
    case Stage::embedding: return parse_embedding_kind(v).has_value();
    case Stage::encoder: return parse_encoder_kind(v).has_value();
    case Stage::transform: return parse_transform_kind(v).has_value();
    }
    return false;
}

inline std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Evaluation conditions
// ---------------------------------------------------------------------------

/// One sampled point of the condition space. Stage fields left unset are
/// either under audit or filled with pipeline defaults.
struct EvaluationCondition {
    std::string dataset;
    std::size_t lookback = 96;
    std::size_t horizon = 96;
    std::size_t layers = 1;
    std::size_t d_model = 64;
    double lr = 1e-3;
    std::uint64_t seed = 2025;
    std::optional<EmbeddingKind> embedding;
    std::optional<EncoderKind> encoder;
    std::optional<TransformKind> transform;
    std::size_t kernel = 25;
    std::size_t ms_levels = 3;
    std::size_t ms_factor = 2;
    std::size_t cycle_len = 24;
    std::size_t patch_len = 16;
    std::size_t stride = 8;
    std::size_t batch = 32;
    std::size_t epochs = 30;
    std::size_t patience = 3;
    double dropout = 0.1;
    std::size_t max_steps = 0;

    json to_json() const {
        json j = {{"dataset", dataset},     {"lookback", lookback},   {"horizon", horizon},
                  {"layers", layers},       {"d_model", d_model},     {"lr", lr},
                  {"seed", seed},           {"kernel", kernel},       {"ms_levels", ms_levels},
                  {"ms_factor", ms_factor}, {"cycle_len", cycle_len}, {"patch_len", patch_len},
                  {"stride", stride},       {"batch", batch},         {"epochs", epochs},
                  {"patience", patience},   {"dropout", dropout},     {"max_steps", max_steps}};
        j["embedding"] = embedding ? json(to_string(*embedding)) : json(nullptr);
        j["encoder"] = encoder ? json(to_string(*encoder)) : json(nullptr);
        j["transform"] = transform ? json(to_string(*transform)) : json(nullptr);
        return j;
    }

    static EvaluationCondition from_json(const json& j) {
        EvaluationCondition ec;
        try {
            ec.dataset = j.at("dataset").get<std::string>();
            ec.lookback = j.at("lookback").get<std::size_t>();
            ec.horizon = j.at("horizon").get<std::size_t>();
            ec.layers = j.at("layers").get<std::size_t>();
            ec.d_model = j.at("d_model").get<std::size_t>();
            ec.lr = j.at("lr").get<double>();
            ec.seed = j.at("seed").get<std::uint64_t>();
            ec.kernel = j.at("kernel").get<std::size_t>();
            ec.ms_levels = j.at("ms_levels").get<std::size_t>();
            ec.ms_factor = j.at("ms_factor").get<std::size_t>();
            ec.cycle_len = j.at("cycle_len").get<std::size_t>();
            ec.patch_len = j.at("patch_len").get<std::size_t>();
            ec.stride = j.at("stride").get<std::size_t>();
            ec.batch = j.at("batch").get<std::size_t>();
            ec.epochs = j.at("epochs").get<std::size_t>();
            ec.patience = j.at("patience").get<std::size_t>();
            ec.dropout = j.at("dropout").get<double>();
            ec.max_steps = j.value("max_steps", std::size_t{0});
            auto stage_field = [&j](const char* key, auto parse) {
                using R = decltype(parse(std::string_view{}));
                const auto& v = j.at(key);
                if (v.is_null()) {
                    return R{};
                }
                auto k = parse(v.get<std::string>());
                if (!k) {
                    throw ParseError(std::string("unknown ") + key + " '" + v.get<std::string>() + "'");
                }
                return k;
            };
            ec.embedding = stage_field("embedding", parse_embedding_kind);
            ec.encoder = stage_field("encoder", parse_encoder_kind);
            ec.transform = stage_field("transform", parse_transform_kind);
        } catch (const json::exception& e) {
            throw ParseError(std::string("malformed evaluation condition: ") + e.what());
        }
        return ec;
    }

    /// Sorted-key compact JSON; the identity used for pairing and hashing.
    std::string canonical() const { return to_json().dump(); }
    std::uint64_t hash() const { return fnv1a64(canonical()); }
    std::string hash_hex() const { return hex64(hash()); }

    bool operator==(const EvaluationCondition& o) const { return canonical() == o.canonical(); }
};

/// Settings shared by every condition of one experiment.
struct EcFixed {
    std::uint64_t seed = 2025;
    std::size_t batch = 32;
    std::size_t epochs = 30;
    std::size_t patience = 3;
    double dropout = 0.1;
    std::size_t max_steps = 0;
};

/// Candidate lists per dimension. An empty stage list leaves that stage unset.
struct EcSpace {
    std::vector<std::string> datasets;
    std::vector<std::size_t> lookbacks;
    std::vector<std::size_t> horizons;
    std::vector<std::size_t> layers{1};
    std::vector<std::size_t> d_models;
    std::vector<double> lrs;
    std::vector<EmbeddingKind> embeddings;
    std::vector<EncoderKind> encoders;
    std::vector<TransformKind> transforms;
    std::vector<std::size_t> kernels{25};
    std::vector<std::size_t> ms_levels{3};
    std::vector<std::size_t> ms_factors{2};
    std::vector<std::size_t> cycle_lens{24};
    std::vector<std::size_t> patch_lens{16};
    std::vector<std::size_t> strides{8};
    EcFixed fixed;

    void validate() const {
        auto need = [](bool nonempty, const char* name) {
            if (!nonempty) {
                throw ConfigError(std::string("condition space list '") + name + "' is empty");
            }
        };
        need(!datasets.empty(), "datasets");
        need(!lookbacks.empty(), "lookbacks");
        need(!horizons.empty(), "horizons");
        need(!layers.empty(), "layers");
        need(!d_models.empty(), "d_models");
        need(!lrs.empty(), "lrs");
        need(!kernels.empty(), "kernels");
        need(!ms_levels.empty(), "ms_levels");
        need(!ms_factors.empty(), "ms_factors");
        need(!cycle_lens.empty(), "cycle_lens");
        need(!patch_lens.empty(), "patch_lens");
        need(!strides.empty(), "strides");
    }

    /// Radices of the non-stratum dimensions, in decoding order.
    std::vector<std::size_t> grid_radices() const {
        auto r = [](std::size_t n) { return std::max<std::size_t>(n, 1); };
        return {lookbacks.size(),  layers.size(),       d_models.size(),   lrs.size(),
                r(embeddings.size()), r(encoders.size()), r(transforms.size()), kernels.size(),
                ms_levels.size(),  ms_factors.size(),   cycle_lens.size(), patch_lens.size(),
                strides.size()};
    }

    /// Number of conditions inside one (dataset, horizon) stratum.
    std::size_t stratum_cardinality() const {
        std::size_t n = 1;
        for (auto r : grid_radices()) {
            n *= r;
        }
        return n;
    }

    EvaluationCondition decode(const std::string& dataset, std::size_t horizon, std::size_t index) const {
        const auto radices = grid_radices();
        std::array<std::size_t, 13> digit{};
        for (std::size_t i = radices.size(); i-- > 0;) {
            digit[i] = index % radices[i];
            index /= radices[i];
        }
        EvaluationCondition ec;
        ec.dataset = dataset;
        ec.horizon = horizon;
        ec.lookback = lookbacks[digit[0]];
        ec.layers = layers[digit[1]];
        ec.d_model = d_models[digit[2]];
        ec.lr = lrs[digit[3]];
        if (!embeddings.empty()) {
            ec.embedding = embeddings[digit[4]];
        }
        if (!encoders.empty()) {
            ec.encoder = encoders[digit[5]];
        }
        if (!transforms.empty()) {
            ec.transform = transforms[digit[6]];
        }
        ec.kernel = kernels[digit[7]];
        ec.ms_levels = ms_levels[digit[8]];
        ec.ms_factor = ms_factors[digit[9]];
        ec.cycle_len = cycle_lens[digit[10]];
        ec.patch_len = patch_lens[digit[11]];
        ec.stride = strides[digit[12]];
        ec.seed = fixed.seed;
        ec.batch = fixed.batch;
        ec.epochs = fixed.epochs;
        ec.patience = fixed.patience;
        ec.dropout = fixed.dropout;
        ec.max_steps = fixed.max_steps;
        return ec;
    }
};

/// Stratified sample: K / (|datasets| * |horizons|) conditions per
/// (dataset, horizon) stratum, drawn uniformly without replacement from the
/// grid of the remaining dimensions. Output is stratum-major, grid order
/// within a stratum.
inline std::vector<EvaluationCondition> sample_ecs(const EcSpace& space, std::size_t K, std::uint64_t seed) {
    space.validate();
    const std::size_t strata = space.datasets.size() * space.horizons.size();
    if (K == 0 || K % strata != 0) {
        throw InfeasibleSampleError("K = " + std::to_string(K) + " does not split evenly over " +
                                    std::to_string(strata) + " (dataset, horizon) strata");
    }
    const std::size_t quota = K / strata;
    const std::size_t G = space.stratum_cardinality();
    if (quota > G) {
        throw InfeasibleSampleError("per-stratum quota " + std::to_string(quota) +
                                    " exceeds the stratum grid cardinality " + std::to_string(G));
    }
    std::vector<EvaluationCondition> out;
    out.reserve(K);
    for (const auto& ds : space.datasets) {
        for (auto h : space.horizons) {
            Rng rng(mix_seed({seed, fnv1a64(ds), static_cast<std::uint64_t>(h)}));
            // Partial Fisher-Yates over [0, G) with a sparse swap table.
            std::unordered_map<std::size_t, std::size_t> swapped;
            auto slot = [&swapped](std::size_t i) {
                auto it = swapped.find(i);
                return it == swapped.end() ? i : it->second;
            };
            std::vector<std::size_t> picked;
            picked.reserve(quota);
            for (std::size_t i = 0; i < quota; ++i) {
                const std::size_t j = i + static_cast<std::size_t>(rng.below(G - i));
                const std::size_t vi = slot(i);
                const std::size_t vj = slot(j);
                swapped[j] = vi;
                picked.push_back(vj);
            }
            std::sort(picked.begin(), picked.end());
            for (auto idx : picked) {
                out.push_back(space.decode(ds, h, idx));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

struct RunSpec {
    std::size_t eo_index = 0;
    std::size_t ec_index = 0;
    std::string key;
};

/// EO x EC run matrix. Every variant sees the identical EC list.
struct ExperimentPlan {
    Stage stage = Stage::encoder;
    std::vector<std::string> variants;
    std::vector<EvaluationCondition> ecs;
    std::vector<RunSpec> runs; // EO-major
    std::string hash;

    const EvaluationCondition& ec(const RunSpec& r) const { return ecs[r.ec_index]; }
    const std::string& variant(const RunSpec& r) const { return variants[r.eo_index]; }
};

/// Covers the stage, the ordered variant list and the EC set (order-free).
inline std::string plan_hash(Stage stage, const std::vector<std::string>& variants,
                             const std::vector<EvaluationCondition>& ecs) {
    std::vector<std::string> canon;
    canon.reserve(ecs.size());
    for (const auto& ec : ecs) {
        canon.push_back(ec.canonical());
    }
    std::sort(canon.begin(), canon.end());
    json j;
    j["stage"] = to_string(stage);
    j["variants"] = variants;
    j["ecs"] = canon;
    return hex64(fnv1a64(j.dump()));
}

inline std::string run_key(const std::string& plan_hash, const std::string& variant, const EvaluationCondition& ec) {
    return plan_hash + ":" + variant + ":" + ec.hash_hex();
}

inline ExperimentPlan build_plan(Stage stage, std::vector<std::string> variants, std::vector<EvaluationCondition> ecs) {
    if (variants.size() < 2) {
        throw PlanError("a plan needs at least two variants of the audited stage");
    }
    if (ecs.empty()) {
        throw PlanError("a plan needs at least one evaluation condition");
    }
    std::set<std::string> seen_v;
    for (const auto& v : variants) {
        if (!is_valid_variant(stage, v)) {
            throw PlanError(std::string("unknown ") + to_string(stage) + " variant '" + v + "'");
        }
        if (!seen_v.insert(v).second) {
            throw PlanError("duplicate variant '" + v + "'");
        }
    }
    std::set<std::string> seen_ec;
    for (std::size_t i = 0; i < ecs.size(); ++i) {
        const auto& ec = ecs[i];
        const bool audited_set = (stage == Stage::embedding && ec.embedding) ||
                                 (stage == Stage::encoder && ec.encoder) ||
                                 (stage == Stage::transform && ec.transform);
        if (audited_set) {
            throw PlanError(std::string("condition ") + std::to_string(i) + " fixes the audited " +
                            to_string(stage) + " stage");
        }
        if (!seen_ec.insert(ec.canonical()).second) {
            throw PlanError("duplicate evaluation condition " + ec.hash_hex() + " at index " + std::to_string(i));
        }
    }
    ExperimentPlan plan;
    plan.stage = stage;
    plan.hash = plan_hash(stage, variants, ecs);
    plan.variants = std::move(variants);
    plan.ecs = std::move(ecs);
    for (std::size_t v = 0; v < plan.variants.size(); ++v) {
        for (std::size_t c = 0; c < plan.ecs.size(); ++c) {
            plan.runs.push_back({v, c, run_key(plan.hash, plan.variants[v], plan.ecs[c])});
        }
    }
    return plan;
}

/// The pipeline a (stage variant, condition) pair denotes. Unset stages fall
/// back to patch embedding, identity encoder and no structural prior.
inline PipelineConfig pipeline_config(Stage stage, const std::string& variant, const EvaluationCondition& ec,
                                      std::size_t variates) {
    PipelineConfig cfg;
    cfg.lookback = ec.lookback;
    cfg.horizon = ec.horizon;
    cfg.variates = variates;
    cfg.embedding.kind = ec.embedding.value_or(EmbeddingKind::patch);
    cfg.encoder.kind = ec.encoder.value_or(EncoderKind::identity);
    cfg.transform.kind = ec.transform.value_or(TransformKind::none);
    switch (stage) {
    case Stage::embedding: cfg.embedding.kind = *parse_embedding_kind(variant); break;
    case Stage::encoder: cfg.encoder.kind = *parse_encoder_kind(variant); break;
    case Stage::transform: cfg.transform.kind = *parse_transform_kind(variant); break;
    }
    cfg.embedding.d_model = ec.d_model;
    cfg.embedding.patch_len = ec.patch_len;
    cfg.embedding.stride = ec.stride;
    cfg.encoder.layers = ec.layers;
    cfg.encoder.dropout = ec.dropout;
    cfg.transform.kernel = ec.kernel;
    cfg.transform.levels = ec.ms_levels;
    cfg.transform.factor = ec.ms_factor;
    cfg.transform.cycle_len = ec.cycle_len;
    return cfg;
}

/// Condition fields that have no effect on the given pipeline. They stay in
/// the condition (pairing is unchanged) and are only flagged.
inline std::vector<std::string> inert_dimensions(const PipelineConfig& cfg) {
    std::vector<std::string> out;
    if (!cfg.embedding.uses_d_model()) {
        out.emplace_back("d_model");
    }
    if (cfg.embedding.kind != EmbeddingKind::patch) {
        out.emplace_back("patch_len");
        out.emplace_back("stride");
    }
    if (cfg.encoder.kind == EncoderKind::identity) {
        out.emplace_back("layers");
        out.emplace_back("dropout");
    }
    if (cfg.transform.kind != TransformKind::trend_seasonal) {
        out.emplace_back("kernel");
    }
    if (cfg.transform.kind != TransformKind::multiscale) {
        out.emplace_back("ms_levels");
        out.emplace_back("ms_factor");
    }
    if (cfg.transform.kind != TransformKind::cycle) {
        out.emplace_back("cycle_len");
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::uint64_t run_seed(const std::string& variant, const EvaluationCondition& ec) {
    return mix_seed({ec.seed, fnv1a64(variant), ec.hash()});
}

// ---------------------------------------------------------------------------
// Run records and the run log
// ---------------------------------------------------------------------------

enum class RunStatus { ok, diverged, failed };

inline const char* to_string(RunStatus s) {
    switch (s) {
    case RunStatus::ok: return "ok";
    case RunStatus::diverged: return "diverged";
    case RunStatus::failed: return "failed";
    }
    return "?";
}

inline RunStatus parse_run_status(std::string_view s) {
    if (s == "ok") {
        return RunStatus::ok;
    }
    if (s == "diverged") {
        return RunStatus::diverged;
    }
    if (s == "failed") {
        return RunStatus::failed;
    }
    throw ParseError("unknown run status '" + std::string(s) + "'");
}

struct RunRecord {
    std::string plan_hash;
    std::string key;
    std::string stage;
    std::string eo;
    EvaluationCondition ec;
    std::string ec_hash;
    RunStatus status = RunStatus::failed;
    double test_mse = std::numeric_limits<double>::infinity();
    double test_mae = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::size_t stopped_epoch = 0;
    std::size_t steps = 0;
    std::size_t param_count = 0;
    std::string token_axis;
    std::vector<std::string> inert;
    std::vector<double> train_curve;
    std::vector<double> val_curve;
    double wall_seconds = 0.0;
    std::uint64_t run_seed = 0;
    std::string reason;

    bool ok() const noexcept { return status == RunStatus::ok; }

    json to_json() const {
        auto loss = [this](double v) { return ok() ? json(v) : json(nullptr); };
        return {{"plan_hash", plan_hash},
                {"key", key},
                {"stage", stage},
                {"eo", eo},
                {"ec", ec.to_json()},
                {"ec_hash", ec_hash},
                {"status", to_string(status)},
                {"test_mse", loss(test_mse)},
                {"test_mae", loss(test_mae)},
                {"best_epoch", best_epoch},
                {"stopped_epoch", stopped_epoch},
                {"steps", steps},
                {"param_count", param_count},
                {"token_axis", token_axis},
                {"inert", inert},
                {"train_curve", train_curve},
                {"val_curve", val_curve},
                {"wall_seconds", wall_seconds},
                {"run_seed", run_seed},
                {"reason", reason}};
    }

    static RunRecord from_json(const json& j) {
        RunRecord r;
        try {
            r.plan_hash = j.at("plan_hash").get<std::string>();
            r.key = j.at("key").get<std::string>();
            r.stage = j.at("stage").get<std::string>();
            r.eo = j.at("eo").get<std::string>();
            r.ec = EvaluationCondition::from_json(j.at("ec"));
            r.ec_hash = j.at("ec_hash").get<std::string>();
            r.status = parse_run_status(j.at("status").get<std::string>());
            if (r.ok()) {
                r.test_mse = j.at("test_mse").get<double>();
                r.test_mae = j.at("test_mae").get<double>();
            }
            r.best_epoch = j.at("best_epoch").get<std::size_t>();
            r.stopped_epoch = j.at("stopped_epoch").get<std::size_t>();
            r.steps = j.at("steps").get<std::size_t>();
            r.param_count = j.at("param_count").get<std::size_t>();
            r.token_axis = j.at("token_axis").get<std::string>();
            r.inert = j.at("inert").get<std::vector<std::string>>();
            r.train_curve = j.at("train_curve").get<std::vector<double>>();
            r.val_curve = j.at("val_curve").get<std::vector<double>>();
            r.wall_seconds = j.at("wall_seconds").get<double>();
            r.run_seed = j.at("run_seed").get<std::uint64_t>();
            r.reason = j.at("reason").get<std::string>();
        } catch (const json::exception& e) {
            throw ParseError(std::string("malformed run record: ") + e.what());
        }
        if (r.ok() && (!std::isfinite(r.test_mse) || !std::isfinite(r.test_mae))) {
            throw ParseError("run record " + r.key + " is ok but has non-finite losses");
        }
        return r;
    }
};

/// Read every well-formed record of a line-delimited log. Lines that fail to
/// parse (for example a write cut short by an interrupt) are skipped.
inline std::vector<RunRecord> read_run_log(const std::filesystem::path& path, std::size_t* skipped = nullptr) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open run log '" + path.string() + "'");
    }
    std::vector<RunRecord> out;
    std::size_t bad = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        try {
            out.push_back(RunRecord::from_json(json::parse(line)));
        } catch (const std::exception&) {
            ++bad;
        }
    }
    if (skipped) {
        *skipped = bad;
    }
    return out;
}

/// Append-only, line-atomic writer shared by the worker pool.
class RunLog {
public:
    explicit RunLog(const std::filesystem::path& path) : path_(path) {
        if (path.has_parent_path()) {
            std::filesystem::create_directories(path.parent_path());
        }
        bool needs_newline = false;
        if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
            std::ifstream in(path, std::ios::binary);
            in.seekg(-1, std::ios::end);
            needs_newline = in.get() != '\n';
        }
        out_.open(path, std::ios::app | std::ios::binary);
        if (!out_) {
            throw Error("cannot open run log '" + path.string() + "' for appending");
        }
        if (needs_newline) {
            out_ << '\n';
            out_.flush();
        }
    }

    void append(const RunRecord& r) {
        const std::string line = r.to_json().dump() + "\n";
        std::lock_guard<std::mutex> lock(mu_);
        out_.write(line.data(), static_cast<std::streamsize>(line.size()));
        out_.flush();
        if (!out_) {
            throw Error("write to run log '" + path_.string() + "' failed");
        }
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

/// Maps a dataset id to its split, standardized series.
using DatasetProvider = std::function<std::shared_ptr<const SeriesDataset>(const std::string&)>;

/// Assemble, train and evaluate one cell of the run matrix. Failures are
/// returned as records, never thrown.
inline RunRecord run_one(const ExperimentPlan& plan, const RunSpec& spec, const DatasetProvider& datasets) {
    const auto& ec = plan.ec(spec);
    const auto& variant = plan.variant(spec);
    RunRecord r;
    r.plan_hash = plan.hash;
    r.key = spec.key;
    r.stage = to_string(plan.stage);
    r.eo = variant;
    r.ec = ec;
    r.ec_hash = ec.hash_hex();
    r.run_seed = run_seed(variant, ec);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const auto ds = datasets(ec.dataset);
        if (!ds) {
            throw Error("unknown dataset '" + ec.dataset + "'");
        }
        const PipelineConfig cfg = pipeline_config(plan.stage, variant, ec, ds->variates);
        r.inert = inert_dimensions(cfg);
        Rng rng(r.run_seed);
        Model model(cfg, rng);
        r.param_count = model.parameter_count();
        r.token_axis = to_string(model.token_axis());
        TrainOptions opt;
        opt.batch_size = ec.batch;
        opt.epochs = ec.epochs;
        opt.patience = ec.patience;
        opt.adam.lr = ec.lr;
        opt.max_steps = ec.max_steps;
        const auto out = train(model, *ds, opt, rng);
        r.status = RunStatus::ok;
        r.test_mse = out.test_mse;
        r.test_mae = out.test_mae;
        r.best_epoch = out.best_epoch;
        r.stopped_epoch = out.stopped_epoch;
        r.steps = out.steps;
        r.train_curve = out.train_loss;
        r.val_curve = out.val_loss;
    } catch (const DivergedError& e) {
        r.status = RunStatus::diverged;
        r.reason = e.what();
    } catch (const std::exception& e) {
        r.status = RunStatus::failed;
        r.reason = e.what();
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

struct ExecuteOptions {
    std::size_t parallelism = 1;
    std::optional<std::filesystem::path> log_path;
    std::function<void(const RunRecord&, std::size_t done, std::size_t total)> on_record;
};

struct ExecuteResult {
    std::vector<RunRecord> records; // plan order
    std::size_t executed = 0;
    std::size_t resumed = 0;
};

/// Run every pending cell of the plan on a pool of workers. With a log path,
/// records already logged under this plan hash are reused, not recomputed.
inline ExecuteResult execute(const ExperimentPlan& plan, const DatasetProvider& datasets,
                             const ExecuteOptions& opt = {}) {
    ExecuteResult res;
    res.records.resize(plan.runs.size());
    std::vector<bool> have(plan.runs.size(), false);
    std::unique_ptr<RunLog> log;
    if (opt.log_path) {
        if (std::filesystem::exists(*opt.log_path)) {
            std::unordered_map<std::string, std::size_t> index;
            for (std::size_t i = 0; i < plan.runs.size(); ++i) {
                index.emplace(plan.runs[i].key, i);
            }
            for (auto& r : read_run_log(*opt.log_path)) {
                if (r.plan_hash != plan.hash) {
                    throw PlanError("run log '" + opt.log_path->string() + "' belongs to plan " + r.plan_hash +
                                    ", not " + plan.hash);
                }
                const auto it = index.find(r.key);
                if (it != index.end() && !have[it->second]) {
                    have[it->second] = true;
                    res.records[it->second] = std::move(r);
                    ++res.resumed;
                }
            }
        }
        log = std::make_unique<RunLog>(*opt.log_path);
    }
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < plan.runs.size(); ++i) {
        if (!have[i]) {
            pending.push_back(i);
        }
    }
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{res.resumed};
    std::mutex cb_mu;
    std::exception_ptr fatal;
    auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= pending.size()) {
                return;
            }
            const std::size_t i = pending[k];
            RunRecord r = run_one(plan, plan.runs[i], datasets);
            try {
                if (log) {
                    log->append(r);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(cb_mu);
                if (!fatal) {
                    fatal = std::current_exception();
                }
                next.store(pending.size());
                return;
            }
            res.records[i] = std::move(r);
            const std::size_t n = done.fetch_add(1) + 1;
            if (opt.on_record) {
                std::lock_guard<std::mutex> lock(cb_mu);
                opt.on_record(res.records[i], n, plan.runs.size());
            }
        }
    };
    const std::size_t workers = std::max<std::size_t>(1, std::min(opt.parallelism, pending.size()));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    if (fatal) {
        std::rethrow_exception(fatal);
    }
    res.executed = pending.size();
    return res;
}

} // namespace combts
