#include "combts/protocol.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <unistd.h>

using namespace combts;
namespace fs = std::filesystem;

namespace {

EcSpace small_space() {
    EcSpace s;
    s.datasets = {"a", "b"};
    s.lookbacks = {96, 192};
    s.horizons = {96, 192, 336, 720};
    s.layers = {1, 2, 3};
    s.d_models = {64, 128};
    s.lrs = {1e-3, 1e-4};
    return s;
}

// Two short synthetic datasets plus one too short for T + P.
EcSpace exec_space() {
    EcSpace s;
    s.datasets = {"syn1", "syn2"};
    s.lookbacks = {12};
    s.horizons = {6};
    s.d_models = {4};
    s.lrs = {1e-2, 1e-3};
    s.patch_lens = {4};
    s.strides = {4};
    s.fixed.batch = 16;
    s.fixed.epochs = 2;
    s.fixed.patience = 1;
    s.fixed.dropout = 0.0;
    s.fixed.max_steps = 6;
    return s;
}

DatasetProvider provider() {
    auto make = [](std::size_t len, std::uint64_t seed, const char* name) {
        SyntheticSpec spec;
        spec.length = len;
        spec.variates = 2;
        spec.noise = 0.2;
        spec.seed = seed;
        return std::make_shared<const SeriesDataset>(standardize(apply_split(make_synthetic(spec, name))).first);
    };
    auto table = std::make_shared<std::map<std::string, std::shared_ptr<const SeriesDataset>>>();
    (*table)["syn1"] = make(200, 1, "syn1");
    (*table)["syn2"] = make(240, 2, "syn2");
    (*table)["tiny"] = make(60, 3, "tiny");
    return [table](const std::string& id) -> std::shared_ptr<const SeriesDataset> {
        const auto it = table->find(id);
        return it == table->end() ? nullptr : it->second;
    };
}

ExperimentPlan exec_plan() {
    return build_plan(Stage::encoder, {"identity", "mlp"}, sample_ecs(exec_space(), 4, 3));
}

// Scratch directories are removed when the test process exits.
struct TempDirs {
    std::vector<fs::path> dirs;
    ~TempDirs() {
        for (const auto& d : dirs) {
            std::error_code ec;
            fs::remove_all(d, ec);
        }
    }
};

fs::path temp_dir(const std::string& name) {
    static TempDirs registry;
    const fs::path p = fs::temp_directory_path() / ("combts-test-" + name + "-" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    registry.dirs.push_back(p);
    return p;
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        out.push_back(line);
    }
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// Evaluation conditions
// ---------------------------------------------------------------------------

TEST(Condition, JsonRoundTripPreservesCanonicalForm) {
    EvaluationCondition ec;
    ec.dataset = "ETTh1";
    ec.lookback = 336;
    ec.lr = 1e-4;
    ec.embedding = EmbeddingKind::variate;
    ec.transform = TransformKind::cycle;
    const auto back = EvaluationCondition::from_json(json::parse(ec.canonical()));
    EXPECT_EQ(back, ec);
    EXPECT_EQ(back.hash(), ec.hash());
    EXPECT_FALSE(back.encoder);
    EXPECT_EQ(back.embedding, EmbeddingKind::variate);
}

TEST(Condition, CanonicalFormHasSortedKeys) {
    const std::string c = EvaluationCondition{}.canonical();
    const auto j = json::parse(c);
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) {
        keys.push_back(it.key());
    }
    EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
    EXPECT_LT(c.find("\"batch\""), c.find("\"dataset\""));
}

TEST(Condition, HashIsSensitiveToEveryField) {
    const EvaluationCondition base;
    std::vector<EvaluationCondition> variants(10, base);
    variants[0].dataset = "x";
    variants[1].lookback = 97;
    variants[2].horizon = 97;
    variants[3].layers = 2;
    variants[4].d_model = 65;
    variants[5].lr = 2e-3;
    variants[6].seed = 1;
    variants[7].encoder = EncoderKind::mlp;
    variants[8].kernel = 13;
    variants[9].max_steps = 5;
    std::set<std::uint64_t> hashes{base.hash()};
    for (const auto& v : variants) {
        hashes.insert(v.hash());
    }
    EXPECT_EQ(hashes.size(), variants.size() + 1);
}

TEST(Condition, MalformedJsonIsParseError) {
    auto j = EvaluationCondition{}.to_json();
    j["encoder"] = "lstm";
    EXPECT_THROW(EvaluationCondition::from_json(j), ParseError);
    auto k = EvaluationCondition{}.to_json();
    k.erase("lookback");
    EXPECT_THROW(EvaluationCondition::from_json(k), ParseError);
    auto m = EvaluationCondition{}.to_json();
    m["lr"] = "fast";
    EXPECT_THROW(EvaluationCondition::from_json(m), ParseError);
}

// ---------------------------------------------------------------------------
// Stratified sampling
// ---------------------------------------------------------------------------

TEST(Sampling, PaperGridCardinality) {
    EcSpace s;
    s.datasets = {"ETTh1"};
    s.lookbacks = {96, 192, 336, 512};
    s.horizons = {96, 192, 336, 720};
    s.layers = {1, 2, 3};
    s.d_models = {64, 128, 256, 512};
    s.lrs = {1e-3, 1e-4};
    EXPECT_EQ(s.stratum_cardinality() * s.horizons.size(), 384u);
    EXPECT_EQ(sample_ecs(s, 100, 1).size(), 100u);
}

TEST(Sampling, FullGridIsEnumeratedOnce) {
    const auto s = small_space();
    const std::size_t G = s.stratum_cardinality();
    ASSERT_EQ(G, 24u);
    const auto ecs = sample_ecs(s, G * 8, 9);
    std::set<std::string> uniq;
    for (const auto& ec : ecs) {
        uniq.insert(ec.canonical());
    }
    EXPECT_EQ(uniq.size(), G * 8);
    for (std::size_t i = 0; i < G; ++i) {
        EXPECT_EQ(uniq.count(s.decode("a", 96, i).canonical()), 1u);
    }
}

TEST(Sampling, OneConditionPerStratum) {
    const auto ecs = sample_ecs(small_space(), 8, 4);
    std::map<std::pair<std::string, std::size_t>, int> count;
    for (const auto& ec : ecs) {
        ++count[{ec.dataset, ec.horizon}];
    }
    EXPECT_EQ(count.size(), 8u);
    for (const auto& [k, n] : count) {
        EXPECT_EQ(n, 1);
    }
}

TEST(Sampling, DeterministicPerSeedWithEqualStrataCounts) {
    const auto s = small_space();
    const auto a = sample_ecs(s, 40, 100);
    const auto b = sample_ecs(s, 40, 100);
    const auto c = sample_ecs(s, 40, 101);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    auto counts = [](const std::vector<EvaluationCondition>& v) {
        std::map<std::pair<std::string, std::size_t>, int> m;
        for (const auto& ec : v) {
            ++m[{ec.dataset, ec.horizon}];
        }
        return m;
    };
    EXPECT_EQ(counts(a), counts(c));
    for (const auto& [k, n] : counts(a)) {
        EXPECT_EQ(n, 5);
    }
}

TEST(Sampling, NoConditionRepeatsWithinAStratum) {
    const auto s = small_space();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto ecs = sample_ecs(s, 8 * 20, seed);
        std::set<std::string> uniq;
        for (const auto& ec : ecs) {
            uniq.insert(ec.canonical());
        }
        EXPECT_EQ(uniq.size(), ecs.size());
    }
}

TEST(Sampling, DrawsAreRoughlyUniformOverTheGrid) {
    // Frequency of each grid index over many seeds, quota 1 of 24.
    const auto s = small_space();
    std::map<std::string, int> freq;
    const int reps = 2400;
    for (int seed = 0; seed < reps; ++seed) {
        freq[sample_ecs(s, 8, static_cast<std::uint64_t>(seed))[0].canonical()]++;
    }
    EXPECT_EQ(freq.size(), 24u);
    double chi2 = 0.0;
    const double expect = reps / 24.0;
    for (const auto& [k, n] : freq) {
        chi2 += (n - expect) * (n - expect) / expect;
    }
    // 23 degrees of freedom; the 0.999 quantile is 49.7.
    EXPECT_LT(chi2, 49.7);
}

TEST(Sampling, InfeasibleRequestsAreReported) {
    const auto s = small_space();
    EXPECT_THROW(sample_ecs(s, 0, 1), InfeasibleSampleError);
    EXPECT_THROW(sample_ecs(s, 12, 1), InfeasibleSampleError);
    try {
        sample_ecs(s, 8 * 25, 1);
        FAIL() << "expected InfeasibleSampleError";
    } catch (const InfeasibleSampleError& e) {
        EXPECT_NE(std::string(e.what()).find("cardinality 24"), std::string::npos) << e.what();
    }
}

TEST(Sampling, EmptyListIsConfigError) {
    auto s = small_space();
    s.lrs.clear();
    EXPECT_THROW(sample_ecs(s, 8, 1), ConfigError);
}

TEST(Sampling, StageListsBecomeConditionFields) {
    auto s = small_space();
    s.embeddings = {EmbeddingKind::patch, EmbeddingKind::point};
    EXPECT_EQ(s.stratum_cardinality(), 48u);
    const auto ecs = sample_ecs(s, 8 * 48, 1);
    std::set<EmbeddingKind> seen;
    for (const auto& ec : ecs) {
        ASSERT_TRUE(ec.embedding);
        seen.insert(*ec.embedding);
        EXPECT_FALSE(ec.encoder);
        EXPECT_EQ(ec.seed, s.fixed.seed);
    }
    EXPECT_EQ(seen.size(), 2u);
}

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

TEST(Plan, ThreeEncodersTimes600Conditions) {
    EcSpace s;
    s.datasets = {"d1", "d2", "d3", "d4", "d5", "d6"};
    s.lookbacks = {96, 192, 336, 512};
    s.horizons = {96, 192, 336, 720};
    s.layers = {1, 2, 3};
    s.d_models = {64, 128, 256, 512};
    s.lrs = {1e-3, 1e-4};
    const auto plan = build_plan(Stage::encoder, {"transformer", "mlp", "identity"}, sample_ecs(s, 600, 2025));
    EXPECT_EQ(plan.runs.size(), 1800u);
    std::map<std::string, std::multiset<std::string>> per_eo;
    for (const auto& r : plan.runs) {
        per_eo[plan.variant(r)].insert(plan.ec(r).hash_hex());
    }
    ASSERT_EQ(per_eo.size(), 3u);
    EXPECT_EQ(per_eo["transformer"], per_eo["mlp"]);
    EXPECT_EQ(per_eo["mlp"], per_eo["identity"]);
}

TEST(Plan, OneConditionTwoVariants) {
    EvaluationCondition ec;
    ec.dataset = "x";
    const auto plan = build_plan(Stage::transform, {"none", "cycle"}, {ec});
    ASSERT_EQ(plan.runs.size(), 2u);
    EXPECT_EQ(plan.runs[0].ec_index, plan.runs[1].ec_index);
    EXPECT_NE(plan.runs[0].key, plan.runs[1].key);
    EXPECT_EQ(plan.runs[0].key, plan.hash + ":none:" + ec.hash_hex());
}

TEST(Plan, HashChangesIffConditionSetOrVariantsChange) {
    const auto ecs = sample_ecs(small_space(), 16, 1);
    const auto base = build_plan(Stage::encoder, {"identity", "mlp"}, ecs).hash;
    EXPECT_EQ(build_plan(Stage::encoder, {"identity", "mlp"}, ecs).hash, base);
    auto reordered = ecs;
    std::reverse(reordered.begin(), reordered.end());
    EXPECT_EQ(build_plan(Stage::encoder, {"identity", "mlp"}, reordered).hash, base);
    auto fewer = ecs;
    fewer.pop_back();
    EXPECT_NE(build_plan(Stage::encoder, {"identity", "mlp"}, fewer).hash, base);
    auto changed = ecs;
    changed[3].lr = 0.5;
    EXPECT_NE(build_plan(Stage::encoder, {"identity", "mlp"}, changed).hash, base);
    EXPECT_NE(build_plan(Stage::encoder, {"identity", "mlp", "spectral"}, ecs).hash, base);
    EXPECT_NE(build_plan(Stage::encoder, {"identity", "transformer"}, ecs).hash, base);
}

TEST(Plan, InvalidPlansArePlanErrors) {
    const auto ecs = sample_ecs(small_space(), 8, 1);
    EXPECT_THROW(build_plan(Stage::encoder, {"identity"}, ecs), PlanError);
    EXPECT_THROW(build_plan(Stage::encoder, {"identity", "lstm"}, ecs), PlanError);
    EXPECT_THROW(build_plan(Stage::encoder, {"identity", "identity"}, ecs), PlanError);
    EXPECT_THROW(build_plan(Stage::encoder, {"identity", "mlp"}, {}), PlanError);
    auto dup = ecs;
    dup.push_back(ecs[2]);
    EXPECT_THROW(build_plan(Stage::encoder, {"identity", "mlp"}, dup), PlanError);
    auto fixed = ecs;
    fixed[0].encoder = EncoderKind::mlp;
    EXPECT_THROW(build_plan(Stage::encoder, {"identity", "mlp"}, fixed), PlanError);
    EXPECT_NO_THROW(build_plan(Stage::transform, {"none", "cycle"}, fixed));
}

TEST(Plan, PipelineConfigDefaultsAndVariant) {
    EvaluationCondition ec;
    ec.lookback = 48;
    ec.horizon = 24;
    ec.d_model = 32;
    ec.layers = 2;
    ec.transform = TransformKind::cycle;
    const auto cfg = pipeline_config(Stage::encoder, "transformer", ec, 7);
    EXPECT_EQ(cfg.embedding.kind, EmbeddingKind::patch);
    EXPECT_EQ(cfg.encoder.kind, EncoderKind::transformer);
    EXPECT_EQ(cfg.transform.kind, TransformKind::cycle);
    EXPECT_EQ(cfg.embedding.d_model, 32u);
    EXPECT_EQ(cfg.encoder.layers, 2u);
    EXPECT_EQ(cfg.variates, 7u);
    EXPECT_EQ(pipeline_config(Stage::embedding, "variate", EvaluationCondition{}, 1).encoder.kind,
              EncoderKind::identity);
    EXPECT_EQ(pipeline_config(Stage::embedding, "variate", EvaluationCondition{}, 1).transform.kind,
              TransformKind::none);
}

TEST(Plan, InertDimensionsForIdentityEncoder) {
    EvaluationCondition ec;
    ec.embedding = EmbeddingKind::identity;
    const auto inert = inert_dimensions(pipeline_config(Stage::encoder, "identity", ec, 1));
    for (const char* f : {"d_model", "layers", "dropout", "patch_len", "stride", "kernel", "cycle_len"}) {
        EXPECT_NE(std::find(inert.begin(), inert.end(), f), inert.end()) << f;
    }
    EXPECT_TRUE(std::is_sorted(inert.begin(), inert.end()));
    const auto live = inert_dimensions(pipeline_config(Stage::encoder, "mlp", EvaluationCondition{}, 1));
    EXPECT_EQ(std::find(live.begin(), live.end(), "layers"), live.end());
    EXPECT_EQ(std::find(live.begin(), live.end(), "d_model"), live.end());
}

TEST(Plan, RunSeedIsPureFunctionOfVariantAndCondition) {
    EvaluationCondition ec;
    ec.dataset = "x";
    auto other = ec;
    other.seed = 7;
    EXPECT_EQ(run_seed("mlp", ec), run_seed("mlp", ec));
    EXPECT_NE(run_seed("mlp", ec), run_seed("identity", ec));
    EXPECT_NE(run_seed("mlp", ec), run_seed("mlp", other));
}

// ---------------------------------------------------------------------------
// Run records and logs
// ---------------------------------------------------------------------------

TEST(RunLog, RecordRoundTrip) {
    RunRecord r;
    r.plan_hash = "p";
    r.key = "p:mlp:x";
    r.stage = "encoder";
    r.eo = "mlp";
    r.ec.dataset = "d";
    r.ec_hash = r.ec.hash_hex();
    r.status = RunStatus::ok;
    r.test_mse = 0.25;
    r.test_mae = 0.4;
    r.train_curve = {1.0, 0.5};
    r.val_curve = {0.9, 0.6};
    r.inert = {"kernel"};
    r.run_seed = 0xFFFFFFFFFFFFFFFFull;
    const auto back = RunRecord::from_json(json::parse(r.to_json().dump()));
    EXPECT_EQ(back.to_json().dump(), r.to_json().dump());
    EXPECT_EQ(back.run_seed, r.run_seed);
}

TEST(RunLog, NonOkRecordsStoreNullLosses) {
    RunRecord r;
    r.status = RunStatus::diverged;
    r.reason = "nan";
    const auto j = r.to_json();
    EXPECT_TRUE(j["test_mse"].is_null());
    const auto back = RunRecord::from_json(j);
    EXPECT_EQ(back.status, RunStatus::diverged);
    EXPECT_TRUE(std::isinf(back.test_mse));
    auto bad = j;
    bad["status"] = "ok";
    EXPECT_THROW(RunRecord::from_json(bad), ParseError);
    bad["status"] = "weird";
    EXPECT_THROW(RunRecord::from_json(bad), ParseError);
}

TEST(RunLog, ReaderSkipsMalformedLinesAndWriterRepairsTruncation) {
    const auto dir = temp_dir("log");
    const auto path = dir / "runs.jsonl";
    RunRecord r;
    r.status = RunStatus::failed;
    r.key = "k1";
    {
        RunLog log(path);
        log.append(r);
    }
    {
        std::ofstream out(path, std::ios::app);
        out << "{\"plan_hash\": \"trunc";
    }
    {
        RunLog log(path);
        r.key = "k2";
        log.append(r);
    }
    std::size_t skipped = 0;
    const auto recs = read_run_log(path, &skipped);
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[0].key, "k1");
    EXPECT_EQ(recs[1].key, "k2");
    EXPECT_EQ(skipped, 1u);
    EXPECT_THROW(read_run_log(dir / "missing.jsonl"), Error);
    fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

TEST(Execute, ParallelismDoesNotChangeResults) {
    const auto plan = exec_plan();
    const auto data = provider();
    ExecuteOptions one;
    one.parallelism = 1;
    ExecuteOptions four;
    four.parallelism = 4;
    const auto a = execute(plan, data, one);
    const auto b = execute(plan, data, four);
    ASSERT_EQ(a.records.size(), plan.runs.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        EXPECT_EQ(a.records[i].status, RunStatus::ok) << a.records[i].reason;
        EXPECT_EQ(a.records[i].key, plan.runs[i].key);
        EXPECT_EQ(a.records[i].test_mse, b.records[i].test_mse);
        EXPECT_EQ(a.records[i].test_mae, b.records[i].test_mae);
        EXPECT_EQ(a.records[i].val_curve, b.records[i].val_curve);
    }
}

TEST(Execute, SingleRunReproducesItsRecord) {
    const auto plan = exec_plan();
    const auto data = provider();
    const auto all = execute(plan, data);
    const auto again = run_one(plan, plan.runs[3], data);
    EXPECT_EQ(again.test_mse, all.records[3].test_mse);
    EXPECT_EQ(again.train_curve, all.records[3].train_curve);
}

TEST(Execute, ResumeSkipsCompletedRuns) {
    const auto dir = temp_dir("resume");
    const auto path = dir / "runs.jsonl";
    const auto plan = exec_plan();
    const auto data = provider();
    ExecuteOptions opt;
    opt.log_path = path;
    opt.parallelism = 2;
    const auto first = execute(plan, data, opt);
    EXPECT_EQ(first.executed, plan.runs.size());
    EXPECT_EQ(first.resumed, 0u);

    const auto second = execute(plan, data, opt);
    EXPECT_EQ(second.executed, 0u);
    EXPECT_EQ(second.resumed, plan.runs.size());
    EXPECT_EQ(read_lines(path).size(), plan.runs.size());
    for (std::size_t i = 0; i < plan.runs.size(); ++i) {
        EXPECT_EQ(second.records[i].test_mse, first.records[i].test_mse);
    }

    // Keep three records plus a torn line, as after an interrupt.
    auto lines = read_lines(path);
    {
        std::ofstream out(path, std::ios::trunc);
        for (std::size_t i = 0; i < 3; ++i) {
            out << lines[i] << "\n";
        }
        out << lines[3].substr(0, lines[3].size() / 2);
    }
    const auto third = execute(plan, data, opt);
    EXPECT_EQ(third.resumed, 3u);
    EXPECT_EQ(third.executed, plan.runs.size() - 3);
    for (std::size_t i = 0; i < plan.runs.size(); ++i) {
        EXPECT_EQ(third.records[i].key, plan.runs[i].key);
        EXPECT_EQ(third.records[i].test_mse, first.records[i].test_mse);
    }
    std::size_t skipped = 0;
    EXPECT_EQ(read_run_log(path, &skipped).size(), plan.runs.size());
    EXPECT_EQ(skipped, 1u);
    fs::remove_all(dir);
}

TEST(Execute, LogOfAnotherPlanIsRefused) {
    const auto dir = temp_dir("other");
    const auto path = dir / "runs.jsonl";
    const auto data = provider();
    ExecuteOptions opt;
    opt.log_path = path;
    execute(exec_plan(), data, opt);
    const auto other = build_plan(Stage::encoder, {"identity", "spectral"}, sample_ecs(exec_space(), 4, 3));
    EXPECT_THROW(execute(other, data, opt), PlanError);
    fs::remove_all(dir);
}

TEST(Execute, FailingRunIsIsolated) {
    auto s = exec_space();
    s.datasets = {"syn1", "tiny", "nowhere"};
    const auto plan = build_plan(Stage::encoder, {"identity", "mlp"}, sample_ecs(s, 3, 1));
    const auto res = execute(plan, provider());
    for (const auto& r : res.records) {
        if (r.ec.dataset == "syn1") {
            EXPECT_EQ(r.status, RunStatus::ok) << r.reason;
            EXPECT_TRUE(std::isfinite(r.test_mse));
        } else {
            EXPECT_EQ(r.status, RunStatus::failed);
            EXPECT_FALSE(r.reason.empty());
        }
    }
    const auto tiny = std::find_if(res.records.begin(), res.records.end(),
                                   [](const RunRecord& r) { return r.ec.dataset == "tiny"; });
    ASSERT_NE(tiny, res.records.end());
    EXPECT_NE(tiny->reason.find("fewer than T + P"), std::string::npos) << tiny->reason;
}

TEST(Execute, RecordsCarryAuditFields) {
    const auto plan = exec_plan();
    const auto res = execute(plan, provider());
    for (const auto& r : res.records) {
        EXPECT_EQ(r.plan_hash, plan.hash);
        EXPECT_EQ(r.stage, "encoder");
        EXPECT_EQ(r.ec_hash, r.ec.hash_hex());
        EXPECT_EQ(r.run_seed, run_seed(r.eo, r.ec));
        EXPECT_EQ(r.token_axis, "L");
        EXPECT_LE(r.steps, 6u);
        EXPECT_GT(r.param_count, 0u);
        const bool layers_inert = std::find(r.inert.begin(), r.inert.end(), "layers") != r.inert.end();
        EXPECT_EQ(layers_inert, r.eo == "identity");
    }
}
