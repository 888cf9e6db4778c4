// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "combts/gradcheck.hpp"
#include "combts/harness.hpp"

#include <CLI11.hpp>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

using namespace combts;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double budget_seconds;
    std::function<Outcome(const fs::path&)> run;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

Tensor4 random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    Tensor4 t(s);
    for (auto& v : t.vec()) {
        v = rng.uniform(lo, hi);
    }
    return t;
}

Var probe(const Var& y, std::uint64_t seed = 99) { return sum(mul(y, constant(random_tensor(y->shape(), seed)))); }

fs::path source_path(const std::string& rel) { return fs::path(COMBTS_SOURCE_DIR) / rel; }

// ---------------------------------------------------------------------------
// 1. Shapes
// ---------------------------------------------------------------------------

Outcome shapes(const fs::path&) {
    std::size_t ok = 0;
    std::size_t total = 0;
    std::string first_failure;
    for (std::size_t T : {96, 192}) {
        for (std::size_t P : {96, 192}) {
            for (std::size_t N : {1, 7}) {
                for (auto ek : all_embedding_kinds) {
                    for (auto k : all_encoder_kinds) {
                        for (auto tk : all_transform_kinds) {
                            ++total;
                            std::string label = std::string(to_string(ek)) + "+" + to_string(k) + "+" +
                                                to_string(tk) + " T=" + std::to_string(T) + " P=" +
                                                std::to_string(P) + " N=" + std::to_string(N);
                            try {
                                PipelineConfig cfg;
                                cfg.transform.kind = tk;
                                cfg.embedding = {ek, 16, 16, 8};
                                cfg.encoder.kind = k;
                                cfg.lookback = T;
                                cfg.horizon = P;
                                cfg.variates = N;
                                Rng rng(1);
                                const auto m = assemble(cfg, rng);
                                const Tensor4 y = m->predict(random_tensor(Shape{1, N, T, 1}, 2), {0});
                                bool finite = true;
                                for (double v : y.vec()) {
                                    finite = finite && std::isfinite(v);
                                }
                                if (y.shape() == Shape{1, N, P, 1} && finite) {
                                    ++ok;
                                } else if (first_failure.empty()) {
                                    first_failure = label + " gave " + y.shape().str();
                                }
                            } catch (const std::exception& e) {
                                if (first_failure.empty()) {
                                    first_failure = label + ": " + e.what();
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    std::string detail = std::to_string(ok) + "/" + std::to_string(total) + " combinations dry-run to (1,N,P,1)";
    if (!first_failure.empty()) {
        detail += "; first failure " + first_failure;
    }
    return {ok == total, detail};
}

// ---------------------------------------------------------------------------
// 2. Gradients
// ---------------------------------------------------------------------------

Outcome gradients(const fs::path&) {
    // Floor 1e-5: the attention key bias has an exactly zero gradient, and
    // central-difference roundoff near 1e-10 would otherwise dominate.
    constexpr double h = 1e-5;
    constexpr double floor = 1e-5;
    std::vector<std::pair<std::string, double>> results;
    auto check = [&](const std::string& name, const std::function<Var()>& f, const std::vector<Var>& params) {
        results.emplace_back(name, grad_check(f, params, h, floor).max_rel_error);
    };

    {
        Rng rng(1);
        ParamStore store(rng);
        const auto lin = Linear::create(store, "lin", 5, 3);
        Var x = parameter(random_tensor(Shape{2, 2, 4, 5}, 2));
        check("linear", [&] { return probe(lin(x)); }, {lin.weight, lin.bias, x});
    }
    {
        Rng rng(1);
        ParamStore store(rng);
        auto ln = LayerNormParams::create(store, "ln", 6);
        ln.gamma->value = random_tensor(Shape{1, 1, 1, 6}, 3, 0.5, 1.5);
        ln.beta->value = random_tensor(Shape{1, 1, 1, 6}, 4);
        Var x = parameter(random_tensor(Shape{2, 2, 3, 6}, 5, -3.0, 3.0));
        check("layer_norm", [&] { return probe(ln(x)); }, {ln.gamma, ln.beta, x});
    }
    for (auto k : all_embedding_kinds) {
        Rng rng(2);
        ParamStore store(rng);
        Embedding e(EmbeddingSpec{k, 3, 4, 2}, 9, 2, store);
        auto params = store.params();
        Var x = parameter(random_tensor(Shape{2, 2, 9, 1}, 8));
        params.push_back(x);
        check(std::string("embedding/") + to_string(k), [&] { return probe(e.forward(x)); }, params);
    }
    for (auto k : all_encoder_kinds) {
        for (Shape latent : {Shape{1, 2, 4, 8}, Shape{1, 3, 1, 4}}) {
            Rng rng(11);
            ParamStore store(rng);
            EncoderSpec spec;
            spec.kind = k;
            spec.layers = 2;
            spec.heads = 2;
            spec.dropout = 0.0;
            Encoder e(spec, latent, store);
            if (k == EncoderKind::spectral) {
                Rng mr(12);
                for (auto& blk : e.spectral_blocks()) {
                    blk.m_re->value = random_tensor(blk.m_re->shape(), mr.next_u64(), 0.5, 1.5);
                    blk.m_im->value = random_tensor(blk.m_im->shape(), mr.next_u64(), -0.5, 0.5);
                }
            }
            auto params = store.params();
            Var z = parameter(random_tensor(latent, 13));
            params.push_back(z);
            check(std::string("encoder/") + to_string(k) + " " + latent.str(),
                  [&] { return probe(e.forward(z, ForwardContext{})); }, params);
        }
    }
    for (Shape latent : {Shape{1, 2, 3, 4}, Shape{1, 1, 5, 2}}) {
        Rng rng(2);
        ParamStore store(rng);
        Decoder d(DecoderSpec{3}, latent, 2, store);
        auto params = store.params();
        Var z = parameter(random_tensor(Shape{2, latent.c, latent.l, latent.d}, 6));
        params.push_back(z);
        check("decoder " + latent.str(), [&] { return probe(d.forward(z)); }, params);
    }
    {
        const auto [xn, st] = revin_forward(random_tensor(Shape{2, 3, 10, 1}, 20, -2.0, 5.0));
        (void)xn;
        Var y = parameter(random_tensor(Shape{2, 3, 4, 1}, 21));
        check("revin_invert", [&] { return probe(revin_invert(y, st)); }, {y});
    }
    {
        Var x = parameter(random_tensor(Shape{1, 2, 11, 1}, 22));
        check("trend_seasonal", [&] {
            const auto d = trend_seasonal(x, 5);
            return add(probe(d.trend, 1), probe(d.seasonal, 2));
        }, {x});
    }
    {
        Var x = parameter(random_tensor(Shape{1, 2, 12, 1}, 23));
        check("multiscale", [&] {
            const auto s = multiscale_downsample(x, 2, 2);
            return add(add(probe(s[0], 1), probe(s[1], 2)), probe(s[2], 3));
        }, {x});
    }
    {
        const auto buf = CycleBuffer::zeros(5, 2);
        buf.q->value = random_tensor(Shape{1, 1, 5, 2}, 24);
        Var x = parameter(random_tensor(Shape{3, 2, 6, 1}, 25));
        const std::vector<std::size_t> starts{0, 2, 11};
        check("cycle", [&] { return probe(cycle_invert(cycle_forward(x, buf, starts), buf, starts, 6)); },
              {x, buf.q});
    }
    const std::vector<std::pair<EmbeddingKind, EncoderKind>> pipelines{{EmbeddingKind::point, EncoderKind::mlp},
                                                                       {EmbeddingKind::patch, EncoderKind::transformer},
                                                                       {EmbeddingKind::variate, EncoderKind::spectral}};
    for (const auto& [ek, k] : pipelines) {
        PipelineConfig cfg;
        cfg.embedding = {ek, 4, 4, 2};
        cfg.encoder.kind = k;
        cfg.encoder.heads = 2;
        cfg.encoder.dropout = 0.0;
        cfg.transform.revin_affine = true;
        cfg.lookback = 8;
        cfg.horizon = 3;
        cfg.variates = 2;
        Rng rng(6);
        const auto m = assemble(cfg, rng);
        const Tensor4 x = random_tensor(Shape{2, 2, 8, 1}, 8);
        const Tensor4 target = random_tensor(Shape{2, 2, 3, 1}, 9);
        check(std::string("pipeline/") + to_string(ek) + "+" + to_string(k),
              [&] { return mse_loss(m->forward(x, {3, 11}, ForwardContext{}), target); }, m->params());
    }

    double worst = 0.0;
    std::string worst_name;
    for (const auto& [name, err] : results) {
        if (err >= worst) {
            worst = err;
            worst_name = name;
        }
    }
    return {worst < 1e-4, std::to_string(results.size()) + " checks, max relative error " + fmt("%.3g", worst) +
                              " (" + worst_name + ")"};
}

// ---------------------------------------------------------------------------
// 3. Exact identities
// ---------------------------------------------------------------------------

Outcome identities(const fs::path&) {
    std::vector<std::string> failures;
    const Tensor4 x = random_tensor(Shape{3, 4, 16, 1}, 30, -5.0, 5.0);
    {
        Rng rng(1);
        ParamStore store(rng);
        Embedding e(EmbeddingSpec{EmbeddingKind::identity, 0, 16, 8}, 16, 4, store);
        if (e.forward(constant(x))->value.vec() != x.vec()) {
            failures.push_back("identity embedding");
        }
    }
    {
        Rng rng(1);
        ParamStore store(rng);
        const Tensor4 z = random_tensor(Shape{3, 4, 5, 6}, 31);
        EncoderSpec spec;
        spec.kind = EncoderKind::identity;
        spec.layers = 3;
        Encoder e(spec, z.shape(), store);
        Rng drop(2);
        if (e.forward(constant(z), ForwardContext{})->value.vec() != z.vec() ||
            e.forward(constant(z), ForwardContext{true, &drop})->value.vec() != z.vec()) {
            failures.push_back("identity encoder");
        }
    }
    double revin_err = 0.0;
    {
        const Tensor4 raw = random_tensor(Shape{4, 3, 32, 1}, 32, -50.0, 80.0);
        const auto [xn, st] = revin_forward(raw);
        revin_err = max_abs_diff(revin_invert(xn, st), raw);
        if (!(revin_err < 1e-9)) {
            failures.push_back("revin round trip " + fmt("%.3g", revin_err));
        }
    }
    double ts_err = 0.0;
    for (std::size_t k = 1; k <= 31; k += 2) {
        const auto d = trend_seasonal(x, k);
        Tensor4 sum_back = d.trend;
        for (std::size_t i = 0; i < sum_back.size(); ++i) {
            sum_back[i] += d.seasonal[i];
        }
        ts_err = std::max(ts_err, max_abs_diff(sum_back, x));
    }
    if (!(ts_err < 1e-12)) {
        failures.push_back("trend + seasonal reconstruction " + fmt("%.3g", ts_err));
    }
    {
        const Var v = constant(x);
        if (time_as_feature_inverse(time_as_feature(v))->value.vec() != x.vec() ||
            channel_as_feature_inverse(channel_as_feature(v))->value.vec() != x.vec()) {
            failures.push_back("reshape inverse");
        }
        for (auto k : {EmbeddingKind::time_as_feature, EmbeddingKind::channel_as_feature}) {
            Rng rng(1);
            ParamStore store(rng);
            Embedding e(EmbeddingSpec{k, 0, 16, 8}, 16, 4, store);
            const Tensor4 z = e.forward(v)->value;
            const Tensor4 back = k == EmbeddingKind::time_as_feature ? time_as_feature_inverse(constant(z))->value
                                                                      : channel_as_feature_inverse(constant(z))->value;
            if (back.vec() != x.vec() || store.params().size() != 0) {
                failures.push_back(std::string("embedding ") + to_string(k));
            }
        }
    }
    std::string detail = "identity stages bit-exact, revin " + fmt("%.2g", revin_err) + ", trend+seasonal " +
                         fmt("%.2g", ts_err) + ", reshapes exact";
    if (!failures.empty()) {
        detail = "failed:";
        for (const auto& f : failures) {
            detail += " " + f + ";";
        }
    }
    return {failures.empty(), detail};
}

// ---------------------------------------------------------------------------
// 4. Statistics oracles
// ---------------------------------------------------------------------------

long double compensated_sum(const std::vector<double>& v) {
    long double s = 0.0L;
    long double c = 0.0L;
    for (double x : v) {
        const long double y = x - c;
        const long double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return s;
}

Outcome statistics(const fs::path&) {
    double est_err = 0.0;
    std::mt19937_64 g(40);
    for (std::size_t K : {2, 3, 8, 16, 100, 600}) {
        for (int rep = 0; rep < 5; ++rep) {
            std::lognormal_distribution<double> dist(-1.0, 0.7);
            std::vector<double> v(K);
            for (auto& x : v) {
                x = dist(g);
            }
            const long double mean = compensated_sum(v) / static_cast<long double>(K);
            long double ss = 0.0L;
            for (double x : v) {
                ss += (x - mean) * (x - mean);
            }
            const double sd = static_cast<double>(std::sqrt(ss / static_cast<long double>(K - 1)));
            const double half = boost::math::quantile(boost::math::students_t(static_cast<double>(K - 1)), 0.975) *
                                sd / std::sqrt(static_cast<double>(K));
            const auto [lo, hi] = ci95(v);
            est_err = std::max({est_err, std::abs(mu_hat(v) - static_cast<double>(mean)),
                                std::abs(sigma_hat(v) - sd), std::abs(l_best(v) - *std::min_element(v.begin(), v.end())),
                                std::abs(lo - (static_cast<double>(mean) - half)),
                                std::abs(hi - (static_cast<double>(mean) + half))});
        }
    }

    // Exact path against enumeration of every placement, all n, m <= 8.
    std::size_t mw_cases = 0;
    double mw_err = 0.0;
    for (std::size_t n = 1; n <= 8; ++n) {
        for (std::size_t m = 1; m <= 8; ++m) {
            const std::size_t N = n + m;
            std::vector<double> counts(n * m + 1, 0.0);
            std::vector<std::uint32_t> masks;
            for (std::uint32_t mask = 0; mask < (1u << N); ++mask) {
                if (static_cast<std::size_t>(__builtin_popcount(mask)) != n) {
                    continue;
                }
                masks.push_back(mask);
                std::size_t u = 0;
                std::size_t ys = 0;
                for (std::size_t pos = 0; pos < N; ++pos) {
                    (mask & (1u << pos)) ? u += ys : ++ys;
                }
                counts[u] += 1.0;
            }
            if (mann_whitney_counts(n, m) != counts) {
                mw_err = 1.0;
            }
            const double total = static_cast<double>(masks.size());
            for (std::size_t i = 0; i < masks.size(); i += std::max<std::size_t>(1, masks.size() / 40)) {
                std::vector<double> x;
                std::vector<double> y;
                for (std::size_t pos = 0; pos < N; ++pos) {
                    ((masks[i] & (1u << pos)) ? x : y).push_back(static_cast<double>(pos) + 0.5);
                }
                const auto r = mann_whitney_one_tailed(x, y);
                double below = 0.0;
                for (std::size_t u = 0; u <= static_cast<std::size_t>(r.u); ++u) {
                    below += counts[u];
                }
                mw_err = std::max(mw_err, r.exact ? std::abs(r.p - below / total) : 1.0);
                ++mw_cases;
            }
        }
    }
    const auto u0 = mann_whitney_one_tailed({1, 2, 3}, {4, 5, 6});
    const bool u0_ok = u0.u == 0.0 && std::abs(u0.p - 0.05) < 1e-15;

    const auto c8 = mann_whitney_counts(8, 8);
    const double total8 = std::accumulate(c8.begin(), c8.end(), 0.0);
    const double sd8 = std::sqrt(64.0 * 17.0 / 12.0);
    double below = 0.0;
    double approx_gap = 0.0;
    for (std::size_t u = 0; u < c8.size(); ++u) {
        below += c8[u];
        const double z = (static_cast<double>(u) - 32.0 + 0.5) / sd8;
        approx_gap = std::max(approx_gap, std::abs(below / total8 - boost::math::cdf(boost::math::normal(), z)));
    }
    const bool pass = est_err < 1e-12 && mw_err < 1e-12 && u0_ok && approx_gap < 0.02;
    return {pass, "estimators/CI max error " + fmt("%.2g", est_err) + "; Mann-Whitney exact vs enumeration " +
                      fmt("%.2g", mw_err) + " over " + std::to_string(mw_cases) + " cases; U=0 p=" +
                      fmt("%.17g", u0.p) + "; exact vs normal at 8x8 " + fmt("%.4f", approx_gap)};
}

// ---------------------------------------------------------------------------
// 5. Protocol
// ---------------------------------------------------------------------------

ExperimentConfig mini_config() { return load_config(source_path("configs/exp1-mini.json")); }

bool same_record(const RunRecord& a, const RunRecord& b, double tol) {
    auto close = [tol](const std::vector<double>& x, const std::vector<double>& y) {
        if (x.size() != y.size()) {
            return false;
        }
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!(std::abs(x[i] - y[i]) <= tol)) {
                return false;
            }
        }
        return true;
    };
    return a.key == b.key && a.status == b.status && close(a.train_curve, b.train_curve) &&
           close(a.val_curve, b.val_curve) && (!a.ok() || std::abs(a.test_mse - b.test_mse) <= tol);
}

Outcome protocol(const fs::path& work) {
    auto cfg = mini_config();
    cfg.space.fixed.max_steps = 40;
    const auto plan = plan_for(cfg);
    const auto data = provider_of(load_datasets(cfg));
    std::vector<std::string> failures;

    std::map<std::string, std::set<std::string>> hashes;
    for (const auto& r : plan.runs) {
        hashes[plan.variant(r)].insert(plan.ec(r).hash_hex());
    }
    for (const auto& [v, set] : hashes) {
        if (set != hashes.begin()->second || set.size() != plan.ecs.size()) {
            failures.push_back("paired hash sets differ for " + v);
        }
    }
    std::map<std::pair<std::string, std::size_t>, std::size_t> strata;
    for (const auto& ec : plan.ecs) {
        ++strata[{ec.dataset, ec.horizon}];
    }
    const std::size_t quota = cfg.K / (cfg.space.datasets.size() * cfg.space.horizons.size());
    bool quota_ok = strata.size() == cfg.space.datasets.size() * cfg.space.horizons.size();
    for (const auto& [s, n] : strata) {
        quota_ok = quota_ok && n == quota;
    }
    if (!quota_ok) {
        failures.push_back("stratum quotas");
    }

    ExecuteOptions one;
    one.parallelism = 1;
    ExecuteOptions four;
    four.parallelism = 4;
    const auto a = execute(plan, data, one);
    const auto b = execute(plan, data, four);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        ok += a.records[i].ok();
        if (!same_record(a.records[i], b.records[i], 0.0)) {
            failures.push_back("1 vs 4 workers differ at " + a.records[i].key);
            break;
        }
    }
    for (std::size_t i : {std::size_t{0}, plan.runs.size() / 2, plan.runs.size() - 1}) {
        if (!same_record(run_one(plan, plan.runs[i], data), a.records[i], 1e-12)) {
            failures.push_back("rerun differs at " + plan.runs[i].key);
        }
    }

    const fs::path dir = work / "protocol";
    fs::remove_all(dir);
    fs::create_directories(dir);
    ExecuteOptions logged;
    logged.log_path = dir / "runs.jsonl";
    const auto first = execute(plan, data, logged);
    const auto second = execute(plan, data, logged);
    if (second.executed != 0 || second.resumed != plan.runs.size()) {
        failures.push_back("full resume executed " + std::to_string(second.executed));
    }
    std::vector<std::string> lines;
    {
        std::ifstream in(*logged.log_path);
        for (std::string line; std::getline(in, line);) {
            lines.push_back(line);
        }
    }
    const std::size_t keep = lines.size() / 2;
    {
        std::ofstream out(*logged.log_path, std::ios::trunc);
        for (std::size_t i = 0; i < keep; ++i) {
            out << lines[i] << "\n";
        }
        out << lines[keep].substr(0, lines[keep].size() / 3);
    }
    const auto third = execute(plan, data, logged);
    if (third.resumed != keep || third.executed != plan.runs.size() - keep) {
        failures.push_back("partial resume " + std::to_string(third.resumed) + "/" + std::to_string(keep));
    }
    for (std::size_t i = 0; i < plan.runs.size(); ++i) {
        if (!same_record(first.records[i], second.records[i], 0.0) ||
            !same_record(first.records[i], third.records[i], 0.0) ||
            !same_record(first.records[i], a.records[i], 0.0)) {
            failures.push_back("resumed records differ at " + plan.runs[i].key);
            break;
        }
    }
    if (read_run_log(*logged.log_path).size() != plan.runs.size()) {
        failures.push_back("log holds duplicate or missing records");
    }

    std::string detail = std::to_string(plan.runs.size()) + " runs (" + std::to_string(ok) +
                         " ok): paired hash sets, quotas of " + std::to_string(quota) +
                         ", 1 vs 4 workers, reruns and resume all match";
    if (!failures.empty()) {
        detail = "failed:";
        for (const auto& f : failures) {
            detail += " " + f + ";";
        }
    }
    return {failures.empty(), detail};
}

// ---------------------------------------------------------------------------
// 6. Analytic signal
// ---------------------------------------------------------------------------

TrainOutcome analytic_run(double noise, std::size_t max_steps) {
    SyntheticSpec spec;
    spec.length = 4800;
    spec.variates = 2;
    spec.period = 24;
    spec.noise = noise;
    spec.seed = 7;
    const auto ds = standardize(apply_split(make_synthetic(spec, "periodic"))).first;
    PipelineConfig cfg;
    cfg.transform.kind = TransformKind::cycle;
    cfg.transform.cycle_len = 24;
    cfg.transform.revin = false;
    cfg.embedding.kind = EmbeddingKind::identity;
    cfg.encoder.kind = EncoderKind::identity;
    cfg.lookback = 96;
    cfg.horizon = 96;
    cfg.variates = 2;
    Rng init(3);
    Rng run(4);
    const auto m = assemble(cfg, init);
    TrainOptions opt;
    opt.adam.lr = max_steps > 0 ? 1e-2 : 1e-3;
    opt.max_steps = max_steps;
    return train(*m, ds, opt, run);
}

Outcome analytic(const fs::path&) {
    const auto clean = analytic_run(0.0, 200);
    const auto noisy = analytic_run(0.1, 0);
    const bool pass = clean.test_mse < 1e-3 && clean.steps <= 200 && noisy.test_mse >= 0.009 && noisy.test_mse <= 0.013;
    return {pass, "noise 0: MSE " + fmt("%.3g", clean.test_mse) + " after " + std::to_string(clean.steps) +
                      " steps; noise 0.1: MSE " + fmt("%.5f", noisy.test_mse) + " after " +
                      std::to_string(noisy.steps) + " steps (no step cap)"};
}

// ---------------------------------------------------------------------------
// 7. Identity paradox
// ---------------------------------------------------------------------------

Outcome identity_paradox(const fs::path& work) {
    const auto cfg = mini_config();
    std::ostringstream sink;
    const auto s = run_plan(cfg, plan_for(cfg), work / "exp1-mini", default_parallelism(), sink, false);
    const auto rep = report(s.records);
    const auto& id = rep.cell("all", "avg", "identity");
    const auto& tf = rep.cell("all", "avg", "transformer");
    const auto& mlp = rep.cell("all", "avg", "mlp");
    return {id.sigma <= tf.sigma, std::to_string(s.records.size()) + " runs (" + std::to_string(s.ok) +
                                      " ok); pooled sigma identity " + fmt("%.4f", id.sigma) + ", transformer " +
                                      fmt("%.4f", tf.sigma) + ", mlp " + fmt("%.4f", mlp.sigma) +
                                      "; pooled mu identity " + fmt("%.4f", id.mu) + ", transformer " +
                                      fmt("%.4f", tf.mu) + ", mlp " + fmt("%.4f", mlp.mu)};
}

// ---------------------------------------------------------------------------
// 8. Multiseed
// ---------------------------------------------------------------------------

Outcome multiseed(const fs::path& work) {
    const auto cfg = mini_config();
    if (cfg.seeds != std::vector<std::uint64_t>{333, 2025, 2026}) {
        return {false, "mini config seeds are not 333, 2025, 2026"};
    }
    std::ostringstream sink;
    const auto cols = run_multiseed(cfg, work / "multiseed", default_parallelism(), sink);
    const std::string table = multiseed_table(cols);
    if (cols.size() != 3) {
        return {false, "expected 3 columns, got " + std::to_string(cols.size())};
    }
    const auto& last = cols.back();
    const auto rerun = run_plan(cfg, plan_for(cfg, last.seed), work / "multiseed-rerun", default_parallelism(), sink,
                                false);
    const auto rep = report(rerun.records);
    bool equal = rep.rows.size() == last.report.rows.size() && rerun.executed == rerun.records.size();
    for (std::size_t r = 0; equal && r < rep.rows.size(); ++r) {
        for (std::size_t c = 0; equal && c < rep.rows[r].cells.size(); ++c) {
            const auto& x = rep.rows[r].cells[c];
            const auto& y = last.report.rows[r].cells[c];
            auto same = [](double p, double q) { return (std::isnan(p) && std::isnan(q)) || p == q; };
            equal = same(x.mu, y.mu) && same(x.sigma, y.sigma) && same(x.lbest, y.lbest) && x.k_ok == y.k_ok;
        }
    }
    double spread = 0.0;
    for (const auto& g : cols.front().report.groups) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (const auto& c : cols) {
            lo = std::min(lo, c.report.cell("all", "avg", g).mu);
            hi = std::max(hi, c.report.cell("all", "avg", g).mu);
        }
        spread = std::max(spread, hi - lo);
    }
    std::cout << table;
    return {equal, "3 seed columns; fresh rerun of seed " + std::to_string(last.seed) +
                       (equal ? " bit-reproduces" : " does NOT reproduce") + " its column; max cross-seed |dmu| " +
                       fmt("%.4f", spread)};
}

// ---------------------------------------------------------------------------
// 9. CLI smoke
// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int shell(const std::string& cmd, const fs::path& out) {
    const int status = std::system((cmd + " > '" + out.string() + "' 2>&1").c_str());
    return status == 0 ? 0 : (status < 0 ? status : (status >> 8 ? status >> 8 : 1));
}

Outcome cli_smoke(const fs::path& work) {
    const fs::path dir = work / "cli";
    fs::create_directories(dir);
    const std::string cli = std::string("'") + COMBTS_CLI_PATH + "'";
    const std::string cfg = "'" + source_path("configs/exp1-mini.json").string() + "'";
    const std::string log = "'" + (dir / "out" / "runs.jsonl").string() + "'";
    std::vector<std::string> failures;
    if (int rc = shell(cli + " run --config " + cfg + " --out '" + (dir / "out").string() + "' --parallelism " +
                           std::to_string(default_parallelism()),
                       dir / "run.txt");
        rc != 0) {
        failures.push_back("run exited " + std::to_string(rc));
    }
    if (int rc = shell(cli + " report " + log + " --group-by eo", dir / "report.txt"); rc != 0) {
        failures.push_back("report exited " + std::to_string(rc));
    }
    if (int rc = shell(cli + " significance " + log + " identity transformer --alpha 0.05", dir / "significance.txt");
        rc != 0) {
        failures.push_back("significance exited " + std::to_string(rc));
    }
    const std::string run_txt = slurp(dir / "run.txt");
    const std::string rep = slurp(dir / "report.txt");
    const std::string sig = slurp(dir / "significance.txt");
    auto has = [](const std::string& text, const std::string& what) { return text.find(what) != std::string::npos; };
    if (!has(run_txt, "config exp1-mini hash ") || !has(run_txt, "executed 48, resumed 0")) {
        failures.push_back("run output");
    }
    for (const char* col : {"identity mu", "identity sigma", "identity min", "transformer mu", "mlp min"}) {
        if (!has(rep, col)) {
            failures.push_back(std::string("report lacks '") + col + "'");
        }
    }
    std::size_t rows = 0;
    for (const char* ds : {"syn_hourly", "syn_mixed"}) {
        for (const char* h : {" 12 ", " 24 ", " avg "}) {
            std::istringstream in(rep);
            for (std::string line; std::getline(in, line);) {
                rows += line.rfind(ds, 0) == 0 && has(line + " ", h);
            }
        }
    }
    std::istringstream rin(rep);
    for (std::string line; std::getline(rin, line);) {
        rows += line.rfind("all", 0) == 0 && has(line, "avg");
    }
    if (rows != 7) {
        failures.push_back("report has " + std::to_string(rows) + " of 7 horizon/avg rows");
    }
    if (!fs::exists(dir / "out" / "report-eo.csv")) {
        failures.push_back("no report table");
    }
    for (const char* scope : {"syn_hourly", "syn_mixed", "overall", "H1: identity has lower MSE than transformer"}) {
        if (!has(sig, scope)) {
            failures.push_back(std::string("significance lacks '") + scope + "'");
        }
    }
    std::string detail = "run, report (7 horizon/avg rows, mu/sigma/min per EO) and significance (per dataset + "
                         "overall) succeeded; outputs in " + dir.string();
    if (!failures.empty()) {
        detail = "failed:";
        for (const auto& f : failures) {
            detail += " " + f + ";";
        }
    }
    return {failures.empty(), detail};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"combts acceptance suite"};
    std::string work = (fs::temp_directory_path() / "combts-acceptance").string();
    std::vector<int> only;
    app.add_option("--work", work, "Scratch directory (wiped at start)");
    app.add_option("--only", only, "Run only these criterion numbers");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> criteria{
        {1, "shape contracts", 30, shapes},
        {2, "gradients", 120, gradients},
        {3, "exact identities", 60, identities},
        {4, "statistics oracles", 60, statistics},
        {5, "protocol", 300, protocol},
        {6, "analytic signal", 120, analytic},
        {7, "identity paradox (sigma identity <= sigma transformer)", 600, identity_paradox},
        {8, "multiseed", 900, multiseed},
        {9, "CLI smoke", 1800, cli_smoke},
    };

    const fs::path work_dir(work);
    fs::remove_all(work_dir);
    fs::create_directories(work_dir);
    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) {
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run(work_dir);
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.budget_seconds;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::cout << (pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " ("
                  << fmt("%.1f", secs) << " s, budget " << fmt("%.0f", c.budget_seconds) << " s"
                  << (in_time ? "" : ", OVER BUDGET") << ")" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
