#pragma once

#include "combts/datasets.hpp"
#include "combts/decoder.hpp"
#include "combts/embeddings.hpp"
#include "combts/encoders.hpp"
#include "combts/optim.hpp"
#include "combts/transforms.hpp"

#include <chrono>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace combts {

/// Structural prior applied inside RevIN.
enum class TransformKind { none, trend_seasonal, multiscale, cycle };

inline constexpr std::array<TransformKind, 4> all_transform_kinds{TransformKind::none, TransformKind::trend_seasonal,
                                                                  TransformKind::multiscale, TransformKind::cycle};

inline const char* to_string(TransformKind k) {
    switch (k) {
    case TransformKind::none: return "none";
    case TransformKind::trend_seasonal: return "trend_seasonal";
    case TransformKind::multiscale: return "multiscale";
    case TransformKind::cycle: return "cycle";
    }
    return "?";
}

inline std::optional<TransformKind> parse_transform_kind(std::string_view s) {
    for (auto k : all_transform_kinds) {
        if (s == to_string(k)) {
            return k;
        }
    }
    return std::nullopt;
}

struct TransformSpec {
    TransformKind kind = TransformKind::none;
    std::size_t kernel = 25;
    std::size_t levels = 3;
    std::size_t factor = 2;
    std::size_t cycle_len = 24;
    bool revin = true;
    bool revin_affine = false;
    double revin_eps = 1e-5;
};

/// f = T_out^-1 . D . Phi . E . T_in
struct PipelineConfig {
    TransformSpec transform;
    EmbeddingSpec embedding;
    EncoderSpec encoder;
    std::size_t lookback = 96;
    std::size_t horizon = 96;
    std::size_t variates = 1;
};

/// One embedding -> encoder -> decoder chain over a fixed input length.
struct Branch {
    Embedding embedding;
    Encoder encoder;
    Decoder decoder;

    Var forward(const Var& x, const ForwardContext& ctx) const {
        return decoder.forward(encoder.forward(embedding.forward(x), ctx));
    }
};

/// An assembled forecasting pipeline with its registered parameters.
class Model {
public:
    Model(const PipelineConfig& cfg, Rng& init_rng) : cfg_(cfg), store_(init_rng) {
        if (cfg.lookback == 0 || cfg.horizon == 0 || cfg.variates == 0) {
            throw ConfigError("pipeline needs positive lookback, horizon and variate count");
        }
        const auto& tr = cfg.transform;
        const std::size_t N = cfg.variates;
        if (tr.revin && tr.revin_affine) {
            revin_gamma_ = store_.filled("revin.gamma", Shape{1, N, 1, 1}, 1.0);
            revin_beta_ = store_.filled("revin.beta", Shape{1, N, 1, 1}, 0.0);
        }
        std::vector<std::size_t> lengths;
        try {
            switch (tr.kind) {
            case TransformKind::none: lengths = {cfg.lookback}; break;
            case TransformKind::cycle:
                if (tr.cycle_len == 0) {
                    throw ParameterError("cycle length must be >= 1");
                }
                cycle_ = CycleBuffer{store_.filled("cycle.q", Shape{1, 1, tr.cycle_len, N}, 0.0), tr.cycle_len};
                lengths = {cfg.lookback};
                break;
            case TransformKind::trend_seasonal:
                moving_average_matrix(cfg.lookback, tr.kernel); // validates the kernel
                lengths = {cfg.lookback, cfg.lookback};
                break;
            case TransformKind::multiscale: lengths = multiscale_lengths(cfg.lookback, tr.levels, tr.factor); break;
            }
        } catch (const Error& e) {
            throw ConfigError(std::string("transform '") + to_string(tr.kind) + "' + lookback " +
                              std::to_string(cfg.lookback) + ": " + e.what());
        }
        for (std::size_t i = 0; i < lengths.size(); ++i) {
            const std::string p = "branch" + std::to_string(i);
            std::optional<Embedding> emb;
            try {
                emb.emplace(cfg.embedding, lengths[i], N, store_, p + ".embedding");
            } catch (const Error& e) {
                throw ConfigError(std::string("transform '") + to_string(tr.kind) + "' + embedding '" +
                                  to_string(cfg.embedding.kind) + "': " + e.what());
            }
            const Shape latent = emb->output_shape(1);
            std::optional<Encoder> enc;
            try {
                enc.emplace(cfg.encoder, latent, store_, p + ".encoder");
            } catch (const Error& e) {
                throw ConfigError(std::string("embedding '") + to_string(cfg.embedding.kind) + "' + encoder '" +
                                  to_string(cfg.encoder.kind) + "': " + e.what());
            }
            std::optional<Decoder> dec;
            try {
                dec.emplace(DecoderSpec{cfg.horizon}, latent, N, store_, p + ".decoder");
            } catch (const Error& e) {
                throw ConfigError(std::string("encoder '") + to_string(cfg.encoder.kind) +
                                  "' + decoder 'shared_linear': " + e.what());
            }
            branches_.push_back(Branch{std::move(*emb), std::move(*enc), std::move(*dec)});
        }
        dry_run();
    }

    const PipelineConfig& config() const noexcept { return cfg_; }
    ParamStore& store() noexcept { return store_; }
    const ParamStore& store() const noexcept { return store_; }
    const std::vector<Var>& params() const noexcept { return store_.params(); }
    std::size_t parameter_count() const noexcept { return store_.element_count(); }
    std::vector<Branch>& branches() noexcept { return branches_; }
    const std::optional<CycleBuffer>& cycle() const noexcept { return cycle_; }
    TokenAxis token_axis() const noexcept { return branches_.front().encoder.token_axis(); }

    /// (B,N,T,1) inputs with absolute window starts -> (B,N,P,1) forecasts.
    Var forward(const Tensor4& inputs, const std::vector<std::size_t>& starts, const ForwardContext& ctx) const {
        const Shape s = inputs.shape();
        if (s.c != cfg_.variates || s.l != cfg_.lookback || s.d != 1 || starts.size() != s.b) {
            throw DimensionError("pipeline expects (B," + std::to_string(cfg_.variates) + "," +
                                 std::to_string(cfg_.lookback) + ",1) with one start per window, got " + s.str());
        }
        const auto& tr = cfg_.transform;
        std::optional<RevinState> revin;
        Var h;
        if (tr.revin) {
            auto [xn, st] = revin_forward(inputs, tr.revin_eps);
            revin = std::move(st);
            h = constant(std::move(xn));
        } else {
            h = constant(inputs);
        }
        if (revin_gamma_) {
            h = add(mul(h, revin_gamma_), revin_beta_);
        }
        Var pred;
        switch (tr.kind) {
        case TransformKind::none: pred = branches_[0].forward(h, ctx); break;
        case TransformKind::cycle:
            pred = cycle_invert(branches_[0].forward(cycle_forward(h, *cycle_, starts), ctx), *cycle_, starts,
                                cfg_.lookback);
            break;
        case TransformKind::trend_seasonal: {
            auto parts = trend_seasonal(h, tr.kernel);
            pred = add(branches_[0].forward(parts.trend, ctx), branches_[1].forward(parts.seasonal, ctx));
            break;
        }
        case TransformKind::multiscale: {
            auto scales = multiscale_downsample(h, tr.levels, tr.factor);
            for (std::size_t i = 0; i < scales.size(); ++i) {
                Var p = branches_[i].forward(scales[i], ctx);
                pred = pred ? add(pred, p) : p;
            }
            break;
        }
        }
        if (revin_gamma_) {
            const double guard = tr.revin_eps * tr.revin_eps;
            Tensor4 g(Shape{1, cfg_.variates, 1, 1}, guard);
            pred = div(sub(pred, revin_beta_), add(revin_gamma_, constant(std::move(g))));
        }
        if (revin) {
            pred = revin_invert(pred, *revin);
        }
        return pred;
    }

    Tensor4 predict(const Tensor4& inputs, const std::vector<std::size_t>& starts) const {
        return forward(inputs, starts, ForwardContext{})->value;
    }

private:
    void dry_run() const {
        const Tensor4 zeros(Shape{1, cfg_.variates, cfg_.lookback, 1});
        const Tensor4 out = predict(zeros, {0});
        const Shape want{1, cfg_.variates, cfg_.horizon, 1};
        if (!(out.shape() == want)) {
            throw ConfigError("pipeline dry run produced " + out.shape().str() + ", expected " + want.str());
        }
        if (!out.all_finite()) {
            throw ConfigError("pipeline dry run produced non-finite output");
        }
    }

    PipelineConfig cfg_;
    ParamStore store_;
    Var revin_gamma_;
    Var revin_beta_;
    std::optional<CycleBuffer> cycle_;
    std::vector<Branch> branches_;
};

/// Build and shape-check a pipeline. Parameters are drawn from `init_rng`.
inline std::unique_ptr<Model> assemble(const PipelineConfig& cfg, Rng& init_rng) {
    return std::make_unique<Model>(cfg, init_rng);
}

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

struct TrainOptions {
    std::size_t batch_size = 32;
    std::size_t epochs = 30;
    std::size_t patience = 3;
    AdamOptions adam{};
    std::size_t max_steps = 0; // 0: unlimited
};

struct Metrics {
    double mse = 0.0;
    double mae = 0.0;
    std::size_t windows = 0;
};

struct TrainOutcome {
    std::vector<double> train_loss; // mean batch loss per epoch
    std::vector<double> val_loss;   // validation MSE per epoch
    std::size_t stopped_epoch = 0;  // 1-based
    std::size_t best_epoch = 0;     // 1-based
    std::size_t steps = 0;
    double test_mse = 0.0;
    double test_mae = 0.0;
    double wall_seconds = 0.0;
};

using Predictor = std::function<Tensor4(const WindowBatch&)>;

/// MSE / MAE over every variate and horizon step of every window in a split,
/// weighted by element count.
inline Metrics evaluate(const Predictor& predict, const SeriesDataset& ds, Split split, std::size_t lookback,
                        std::size_t horizon, std::size_t batch_size = 256) {
    WindowLoader loader(ds, split, lookback, horizon, batch_size);
    double sse = 0.0;
    double sae = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < loader.batch_count(); ++i) {
        const auto wb = loader.batch(i);
        const Tensor4 pred = predict(wb);
        if (!(pred.shape() == wb.targets.shape())) {
            throw DimensionError("evaluate: prediction " + pred.shape().str() + " vs target " +
                                 wb.targets.shape().str());
        }
        for (std::size_t k = 0; k < pred.size(); ++k) {
            const double e = pred[k] - wb.targets[k];
            sse += e * e;
            sae += std::abs(e);
        }
        count += pred.size();
    }
    const double mse_v = sse / static_cast<double>(count);
    const double mae_v = sae / static_cast<double>(count);
    if (!std::isfinite(mse_v) || !std::isfinite(mae_v)) {
        throw DivergedError(std::string("non-finite ") + to_string(split) + " metrics");
    }
    return {mse_v, mae_v, loader.window_count()};
}

inline Metrics evaluate(const Model& model, const SeriesDataset& ds, Split split, std::size_t batch_size = 256) {
    const auto& cfg = model.config();
    return evaluate([&model](const WindowBatch& wb) { return model.predict(wb.inputs, wb.starts); }, ds, split,
                    cfg.lookback, cfg.horizon, batch_size);
}

/// Adam with a constant learning rate, validation MSE after every epoch,
/// early stopping on `patience` epochs without improvement, then the
/// best-validation parameters are restored and scored on the test split.
inline TrainOutcome train(Model& model, const SeriesDataset& ds, const TrainOptions& opt, Rng& rng) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& cfg = model.config();
    // Fail fast on short splits before spending any compute.
    WindowLoader(ds, Split::val, cfg.lookback, cfg.horizon, opt.batch_size);
    WindowLoader(ds, Split::test, cfg.lookback, cfg.horizon, opt.batch_size);

    TrainOutcome out;
    AdamState state;
    const auto& params = model.params();
    double best = std::numeric_limits<double>::infinity();
    std::vector<Tensor4> best_params = model.store().snapshot();
    std::size_t since_best = 0;
    bool step_cap_hit = false;
    for (std::size_t epoch = 1; epoch <= opt.epochs && !step_cap_hit; ++epoch) {
        WindowLoader loader(ds, Split::train, cfg.lookback, cfg.horizon, opt.batch_size, &rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t i = 0; i < loader.batch_count(); ++i) {
            const auto wb = loader.batch(i);
            Var pred = model.forward(wb.inputs, wb.starts, ForwardContext{true, &rng});
            Var loss = mse_loss(pred, wb.targets);
            const double lv = loss->value.item();
            if (!std::isfinite(lv)) {
                throw DivergedError("non-finite training loss at epoch " + std::to_string(epoch));
            }
            zero_grads(params);
            backward(loss);
            adam_step(params, state, opt.adam);
            loss_sum += lv;
            ++batches;
            ++out.steps;
            if (opt.max_steps != 0 && out.steps >= opt.max_steps) {
                step_cap_hit = true;
                break;
            }
        }
        out.train_loss.push_back(loss_sum / static_cast<double>(batches));
        const double val = evaluate(model, ds, Split::val).mse;
        out.val_loss.push_back(val);
        out.stopped_epoch = epoch;
        if (val < best) {
            best = val;
            out.best_epoch = epoch;
            best_params = model.store().snapshot();
            since_best = 0;
        } else if (++since_best >= opt.patience) {
            break;
        }
    }
    model.store().restore(best_params);
    const Metrics test = evaluate(model, ds, Split::test);
    out.test_mse = test.mse;
    out.test_mae = test.mae;
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

} // namespace combts
