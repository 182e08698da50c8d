#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "softperc/cvae/train.hpp"
#include "softperc/optim.hpp"

namespace softperc::cvae {

namespace {

static_assert(kProprioDim == sim::kQfDim + sim::kQrDim);
static_assert(kForceDim == sim::kForceDim);
static_assert(kActionDim == sim::kActionDim);

void check_episode_ids(const sim::DatasetManifest& m, const std::vector<int>& episodes,
                       const char* who) {
    for (int e : episodes)
        if (e < 0 || e >= static_cast<int>(m.episodes.size()))
            throw UsageError(std::string(who) + ": episode index " + std::to_string(e) +
                             " out of range");
}

/// HWC (dataset order) -> CHW (model order).
void transpose_hwc(const float* src, int channels, float* dst) {
    constexpr int hw = kImageSize * kImageSize;
    for (int c = 0; c < channels; ++c)
        for (int p = 0; p < hw; ++p) dst[c * hw + p] = src[p * channels + c];
}

struct Batch {
    SensorBatch inputs;
    TargetBatch targets;
    num::TensorT<float> actions;
};

Batch load_batch(const sim::DatasetReader& data, const std::vector<std::int64_t>& ts,
                 const ModalityConfig& cfg) {
    Batch b;
    b.inputs = make_inputs(data, ts, cfg);
    b.targets = make_targets(data, ts, cfg);
    b.actions = make_actions(data, ts);
    return b;
}

ElboTermsT<float> forward_elbo(const WorldModel& model, const Batch& b, Rng* sampler) {
    const auto latent = sampler ? model.encode(b.inputs, *sampler) : model.encode(b.inputs);
    const auto z_c = model.condition(latent.z, b.actions);
    const auto pred = model.decode(z_c);
    return elbo_loss(pred, b.targets, latent, model.config());
}

/// Weighted running means of the loss decomposition across minibatches.
struct StatAccum {
    double elbo = 0, rp = 0, rf = 0, rfl = 0, kl = 0;
    std::int64_t n = 0;

    void add(const ElboTermsT<float>& t, std::int64_t batch) {
        elbo += t.elbo * static_cast<double>(batch);
        rp += t.recon_proprio * static_cast<double>(batch);
        rf += t.recon_force * static_cast<double>(batch);
        rfl += t.recon_flow * static_cast<double>(batch);
        kl += t.kl * static_cast<double>(batch);
        n += batch;
    }
    double mean_elbo() const { return n ? elbo / static_cast<double>(n) : 0.0; }
};

std::vector<num::TensorT<float>> snapshot_params(const WorldModel& model) {
    std::vector<num::TensorT<float>> out;
    out.reserve(model.parameters().size());
    for (const auto& p : model.parameters()) out.push_back(p.value());
    return out;
}

void restore_params(WorldModel& model, const std::vector<num::TensorT<float>>& snap) {
    auto& params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_value() = snap[i];
}

}  // namespace

std::vector<std::int64_t> pair_indices(const sim::DatasetManifest& manifest,
                                       const std::vector<int>& episodes) {
    check_episode_ids(manifest, episodes, "pair_indices");
    std::vector<std::int64_t> ts;
    for (int e : episodes) {
        const auto& span = manifest.episodes[static_cast<std::size_t>(e)];
        for (std::int64_t t = span.start; t + 1 < span.start + span.count; ++t) ts.push_back(t);
    }
    return ts;
}

EpisodeSplit split_episodes(const sim::DatasetManifest& manifest, double val_fraction,
                            std::uint64_t seed) {
    const int n = static_cast<int>(manifest.episodes.size());
    if (n == 0) throw UsageError("split_episodes: dataset has no episodes");
    EpisodeSplit split;
    if (n == 1) {
        split.train = {0};
        split.val = {0};
        return split;
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    auto rng = Rng::substream(seed, "split");
    rng.shuffle(order.begin(), order.end());
    const int n_val = std::clamp(static_cast<int>(std::llround(val_fraction * n)), 1, n - 1);
    split.val.assign(order.begin(), order.begin() + n_val);
    split.train.assign(order.begin() + n_val, order.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.train.begin(), split.train.end());
    return split;
}

SensorBatch make_inputs(const sim::DatasetReader& data, const std::vector<std::int64_t>& ts,
                        const ModalityConfig& cfg) {
    const auto b = static_cast<std::int64_t>(ts.size());
    SensorBatch out;
    if (cfg.in_proprio) out.proprio = num::TensorT<float>({b, kProprioDim});
    if (cfg.in_vision) out.vision = num::TensorT<float>({b, 3, kImageSize, kImageSize});
    if (cfg.in_force) out.force = num::TensorT<float>({b, kForceDim});
    for (std::int64_t i = 0; i < b; ++i) {
        const auto rec = data.frame(ts[static_cast<std::size_t>(i)]);
        if (cfg.in_proprio) {
            float* dst = out.proprio.data.data() + i * kProprioDim;
            std::copy(rec.qf(), rec.qf() + sim::kQfDim, dst);
            std::copy(rec.qr(), rec.qr() + sim::kQrDim, dst + sim::kQfDim);
        }
        if (cfg.in_vision)
            transpose_hwc(rec.vision(), 3, out.vision.data.data() + i * sim::kVisionDim);
        if (cfg.in_force)
            std::copy(rec.force(), rec.force() + kForceDim, out.force.data.data() + i * kForceDim);
    }
    return out;
}

TargetBatch make_targets(const sim::DatasetReader& data, const std::vector<std::int64_t>& ts,
                         const ModalityConfig& cfg) {
    const auto b = static_cast<std::int64_t>(ts.size());
    TargetBatch out;
    if (cfg.out_proprio) out.proprio = num::TensorT<float>({b, kProprioDim});
    if (cfg.out_force) out.force = num::TensorT<float>({b, kForceDim});
    if (cfg.out_flow) out.flow = num::TensorT<float>({b, 2, kImageSize, kImageSize});
    for (std::int64_t i = 0; i < b; ++i) {
        const std::int64_t t = ts[static_cast<std::size_t>(i)];
        if (t + 1 >= data.frame_count())
            throw UsageError("make_targets: pair index " + std::to_string(t) +
                             " has no successor frame");
        if (cfg.out_proprio || cfg.out_force) {
            const auto next = data.frame(t + 1);
            if (cfg.out_proprio) {
                float* dst = out.proprio.data.data() + i * kProprioDim;
                std::copy(next.qf(), next.qf() + sim::kQfDim, dst);
                std::copy(next.qr(), next.qr() + sim::kQrDim, dst + sim::kQfDim);
            }
            if (cfg.out_force)
                std::copy(next.force(), next.force() + kForceDim,
                          out.force.data.data() + i * kForceDim);
        }
        if (cfg.out_flow) {
            // Frame t stores the t -> t+1 flow field.
            const auto rec = data.frame(t);
            transpose_hwc(rec.flow(), 2, out.flow.data.data() + i * sim::kFlowDim);
        }
    }
    return out;
}

num::TensorT<float> make_actions(const sim::DatasetReader& data, const std::vector<std::int64_t>& ts) {
    const auto b = static_cast<std::int64_t>(ts.size());
    num::TensorT<float> out({b, kActionDim});
    for (std::int64_t i = 0; i < b; ++i) {
        const auto rec = data.frame(ts[static_cast<std::size_t>(i)]);
        std::copy(rec.action(), rec.action() + kActionDim, out.data.data() + i * kActionDim);
    }
    return out;
}

TrainResult train(WorldModel& model, const sim::DatasetReader& data, const TrainOptions& opt) {
    if (opt.epochs < 0) throw UsageError("train: epochs must be >= 0");
    if (opt.batch_size < 1) throw UsageError("train: batch_size must be >= 1");

    TrainResult res;
    res.split = split_episodes(data.manifest(), opt.val_fraction, opt.seed);
    auto train_ts = pair_indices(data.manifest(), res.split.train);
    const auto val_ts = pair_indices(data.manifest(), res.split.val);
    if (train_ts.empty())
        throw UsageError("train: no training pairs; episodes need at least 2 frames");

    num::AdamConfigT<float> acfg;
    acfg.lr = static_cast<float>(opt.lr);
    num::AdamT<float> adam(model.parameters(), acfg);

    // One stream drives both the epoch shuffles and the reparameterization
    // draws, so a single engine state fully determines the run.
    auto trng = Rng::substream(opt.seed, "train");

    auto last_good = snapshot_params(model);
    const auto batch_of = [&](const std::vector<std::int64_t>& ts, std::size_t lo) {
        const std::size_t hi = std::min(ts.size(), lo + static_cast<std::size_t>(opt.batch_size));
        return std::vector<std::int64_t>(ts.begin() + static_cast<std::ptrdiff_t>(lo),
                                         ts.begin() + static_cast<std::ptrdiff_t>(hi));
    };

    for (int epoch = 1; epoch <= opt.epochs && !res.aborted; ++epoch) {
        trng.shuffle(train_ts.begin(), train_ts.end());
        StatAccum acc;
        for (std::size_t lo = 0; lo < train_ts.size();
             lo += static_cast<std::size_t>(opt.batch_size)) {
            const auto ts = batch_of(train_ts, lo);
            const auto batch = load_batch(data, ts, model.config());
            ElboTermsT<float> terms;
            try {
                terms = forward_elbo(model, batch, &trng);
                if (!std::isfinite(terms.elbo)) throw NumericError("train: non-finite loss");
                adam.zero_grad();
                num::backward(terms.total);
                adam.step();
            } catch (const NumericError&) {
                // Divergence: roll back to the end of the last finite epoch
                // and stop rather than write garbage.
                restore_params(model, last_good);
                res.aborted = true;
                break;
            }
            ++res.steps;
            acc.add(terms, static_cast<std::int64_t>(ts.size()));
        }
        if (res.aborted) break;

        StatAccum vacc;
        {
            num::NoGradGuard guard;
            for (std::size_t lo = 0; lo < val_ts.size();
                 lo += static_cast<std::size_t>(opt.batch_size)) {
                const auto ts = batch_of(val_ts, lo);
                const auto batch = load_batch(data, ts, model.config());
                vacc.add(forward_elbo(model, batch, nullptr),
                         static_cast<std::int64_t>(ts.size()));
            }
        }

        EpochStats row;
        row.epoch = epoch;
        row.train_elbo = acc.mean_elbo();
        row.val_elbo = vacc.mean_elbo();
        row.recon_proprio = acc.n ? acc.rp / static_cast<double>(acc.n) : 0.0;
        row.recon_force = acc.n ? acc.rf / static_cast<double>(acc.n) : 0.0;
        row.recon_flow = acc.n ? acc.rfl / static_cast<double>(acc.n) : 0.0;
        row.kl = acc.n ? acc.kl / static_cast<double>(acc.n) : 0.0;
        res.log.push_back(row);
        last_good = snapshot_params(model);
    }

    res.rng_state = trng.state();
    if (!opt.loss_csv.empty()) write_loss_csv(opt.loss_csv, res.log);
    return res;
}

void write_loss_csv(const std::string& path, const std::vector<EpochStats>& log) {
    std::ofstream out(path);
    if (!out) throw DataFormatError("train: cannot write " + path);
    out << "epoch,train_elbo,val_elbo,recon_proprio,recon_force,recon_flow,kl\n";
    out << std::setprecision(17);
    for (const auto& r : log)
        out << r.epoch << ',' << r.train_elbo << ',' << r.val_elbo << ',' << r.recon_proprio
            << ',' << r.recon_force << ',' << r.recon_flow << ',' << r.kl << '\n';
    if (!out) throw DataFormatError("train: short write to " + path);
}

std::vector<RmseRow> eval_rmse(const WorldModel& model, const sim::DatasetReader& data,
                               const std::vector<int>& episodes) {
    check_episode_ids(data.manifest(), episodes, "eval_rmse");
    const auto ts = pair_indices(data.manifest(), episodes);
    if (ts.empty()) throw UsageError("eval_rmse: evaluation split is empty");

    const auto& cfg = model.config();
    std::vector<std::vector<double>> per_frame(3);  // proprio, force, flow

    num::NoGradGuard guard;
    constexpr std::size_t kEvalBatch = 64;
    for (std::size_t lo = 0; lo < ts.size(); lo += kEvalBatch) {
        const std::size_t hi = std::min(ts.size(), lo + kEvalBatch);
        const std::vector<std::int64_t> chunk(ts.begin() + static_cast<std::ptrdiff_t>(lo),
                                              ts.begin() + static_cast<std::ptrdiff_t>(hi));
        const auto batch = load_batch(data, chunk, cfg);
        const auto latent = model.encode(batch.inputs);
        const auto pred = model.decode(model.condition(latent.z, batch.actions));

        auto rmse_rows = [&](const num::VarT<float>& p, const num::TensorT<float>& t, int slot) {
            if (!p.defined()) return;
            const auto& pv = p.value();
            const std::int64_t n = static_cast<std::int64_t>(chunk.size());
            const std::int64_t stride = pv.numel() / n;
            for (std::int64_t i = 0; i < n; ++i) {
                double sse = 0.0;
                for (std::int64_t k = 0; k < stride; ++k) {
                    const double d = static_cast<double>(pv[i * stride + k]) -
                                     static_cast<double>(t[i * stride + k]);
                    sse += d * d;
                }
                per_frame[static_cast<std::size_t>(slot)].push_back(
                    std::sqrt(sse / static_cast<double>(stride)));
            }
        };
        rmse_rows(pred.proprio, batch.targets.proprio, 0);
        rmse_rows(pred.force, batch.targets.force, 1);
        rmse_rows(pred.flow, batch.targets.flow, 2);
    }

    const char* names[3] = {"proprio", "force", "flow"};
    std::vector<RmseRow> rows;
    for (int m = 0; m < 3; ++m) {
        const auto& v = per_frame[static_cast<std::size_t>(m)];
        if (v.empty()) continue;
        const double n = static_cast<double>(v.size());
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        RmseRow row;
        row.modality = names[m];
        row.mean = mean;
        row.stddev = std::sqrt(var / n);
        row.frames = static_cast<std::int64_t>(v.size());
        rows.push_back(row);
    }
    return rows;
}

void write_rmse_csv(const std::string& path, const std::vector<RmseRow>& rows) {
    std::ofstream out(path);
    if (!out) throw DataFormatError("eval_rmse: cannot write " + path);
    out << "modality,rmse_mean,rmse_std,frames\n";
    out << std::setprecision(17);
    for (const auto& r : rows)
        out << r.modality << ',' << r.mean << ',' << r.stddev << ',' << r.frames << '\n';
    if (!out) throw DataFormatError("eval_rmse: short write to " + path);
}

}  // namespace softperc::cvae
