#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "softperc/autodiff.hpp"
#include "softperc/common.hpp"
#include "softperc/probe/probe.hpp"
#include "softperc/rng.hpp"

namespace softperc::probe {

namespace {

using num::TensorT;
using num::VarT;

ProbeReport make_report(ProbeKind kind, std::vector<double> values, const ProbeConfig& cfg) {
    ProbeReport r;
    r.kind = kind;
    r.rmse = std::move(values);
    r.config = cfg;
    if (r.rmse.empty()) return r;
    double sum = 0.0;
    for (const double v : r.rmse) sum += v;
    r.mean = sum / double(r.rmse.size());
    if (r.rmse.size() >= 2) {
        r.has_spread = true;
        // A degenerate distribution must report a spread of exactly zero,
        // not the round-off of mean subtraction.
        const bool all_equal =
            std::all_of(r.rmse.begin(), r.rmse.end(), [&](double v) { return v == r.rmse[0]; });
        if (!all_equal) {
            double ss = 0.0;
            for (const double v : r.rmse) ss += (v - r.mean) * (v - r.mean);
            r.stddev = std::sqrt(ss / double(r.rmse.size()));
        }
    }
    return r;
}

/// Pairs of (prediction tensor, reference tensor) reduced to one RMSE per
/// prediction row; a broadcast reference compares every row against its
/// row 0.
struct RmsePairs {
    struct Pair {
        const TensorT<float>* pred;
        const TensorT<float>* ref;
        bool broadcast;
    };
    std::vector<Pair> pairs;

    void add(const TensorT<float>& pred, const TensorT<float>& ref, bool broadcast) {
        pairs.push_back({&pred, &ref, broadcast});
    }
    std::vector<double> per_row(std::int64_t rows) const {
        std::vector<double> out(rows, 0.0);
        if (pairs.empty()) return {};
        std::vector<double> dims(rows, 0.0);
        for (const Pair& p : pairs) {
            const std::int64_t stride = p.pred->numel() / p.pred->dim(0);
            for (std::int64_t r = 0; r < rows; ++r) {
                const std::int64_t rr = p.broadcast ? 0 : r;
                double sse = 0.0;
                for (std::int64_t i = 0; i < stride; ++i) {
                    const double d = double((*p.pred)[r * stride + i]) -
                                     double((*p.ref)[rr * stride + i]);
                    sse += d * d;
                }
                out[r] += sse;
                dims[r] += double(stride);
            }
        }
        for (std::int64_t r = 0; r < rows; ++r) out[r] = std::sqrt(out[r] / dims[r]);
        return out;
    }
};

/// Per-row RMSE of every configured output against the matching truth rows.
std::vector<double> rmse_vs_truth(const cvae::ModalityConfig& cfg, const cvae::Prediction& pred,
                                  const cvae::TargetBatch& truth, std::int64_t rows,
                                  bool broadcast_truth, const char* who) {
    RmsePairs acc;
    if (cfg.out_proprio) {
        if (truth.proprio.numel() == 0)
            throw UsageError(std::string(who) + ": truth is missing proprio targets");
        acc.add(pred.proprio.value(), truth.proprio, broadcast_truth);
    }
    if (cfg.out_force) {
        if (truth.force.numel() == 0)
            throw UsageError(std::string(who) + ": truth is missing force targets");
        acc.add(pred.force.value(), truth.force, broadcast_truth);
    }
    if (cfg.out_flow) {
        if (truth.flow.numel() == 0)
            throw UsageError(std::string(who) + ": truth is missing flow targets");
        acc.add(pred.flow.value(), truth.flow, broadcast_truth);
    }
    return acc.per_row(rows);
}

TensorT<float> replicate_rows(const TensorT<float>& row, std::int64_t n) {
    const std::int64_t stride = row.numel();
    num::Shape s = row.shape;
    s[0] = n;
    TensorT<float> out(s);
    for (std::int64_t r = 0; r < n; ++r)
        std::copy(row.data.begin(), row.data.end(), out.data.begin() + r * stride);
    return out;
}

/// Stack single-frame predictions into one batch, preserving bits.
cvae::Prediction concat_predictions(const std::vector<cvae::Prediction>& parts) {
    const auto stack = [&](auto member) -> VarT<float> {
        if (!(parts.front().*member).defined()) return {};
        const TensorT<float>& head = (parts.front().*member).value();
        num::Shape s = head.shape;
        s[0] = std::int64_t(parts.size());
        TensorT<float> out(s);
        const std::int64_t stride = head.numel();
        for (std::size_t i = 0; i < parts.size(); ++i) {
            const auto& t = (parts[i].*member).value();
            std::copy(t.data.begin(), t.data.end(), out.data.begin() + std::int64_t(i) * stride);
        }
        return VarT<float>::constant(std::move(out));
    };
    cvae::Prediction out;
    out.proprio = stack(&cvae::Prediction::proprio);
    out.force = stack(&cvae::Prediction::force);
    out.flow = stack(&cvae::Prediction::flow);
    return out;
}

void check_single_frame(const num::TensorT<float>& mu, const char* who) {
    if (mu.dim(0) != 1)
        throw UsageError(std::string(who) + ": probe expects a single frame, got batch " +
                         std::to_string(mu.dim(0)));
}

void check_actions(const num::TensorT<float>& actions, std::int64_t rows, const char* who) {
    if (actions.ndim() != 2 || actions.dim(0) != rows || actions.dim(1) != cvae::kActionDim)
        throw UsageError(std::string(who) + ": actions must be [" + std::to_string(rows) +
                         ", " + std::to_string(cvae::kActionDim) + "]");
}

double mean_flow_magnitude(const TensorT<float>& flow) {
    const std::int64_t b = flow.dim(0);
    const std::int64_t hw = flow.dim(2) * flow.dim(3);
    double total = 0.0;
    for (std::int64_t i = 0; i < b; ++i) {
        const std::int64_t base = i * 2 * hw;
        for (std::int64_t p = 0; p < hw; ++p)
            total += std::hypot(double(flow[base + p]), double(flow[base + hw + p]));
    }
    return total / double(b * hw);
}

nlohmann::json config_json(const ProbeConfig& cfg) {
    return {{"trials", cfg.trials},
            {"noise", cfg.noise},
            {"horizon", cfg.horizon},
            {"seed", cfg.seed},
            {"clamp_variance", cfg.clamp_variance},
            {"prior_mode", cfg.prior_mode},
            {"sample_latents", cfg.sample_latents}};
}

nlohmann::json report_json(const ProbeReport& r) {
    nlohmann::json j{{"kind", probe_kind_name(r.kind)},
                     {"rmse", r.rmse},
                     {"mean", r.mean},
                     {"config", config_json(r.config)}};
    if (r.has_spread) j["stddev"] = r.stddev;  // absent when undefined (K = 1)
    return j;
}

}  // namespace

std::string probe_kind_name(ProbeKind kind) {
    switch (kind) {
        case ProbeKind::kResample: return "resample";
        case ProbeKind::kActionNull: return "action-null";
        case ProbeKind::kActionRandom: return "action-random";
        case ProbeKind::kSyntheticLatent: return "synthetic-latent";
        case ProbeKind::kActionSweep: return "action-sweep";
        case ProbeKind::kRollout: return "rollout";
    }
    return "unknown";
}

std::string probe_report_json(const ProbeReport& report) {
    return report_json(report).dump(2);
}

ProbeReport resample_stability(const cvae::WorldModel& model, const cvae::SensorBatch& frame,
                               const num::TensorT<float>& actions,
                               const cvae::TargetBatch& truth, const ProbeConfig& cfg) {
    if (cfg.trials < 1)
        throw UsageError("resample: need at least one trial, got " +
                         std::to_string(cfg.trials));
    num::NoGradGuard guard;
    const auto lat = model.encode(frame);
    const TensorT<float>& mu = lat.mu.value();
    const TensorT<float>& logvar = lat.logvar.value();
    check_single_frame(mu, "resample");
    check_actions(actions, 1, "resample");

    // One decode per draw at batch size 1: identical latents then take the
    // identical code path, so a clamped variance yields bit-identical
    // predictions and an exactly zero spread (batched GEMM rounds rows
    // differently depending on their position in the batch).
    const std::int64_t k = cfg.trials;
    const std::int64_t d = mu.dim(1);
    Rng rng = Rng::substream(cfg.seed, "resample");
    std::vector<double> rmse;
    rmse.reserve(k);
    for (std::int64_t t = 0; t < k; ++t) {
        TensorT<float> z({1, d});
        for (std::int64_t j = 0; j < d; ++j) {
            const double eps = rng.normal();
            z[j] = cfg.clamp_variance ? mu[j]
                                      : mu[j] + std::exp(0.5f * logvar[j]) * float(eps);
        }
        const auto pred =
            model.decode(model.condition(VarT<float>::constant(std::move(z)), actions));
        rmse.push_back(rmse_vs_truth(model.config(), pred, truth, 1, true, "resample")[0]);
    }
    return make_report(ProbeKind::kResample, std::move(rmse), cfg);
}

ActionPerturbation action_perturbation(const cvae::WorldModel& model,
                                       const cvae::SensorBatch& frames,
                                       const cvae::TargetBatch& truth,
                                       const sim::ActionBounds& bounds, std::uint64_t seed) {
    num::NoGradGuard guard;
    const auto lat = model.encode(frames);  // mean mode, shared by both cases
    const std::int64_t b = lat.mu.value().dim(0);
    const auto& cfg = model.config();

    TensorT<float> null_a({b, cvae::kActionDim});
    TensorT<float> rand_a({b, cvae::kActionDim});
    Rng rng = Rng::substream(seed, "action-random");
    const double bound[3] = {bounds.dq1, bounds.dq2, bounds.dq3};
    for (std::int64_t i = 0; i < b; ++i)
        for (std::int64_t j = 0; j < 3; ++j)
            rand_a[i * 3 + j] = float(rng.uniform(-bound[j], bound[j]));

    const auto pred_null = model.decode(model.condition(lat.z, null_a));
    const auto pred_rand = model.decode(model.condition(lat.z, rand_a));

    // Against the input frame's own sensors, over the modalities present on
    // both sides of the model.
    const auto vs_input = [&](const cvae::Prediction& pred) {
        RmsePairs acc;
        if (cfg.in_proprio && cfg.out_proprio) acc.add(pred.proprio.value(), frames.proprio, false);
        if (cfg.in_force && cfg.out_force) acc.add(pred.force.value(), frames.force, false);
        return acc.per_row(b);
    };

    ProbeConfig echo;
    echo.trials = int(b);
    echo.seed = seed;

    ActionPerturbation probe;
    probe.null_vs_input = make_report(ProbeKind::kActionNull, vs_input(pred_null), echo);
    probe.random_vs_input = make_report(ProbeKind::kActionRandom, vs_input(pred_rand), echo);
    probe.null_vs_truth = make_report(
        ProbeKind::kActionNull, rmse_vs_truth(cfg, pred_null, truth, b, false, "action"), echo);
    probe.random_vs_truth = make_report(
        ProbeKind::kActionRandom, rmse_vs_truth(cfg, pred_rand, truth, b, false, "action"), echo);
    if (cfg.out_flow) {
        probe.null_flow_mean = mean_flow_magnitude(pred_null.flow.value());
        probe.random_flow_mean = mean_flow_magnitude(pred_rand.flow.value());
    }
    return probe;
}

std::string action_perturbation_json(const ActionPerturbation& probe) {
    nlohmann::json j{{"null_vs_input", report_json(probe.null_vs_input)},
                     {"random_vs_input", report_json(probe.random_vs_input)},
                     {"null_vs_truth", report_json(probe.null_vs_truth)},
                     {"random_vs_truth", report_json(probe.random_vs_truth)},
                     {"null_flow_mean", probe.null_flow_mean},
                     {"random_flow_mean", probe.random_flow_mean}};
    return j.dump(2);
}

SyntheticLatent synthetic_latent(const cvae::WorldModel& model, const cvae::SensorBatch& frame,
                                 const num::TensorT<float>& actions, const ProbeConfig& cfg) {
    if (cfg.trials < 1)
        throw UsageError("synthetic: need at least one draw, got " + std::to_string(cfg.trials));
    if (!(cfg.noise >= 0.0))
        throw UsageError("synthetic: noise scale must be nonnegative, got " +
                         std::to_string(cfg.noise));
    num::NoGradGuard guard;
    const auto lat = model.encode(frame);
    const TensorT<float>& mu = lat.mu.value();
    check_single_frame(mu, "synthetic");
    check_actions(actions, 1, "synthetic");

    // Baseline and every draw decode at batch size 1, so a zero noise scale
    // reproduces the baseline bit for bit (identical latents take the
    // identical code path; batched GEMM would not guarantee that).
    const std::int64_t k = cfg.trials;
    const std::int64_t d = mu.dim(1);
    const auto& mc = model.config();
    const auto baseline = model.decode(model.condition(lat.mu, actions));

    SyntheticLatent out;
    Rng rng = Rng::substream(cfg.seed, "synthetic");
    std::vector<double> dev;
    dev.reserve(k);
    std::vector<cvae::Prediction> draws;
    draws.reserve(k);
    for (std::int64_t t = 0; t < k; ++t) {
        TensorT<float> z({1, d});
        for (std::int64_t j = 0; j < d; ++j) {
            const double eps = rng.normal();
            z[j] = cfg.prior_mode ? float(eps) : float(double(mu[j]) + cfg.noise * eps);
        }
        const auto pred =
            model.decode(model.condition(VarT<float>::constant(std::move(z)), actions));
        RmsePairs acc;
        if (mc.out_proprio) acc.add(pred.proprio.value(), baseline.proprio.value(), true);
        if (mc.out_force) acc.add(pred.force.value(), baseline.force.value(), true);
        if (mc.out_flow) acc.add(pred.flow.value(), baseline.flow.value(), true);
        dev.push_back(acc.per_row(1)[0]);
        draws.push_back(pred);
    }

    out.report = make_report(ProbeKind::kSyntheticLatent, std::move(dev), cfg);
    out.baseline = baseline;
    out.draws = concat_predictions(draws);
    return out;
}

ActionSweep action_sweep(const cvae::WorldModel& model, const cvae::SensorBatch& frame,
                         const num::TensorT<float>& grid) {
    if (grid.ndim() != 2 || grid.dim(1) != cvae::kActionDim || grid.dim(0) < 1)
        throw UsageError("action-sweep: grid must be [G, 3] with at least one action");
    num::NoGradGuard guard;
    const auto lat = model.encode(frame);
    const TensorT<float>& mu = lat.mu.value();
    check_single_frame(mu, "action-sweep");

    const std::int64_t g = grid.dim(0);
    ActionSweep out;
    out.actions = grid;
    out.predictions =
        model.decode(model.condition(VarT<float>::constant(replicate_rows(mu, g)), grid));

    RmsePairs acc;
    const auto& mc = model.config();
    if (mc.out_proprio) acc.add(out.predictions.proprio.value(), out.predictions.proprio.value(), true);
    if (mc.out_force) acc.add(out.predictions.force.value(), out.predictions.force.value(), true);
    if (mc.out_flow) acc.add(out.predictions.flow.value(), out.predictions.flow.value(), true);

    ProbeConfig echo;
    echo.trials = int(g);
    out.report = make_report(ProbeKind::kActionSweep, acc.per_row(g), echo);
    return out;
}

num::TensorT<float> make_action_grid(int n1, int n2, int n3, const sim::ActionBounds& bounds) {
    if (n1 < 1 || n2 < 1 || n3 < 1)
        throw UsageError("action-sweep: grid sizes must be positive");
    const auto linspace = [](int n, double b) {
        std::vector<float> v(n);
        for (int i = 0; i < n; ++i)
            v[i] = n == 1 ? 0.f : float(-b + 2.0 * b * double(i) / double(n - 1));
        return v;
    };
    const std::vector<float> a1 = linspace(n1, bounds.dq1);
    const std::vector<float> a2 = linspace(n2, bounds.dq2);
    const std::vector<float> a3 = linspace(n3, bounds.dq3);
    TensorT<float> grid({std::int64_t(n1) * n2 * n3, 3});
    std::int64_t r = 0;
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j)
            for (int k = 0; k < n3; ++k) {
                grid[r * 3 + 0] = a1[i];
                grid[r * 3 + 1] = a2[j];
                grid[r * 3 + 2] = a3[k];
                ++r;
            }
    return grid;
}

num::TensorT<float> advect(const num::TensorT<float>& image, const num::TensorT<float>& flow) {
    if (image.ndim() != 4 || image.dim(1) != 3)
        throw UsageError("advect: image must be [B, 3, H, W]");
    if (flow.ndim() != 4 || flow.dim(1) != 2 || flow.dim(0) != image.dim(0) ||
        flow.dim(2) != image.dim(2) || flow.dim(3) != image.dim(3))
        throw UsageError("advect: flow must be [B, 2, H, W] matching the image");

    const std::int64_t b = image.dim(0);
    const std::int64_t h = image.dim(2);
    const std::int64_t w = image.dim(3);
    const std::int64_t hw = h * w;
    TensorT<float> out(image.shape);
    for (std::int64_t i = 0; i < b; ++i) {
        const std::int64_t fbase = i * 2 * hw;
        for (std::int64_t r = 0; r < h; ++r) {
            for (std::int64_t c = 0; c < w; ++c) {
                const float du = flow[fbase + r * w + c];
                const float dv = flow[fbase + hw + r * w + c];
                float sx = float(c) - du;
                float sy = float(r) - dv;
                sx = std::clamp(sx, 0.f, float(w - 1));
                sy = std::clamp(sy, 0.f, float(h - 1));
                const std::int64_t x0 = std::int64_t(sx);
                const std::int64_t y0 = std::int64_t(sy);
                const std::int64_t x1 = std::min(x0 + 1, w - 1);
                const std::int64_t y1 = std::min(y0 + 1, h - 1);
                const float fx = sx - float(x0);
                const float fy = sy - float(y0);
                for (std::int64_t ch = 0; ch < 3; ++ch) {
                    const std::int64_t base = (i * 3 + ch) * hw;
                    const float p00 = image[base + y0 * w + x0];
                    const float p01 = image[base + y0 * w + x1];
                    const float p10 = image[base + y1 * w + x0];
                    const float p11 = image[base + y1 * w + x1];
                    out[base + r * w + c] = (1.f - fy) * ((1.f - fx) * p00 + fx * p01) +
                                            fy * ((1.f - fx) * p10 + fx * p11);
                }
            }
        }
    }
    return out;
}

Rollout feedback_rollout(const cvae::WorldModel& model, const cvae::SensorBatch& frame,
                         const num::TensorT<float>& actions, const ProbeConfig& cfg) {
    const auto& mc = model.config();
    // Closing the loop needs every input reconstructible from the outputs.
    if (mc.in_proprio && !mc.out_proprio)
        throw UsageError("rollout: proprio input is not covered by the model's outputs");
    if (mc.in_vision && !mc.out_flow)
        throw UsageError("rollout: vision input needs a flow output to advect with");
    if (mc.in_force && !mc.out_force)
        throw UsageError("rollout: force input is not covered by the model's outputs");
    if (actions.ndim() != 2 || actions.dim(1) != cvae::kActionDim || actions.dim(0) < 1)
        throw UsageError("rollout: actions must be [H, 3] with H >= 1");

    const std::int64_t horizon = actions.dim(0);
    Rng sampler = Rng::substream(cfg.seed, "rollout");

    Rollout out;
    cvae::SensorBatch cur = frame;
    for (std::int64_t h = 0; h < horizon; ++h) {
        TensorT<float> a({1, cvae::kActionDim});
        for (std::int64_t j = 0; j < cvae::kActionDim; ++j) a[j] = actions[h * 3 + j];
        const auto pr =
            cvae::predict(model, cur, a, cfg.sample_latents ? &sampler : nullptr);

        RolloutStep step;
        step.prediction = pr.prediction;
        RmsePairs acc;
        if (mc.in_proprio && mc.out_proprio)
            acc.add(step.prediction.proprio.value(), frame.proprio, false);
        else if (mc.in_force && mc.out_force)
            acc.add(step.prediction.force.value(), frame.force, false);
        const std::vector<double> drift = acc.per_row(1);
        step.drift = drift.empty() ? 0.0 : drift[0];

        if (mc.in_proprio) cur.proprio = step.prediction.proprio.value();
        if (mc.in_vision) {
            cur.vision = advect(cur.vision, step.prediction.flow.value());
            step.next_vision = cur.vision;
        }
        if (mc.in_force) cur.force = step.prediction.force.value();
        out.steps.push_back(std::move(step));
    }

    std::vector<double> drifts;
    for (const RolloutStep& s : out.steps) drifts.push_back(s.drift);
    ProbeConfig echo = cfg;
    echo.horizon = int(horizon);
    out.report = make_report(ProbeKind::kRollout, std::move(drifts), echo);
    return out;
}

std::string rollout_json(const Rollout& probe) {
    nlohmann::json steps = nlohmann::json::array();
    for (const RolloutStep& s : probe.steps) {
        nlohmann::json step{{"drift", s.drift}};
        if (s.prediction.force.defined()) {
            const auto& f = s.prediction.force.value();
            step["force"] = std::vector<float>(f.data.begin(), f.data.end());
        }
        steps.push_back(std::move(step));
    }
    nlohmann::json j{{"report", report_json(probe.report)}, {"steps", std::move(steps)}};
    return j.dump(2);
}

}  // namespace softperc::probe
