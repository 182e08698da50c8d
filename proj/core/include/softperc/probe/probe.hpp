#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "softperc/cvae/model.hpp"
#include "softperc/sim/sim.hpp"
#include "softperc/tensor.hpp"

namespace softperc::probe {

// Generative-property probes: all run the model read-only in inference mode
// and report per-trial RMSE figures with their full configuration echoed
// back, so a report is auditable on its own.

enum class ProbeKind {
    kResample,
    kActionNull,
    kActionRandom,
    kSyntheticLatent,
    kActionSweep,
    kRollout,
};
std::string probe_kind_name(ProbeKind kind);

struct ProbeConfig {
    int trials = 100;              // K
    double noise = 1.0;            // sigma_n for synthetic-latent draws
    int horizon = 3;               // H for rollouts
    std::uint64_t seed = 0;
    bool clamp_variance = false;   // resample: force sigma = 0
    bool prior_mode = false;       // synthetic-latent: draw z ~ N(0, I) outright
    bool sample_latents = false;   // rollout: sampled instead of mean-mode latents
};

struct ProbeReport {
    ProbeKind kind = ProbeKind::kResample;
    std::vector<double> rmse;  // one value per trial / frame / grid point / step
    double mean = 0.0;
    double stddev = 0.0;       // population; meaningful only when has_spread
    bool has_spread = false;   // false for fewer than 2 values
    ProbeConfig config;
};

std::string probe_report_json(const ProbeReport& report);

/// Encode once, draw K latents from the posterior, decode each, and report
/// the per-draw RMSE against the ground-truth next frame. With
/// cfg.clamp_variance every draw collapses onto the mean and the spread is
/// exactly zero.
ProbeReport resample_stability(const cvae::WorldModel& model, const cvae::SensorBatch& frame,
                               const num::TensorT<float>& actions,
                               const cvae::TargetBatch& truth, const ProbeConfig& cfg);

/// Null-action vs random-action comparison over a batch of frames: RMSE of
/// the prediction against the input frame's own sensors (quasi-static data
/// should make the null case near-identity), RMSE against the true next
/// frame, and the mean predicted flow magnitude per case.
struct ActionPerturbation {
    ProbeReport null_vs_input;
    ProbeReport random_vs_input;
    ProbeReport null_vs_truth;
    ProbeReport random_vs_truth;
    double null_flow_mean = 0.0;    // mean |flow| in pixels, 0 when flow is off
    double random_flow_mean = 0.0;
};
ActionPerturbation action_perturbation(const cvae::WorldModel& model,
                                       const cvae::SensorBatch& frames,
                                       const cvae::TargetBatch& truth,
                                       const sim::ActionBounds& bounds, std::uint64_t seed);
std::string action_perturbation_json(const ActionPerturbation& probe);

/// Perturb the encoded latent with white noise (or replace it with a prior
/// draw) under a fixed action and decode. The report carries the per-draw
/// RMSE against the mean-mode baseline; baseline and draws all decode at
/// batch size 1 so a zero noise scale reproduces the baseline bit for bit.
struct SyntheticLatent {
    ProbeReport report;
    cvae::Prediction baseline;  // batch of 1
    cvae::Prediction draws;     // batch of K
};
SyntheticLatent synthetic_latent(const cvae::WorldModel& model, const cvae::SensorBatch& frame,
                                 const num::TensorT<float>& actions, const ProbeConfig& cfg);

/// Decode one fixed mean-mode latent under every action of a grid.
struct ActionSweep {
    num::TensorT<float> actions;     // [G, 3]
    cvae::Prediction predictions;    // leading dimension G
    ProbeReport report;              // per-point RMSE relative to grid row 0
};
ActionSweep action_sweep(const cvae::WorldModel& model, const cvae::SensorBatch& frame,
                         const num::TensorT<float>& grid);

/// Axis-aligned action grid spanning [-b, +b] per component (a single point
/// sits at 0), row-major with the last axis fastest.
num::TensorT<float> make_action_grid(int n1, int n2, int n3, const sim::ActionBounds& bounds);

/// Bilinear backward warp: out(r, c) = image(r - dv, c - du) with
/// border-clamped sampling. image is [B, 3, H, W], flow [B, 2, H, W] in
/// pixel units (du = columns, dv = rows). A zero flow field returns the
/// image unchanged.
num::TensorT<float> advect(const num::TensorT<float>& image, const num::TensorT<float>& flow);

/// Closed-loop rollout: predict, rebuild the next input frame from the
/// predicted proprioception and the flow-advected image, repeat. The model's
/// outputs must cover its inputs. Drift is the RMSE of each step's
/// prediction against the initial frame's own sensors.
struct RolloutStep {
    cvae::Prediction prediction;
    num::TensorT<float> next_vision;  // advected image fed forward ([1,3,H,W], empty if vision off)
    double drift = 0.0;
};
struct Rollout {
    std::vector<RolloutStep> steps;
    ProbeReport report;  // per-step drift
};
Rollout feedback_rollout(const cvae::WorldModel& model, const cvae::SensorBatch& frame,
                         const num::TensorT<float>& actions, const ProbeConfig& cfg);
std::string rollout_json(const Rollout& probe);

}  // namespace softperc::probe
