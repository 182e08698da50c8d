#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "softperc/cvae/model.hpp"
#include "softperc/sim/dataset.hpp"

namespace softperc::cvae {

/// Self-supervised pairs are (t, t+1) strictly inside one episode span; the
/// returned values are the t indices. Frame t supplies the inputs, the
/// action, and the flow target (its stored flow is the t -> t+1 field);
/// frame t+1 supplies the proprio/force targets.
std::vector<std::int64_t> pair_indices(const sim::DatasetManifest& manifest,
                                       const std::vector<int>& episodes);

/// Episode-level holdout split; deterministic in (manifest, fraction, seed).
/// With two or more episodes the validation side gets at least one; a
/// single-episode dataset falls back to validating on the training episode.
struct EpisodeSplit {
    std::vector<int> train;
    std::vector<int> val;
};
EpisodeSplit split_episodes(const sim::DatasetManifest& manifest, double val_fraction,
                            std::uint64_t seed);

/// Gather model inputs for frames `ts` (records read from `data`, vision
/// transposed HWC -> CHW). Only the configured modalities are populated.
SensorBatch make_inputs(const sim::DatasetReader& data, const std::vector<std::int64_t>& ts,
                        const ModalityConfig& cfg);

/// Gather next-frame targets for pair indices `ts` (proprio/force from t+1,
/// flow from t, HWC -> CHW).
TargetBatch make_targets(const sim::DatasetReader& data, const std::vector<std::int64_t>& ts,
                         const ModalityConfig& cfg);

/// Actions a_t for frames `ts`, as a [B, 3] tensor.
num::TensorT<float> make_actions(const sim::DatasetReader& data, const std::vector<std::int64_t>& ts);

struct TrainOptions {
    int epochs = 50;
    int batch_size = 128;
    double lr = 1e-3;
    double val_fraction = 0.1;
    std::uint64_t seed = 0;
    std::string loss_csv;  // per-epoch log path; empty writes nothing
};

/// One CSV row. Validation runs in mean mode (z = mu), so val_elbo is free
/// of sampling noise; train_elbo averages the stochastic minibatch losses.
struct EpochStats {
    int epoch = 0;
    double train_elbo = 0.0;
    double val_elbo = 0.0;
    double recon_proprio = 0.0;
    double recon_force = 0.0;
    double recon_flow = 0.0;
    double kl = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> log;
    std::int64_t steps = 0;
    /// Set when a non-finite loss aborted training; the model is rolled back
    /// to its state after the last fully finite epoch.
    bool aborted = false;
    /// Training-stream engine state at exit, for checkpointing.
    std::string rng_state;
    EpisodeSplit split;
};

/// Adam/ELBO training loop over shuffled minibatches of episode-interior
/// pairs. Deterministic given (dataset bytes, options); all randomness comes
/// from substreams of `opt.seed`.
TrainResult train(WorldModel& model, const sim::DatasetReader& data, const TrainOptions& opt);

void write_loss_csv(const std::string& path, const std::vector<EpochStats>& log);

/// Mean-mode per-frame RMSE of each configured output over the pairs of
/// `episodes`, reported as mean and standard deviation across frames.
struct RmseRow {
    std::string modality;
    double mean = 0.0;
    double stddev = 0.0;
    std::int64_t frames = 0;
};
std::vector<RmseRow> eval_rmse(const WorldModel& model, const sim::DatasetReader& data,
                               const std::vector<int>& episodes);

void write_rmse_csv(const std::string& path, const std::vector<RmseRow>& rows);

}  // namespace softperc::cvae
