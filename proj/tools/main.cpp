// softperc: dataset generation, world-model training, and latent analysis
// from one binary. Subcommands are independent processes; every run is
// deterministic in its --seed, and all primary outputs (CSV, JSON, datasets,
// checkpoints) are byte-identical across reruns with the same flags.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "softperc/common.hpp"
#include "softperc/cvae/checkpoint.hpp"
#include "softperc/cvae/train.hpp"
#include "softperc/io/png.hpp"
#include "softperc/lens/lens.hpp"
#include "softperc/probe/probe.hpp"
#include "softperc/rng.hpp"
#include "softperc/sim/dataset.hpp"

namespace {

using softperc::DataFormatError;
using softperc::Rng;
using softperc::UsageError;
namespace cvae = softperc::cvae;
namespace io = softperc::io;
namespace lens = softperc::lens;
namespace num = softperc::num;
namespace probe = softperc::probe;
namespace sim = softperc::sim;

// ----------------------------------------------------------------------------
// shared helpers
// ----------------------------------------------------------------------------

void ensure_parent_dir(const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

void write_text(const std::string& path, const std::string& text) {
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataFormatError("cli: cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw DataFormatError("cli: short write to '" + path + "'");
}

/// Comma-separated modality lists -> model config. The valid names mirror
/// the dataset record fields; anything else is a usage error.
cvae::ModalityConfig parse_modalities(const std::string& inputs, const std::string& outputs,
                                      int latent_dim, double beta) {
    cvae::ModalityConfig cfg;
    cfg.in_proprio = cfg.out_proprio = cfg.out_force = false;
    cfg.latent_dim = latent_dim;
    cfg.beta = beta;
    auto each = [](const std::string& list, auto&& use) {
        std::size_t at = 0;
        while (at <= list.size()) {
            const std::size_t comma = std::min(list.find(',', at), list.size());
            if (comma > at) use(list.substr(at, comma - at));
            at = comma + 1;
        }
    };
    each(inputs, [&](const std::string& name) {
        if (name == "proprio") cfg.in_proprio = true;
        else if (name == "vision") cfg.in_vision = true;
        else if (name == "force") cfg.in_force = true;
        else
            throw UsageError("train: unknown input modality '" + name +
                             "' (expected proprio, vision, force)");
    });
    each(outputs, [&](const std::string& name) {
        if (name == "proprio") cfg.out_proprio = true;
        else if (name == "force") cfg.out_force = true;
        else if (name == "flow") cfg.out_flow = true;
        else
            throw UsageError("train: unknown output modality '" + name +
                             "' (expected proprio, force, flow)");
    });
    cfg.validate();
    return cfg;
}

std::string modality_string(const cvae::ModalityConfig& cfg, bool inputs) {
    std::string s;
    auto add = [&](bool on, const char* name) {
        if (!on) return;
        if (!s.empty()) s += ',';
        s += name;
    };
    if (inputs) {
        add(cfg.in_proprio, "proprio");
        add(cfg.in_vision, "vision");
        add(cfg.in_force, "force");
    } else {
        add(cfg.out_proprio, "proprio");
        add(cfg.out_force, "force");
        add(cfg.out_flow, "flow");
    }
    return s;
}

std::vector<int> all_episodes(const sim::DatasetManifest& manifest) {
    std::vector<int> eps(manifest.episodes.size());
    std::iota(eps.begin(), eps.end(), 0);
    return eps;
}

/// Deterministic subsample: shuffle under the "sample" substream, keep the
/// first max_points, restore temporal order.
std::vector<std::int64_t> subsample(std::vector<std::int64_t> ts, std::int64_t max_points,
                                    std::uint64_t seed) {
    if (max_points <= 0 || std::int64_t(ts.size()) <= max_points) return ts;
    Rng rng = Rng::substream(seed, "sample");
    rng.shuffle(ts.begin(), ts.end());
    ts.resize(std::size_t(max_points));
    std::sort(ts.begin(), ts.end());
    return ts;
}

/// Pair indices for the whole dataset, or a usage error naming the problem.
std::vector<std::int64_t> dataset_pairs(const sim::DatasetReader& data) {
    auto ts = cvae::pair_indices(data.manifest(), all_episodes(data.manifest()));
    if (ts.empty())
        throw UsageError("cli: dataset has no usable (t, t+1) pairs (episodes too short)");
    return ts;
}

num::TensorT<float> flow_panel(const num::TensorT<float>& flow, std::int64_t row) {
    const std::int64_t hw = flow.dim(2) * flow.dim(3);
    num::TensorT<float> panel({2, flow.dim(2), flow.dim(3)});
    std::copy_n(flow.data.begin() + row * 2 * hw, 2 * hw, panel.data.begin());
    return panel;
}

// ----------------------------------------------------------------------------
// simulate
// ----------------------------------------------------------------------------

struct SimulateOpts {
    std::string out;
    int frames = 100;
    int episodes = 1;
    std::uint64_t seed = 0;
    std::uint64_t scene_seed = 0;
    bool scene_fixed = false;
};

void run_simulate(const SimulateOpts& opt) {
    if (opt.frames <= 0)
        throw UsageError("simulate: --frames must be positive, got " +
                         std::to_string(opt.frames));
    if (opt.episodes <= 0)
        throw UsageError("simulate: --episodes must be positive, got " +
                         std::to_string(opt.episodes));

    const double duration_s = opt.frames / sim::kFrameRateHz;
    Rng stream = Rng::substream(opt.seed, "sim");
    sim::DatasetWriter writer(opt.out, opt.seed);
    std::int64_t written = 0;
    int dropped = 0;
    for (int i = 0; i < opt.episodes; ++i) {
        const Rng fork = stream.fork(std::uint64_t(i));
        const std::uint64_t scene_seed =
            opt.scene_fixed ? opt.scene_seed : fork.fork("scene").seed();
        const sim::SceneConfig scene = sim::sample_scene(scene_seed);
        const sim::Episode ep = sim::generate_episode(scene, duration_s, fork.seed());
        written += std::int64_t(ep.frames.size());
        dropped += ep.dropped;
        writer.add_episode(ep);
    }
    writer.finish();
    std::cout << "simulate: wrote " << written << " frames (" << dropped << " dropped) across "
              << opt.episodes << " episode(s) to " << opt.out << "\n";
}

// ----------------------------------------------------------------------------
// train
// ----------------------------------------------------------------------------

struct TrainOpts {
    std::string data;
    std::string out;
    std::string inputs = "proprio";
    std::string outputs = "proprio,force";
    int latent_dim = 16;
    int epochs = 50;
    int batch = 128;
    double lr = 1e-3;
    double val_fraction = 0.1;
    double beta = 1e-3;
    std::uint64_t seed = 0;
};

void run_train(const TrainOpts& opt) {
    const cvae::ModalityConfig cfg =
        parse_modalities(opt.inputs, opt.outputs, opt.latent_dim, opt.beta);
    sim::DatasetReader data(opt.data);
    Rng init = Rng::substream(opt.seed, "init");
    cvae::WorldModel model(cfg, init);

    std::filesystem::create_directories(opt.out);
    cvae::TrainOptions topt;
    topt.epochs = opt.epochs;
    topt.batch_size = opt.batch;
    topt.lr = opt.lr;
    topt.val_fraction = opt.val_fraction;
    topt.seed = opt.seed;
    topt.loss_csv = opt.out + "/loss.csv";
    const cvae::TrainResult result = cvae::train(model, data, topt);
    cvae::save_checkpoint(opt.out, model, result.steps, result.rng_state);

    if (result.log.empty()) {
        std::cout << "train: no epochs ran\n";
        return;
    }
    const auto& first = result.log.front();
    const auto& last = result.log.back();
    std::cout << "train: " << result.log.size() << " epoch(s), train ELBO " << first.train_elbo
              << " -> " << last.train_elbo << ", val ELBO " << last.val_elbo << ", "
              << result.steps << " steps\n";
    if (result.aborted)
        std::cout << "train: aborted on a non-finite loss; checkpoint holds the last finite epoch\n";
    std::cout << "train: checkpoint and loss.csv in " << opt.out << "\n";
}

// ----------------------------------------------------------------------------
// eval
// ----------------------------------------------------------------------------

struct EvalOpts {
    std::string data;
    std::string ckpt;
    std::string out;
    std::string split = "val";
    double val_fraction = 0.1;
    std::uint64_t seed = 0;
};

void run_eval(const EvalOpts& opt) {
    sim::DatasetReader data(opt.data);
    const cvae::LoadedCheckpoint loaded = cvae::load_checkpoint(opt.ckpt);
    std::vector<int> episodes;
    if (opt.split == "all") {
        episodes = all_episodes(data.manifest());
    } else {
        const cvae::EpisodeSplit split =
            cvae::split_episodes(data.manifest(), opt.val_fraction, opt.seed);
        episodes = opt.split == "train" ? split.train : split.val;
    }
    const std::vector<cvae::RmseRow> rows = cvae::eval_rmse(loaded.model, data, episodes);
    ensure_parent_dir(opt.out);
    cvae::write_rmse_csv(opt.out, rows);
    for (const auto& row : rows)
        std::cout << "eval: " << row.modality << " rmse " << row.mean << " +/- " << row.stddev
                  << " over " << row.frames << " frames\n";
    std::cout << "eval: wrote " << opt.out << "\n";
}

// ----------------------------------------------------------------------------
// embed
// ----------------------------------------------------------------------------

struct EmbedOpts {
    std::string data;
    std::string ckpt;
    std::string out;
    std::string png;
    std::string method = "tsne";
    std::string space = "encoded";
    std::int64_t max_points = 1000;
    double perplexity = 1000.0;
    int iterations = 1000;
    std::uint64_t seed = 0;
};

void run_embed(const EmbedOpts& opt) {
    sim::DatasetReader data(opt.data);
    const cvae::LoadedCheckpoint loaded = cvae::load_checkpoint(opt.ckpt);
    const std::vector<std::int64_t> ts =
        subsample(dataset_pairs(data), opt.max_points, opt.seed);
    const lens::LatentDump dump = lens::collect_latents(loaded.model, data, ts);
    const num::TensorT<double>& latents =
        opt.space == "conditioned" ? dump.conditioned : dump.encoded;

    num::TensorT<double> embedding;
    if (opt.method == "pca") {
        embedding = lens::pca_project(latents, 2).projection;
        std::cout << "embed: pca over " << ts.size() << " points\n";
    } else {
        lens::TsneConfig cfg;
        cfg.perplexity = opt.perplexity;
        cfg.iterations = opt.iterations;
        cfg.seed = opt.seed;
        const lens::TsneResult result = lens::tsne_embed(latents, cfg);
        embedding = result.embedding;
        std::cout << "embed: tsne over " << ts.size() << " points, perplexity "
                  << result.used_perplexity << (result.clipped ? " (clipped)" : "") << ", KL "
                  << result.initial_kl << " -> " << result.final_kl << "\n";
    }

    const lens::CentroidAnalysis analysis =
        lens::centroid_distance_analysis(embedding, dump.force);
    ensure_parent_dir(opt.out);
    lens::write_embedding_csv(opt.out, embedding, dump.force, analysis.distance);
    std::cout << "embed: spearman(distance, force) " << analysis.spearman << ", wrote " << opt.out
              << "\n";

    if (!opt.png.empty()) {
        const std::int64_t n = embedding.dim(0);
        std::vector<double> x(static_cast<std::size_t>(n));
        std::vector<double> y(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            x[std::size_t(i)] = embedding[2 * i];
            y[std::size_t(i)] = embedding[2 * i + 1];
        }
        ensure_parent_dir(opt.png);
        io::write_png(opt.png, io::scatter(x, y, dump.force));
        std::cout << "embed: wrote " << opt.png << "\n";
    }
}

// ----------------------------------------------------------------------------
// mi
// ----------------------------------------------------------------------------

struct MiOpts {
    std::string data;
    std::vector<std::string> ckpts;
    std::string out;
    int bins = 16;
    std::int64_t max_points = 500;
    double perplexity = 1000.0;
    int iterations = 1000;
    std::uint64_t seed = 0;
};

void run_mi(const MiOpts& opt) {
    sim::DatasetReader data(opt.data);
    const std::vector<std::int64_t> ts =
        subsample(dataset_pairs(data), opt.max_points, opt.seed);
    lens::TsneConfig cfg;
    cfg.perplexity = opt.perplexity;
    cfg.iterations = opt.iterations;
    cfg.seed = opt.seed;

    // One report row per checkpoint: inputs x latent dim x (encoded,
    // conditioned), the layout of the information-gain table.
    nlohmann::json rows = nlohmann::json::array();
    for (const std::string& ckpt : opt.ckpts) {
        if (!std::filesystem::exists(std::filesystem::path(ckpt) / "model.json")) {
            std::cerr << "mi: skipping missing checkpoint '" << ckpt << "'\n";
            continue;
        }
        const cvae::LoadedCheckpoint loaded = cvae::load_checkpoint(ckpt);
        const lens::LatentDump dump = lens::collect_latents(loaded.model, data, ts);
        const lens::MiReport report =
            lens::information_gain(dump.encoded, dump.conditioned, dump.force, cfg, opt.bins);
        rows.push_back({{"checkpoint", ckpt},
                        {"inputs", modality_string(loaded.model.config(), true)},
                        {"outputs", modality_string(loaded.model.config(), false)},
                        {"latent_dim", loaded.model.config().latent_dim},
                        {"mi_encoded_bits", report.mi_encoded},
                        {"mi_conditioned_bits", report.mi_conditioned},
                        {"gain_percent", report.gain_percent},
                        {"degenerate", report.degenerate}});
        std::cout << "mi: " << ckpt << " encoded " << report.mi_encoded << " bits, conditioned "
                  << report.mi_conditioned << " bits, gain " << report.gain_percent << "%\n";
    }
    if (rows.empty()) throw DataFormatError("mi: no readable checkpoints");

    const nlohmann::json report = {{"bins", opt.bins},
                                   {"samples", std::int64_t(ts.size())},
                                   {"perplexity", opt.perplexity},
                                   {"seed", opt.seed},
                                   {"rows", rows}};
    write_text(opt.out, report.dump(2) + "\n");
    std::cout << "mi: wrote " << opt.out << "\n";
}

// ----------------------------------------------------------------------------
// probe / rollout
// ----------------------------------------------------------------------------

struct ProbeOpts {
    std::string data;
    std::string ckpt;
    std::string out;
    std::string png;
    std::string kind = "resample";
    std::string grid = "11x5x5";
    std::int64_t frame = 0;
    std::int64_t count = 64;
    int trials = 100;
    int horizon = 3;
    double noise = 1.0;
    bool clamp_variance = false;
    bool prior = false;
    bool sampled = false;
    bool null_actions = false;
    std::uint64_t seed = 0;
};

std::int64_t checked_frame(const ProbeOpts& opt, const std::vector<std::int64_t>& ts) {
    if (opt.frame < 0 || opt.frame >= std::int64_t(ts.size()))
        throw UsageError("probe: --frame " + std::to_string(opt.frame) + " out of range (" +
                         std::to_string(ts.size()) + " pairs)");
    return ts[std::size_t(opt.frame)];
}

probe::ProbeConfig probe_config(const ProbeOpts& opt) {
    probe::ProbeConfig cfg;
    cfg.trials = opt.trials;
    cfg.noise = opt.noise;
    cfg.horizon = opt.horizon;
    cfg.seed = opt.seed;
    cfg.clamp_variance = opt.clamp_variance;
    cfg.prior_mode = opt.prior;
    cfg.sample_latents = opt.sampled;
    return cfg;
}

void write_flow_strip(const std::string& path, const num::TensorT<float>& flow,
                      std::int64_t max_panels) {
    double vmax = 0.0;
    for (float v : flow.data) vmax = std::max(vmax, double(std::abs(v)));
    std::vector<io::Image8> panels;
    const std::int64_t n = std::min(flow.dim(0), max_panels);
    for (std::int64_t i = 0; i < n; ++i)
        panels.push_back(io::render_flow(flow_panel(flow, i), vmax * std::sqrt(2.0)));
    ensure_parent_dir(path);
    io::write_png(path, io::hstack(panels));
}

void run_rollout(const ProbeOpts& opt) {
    sim::DatasetReader data(opt.data);
    const cvae::LoadedCheckpoint loaded = cvae::load_checkpoint(opt.ckpt);
    const cvae::ModalityConfig& cfg = loaded.model.config();
    const std::vector<std::int64_t> ts = dataset_pairs(data);
    const std::int64_t t = checked_frame(opt, ts);
    if (opt.horizon < 1)
        throw UsageError("rollout: --horizon must be at least 1, got " +
                         std::to_string(opt.horizon));

    num::TensorT<float> actions({opt.horizon, 3});
    if (!opt.null_actions) {
        // Replay the episode's stored commands; every step must come from
        // the episode that contains the start frame.
        const sim::EpisodeSpan* span = nullptr;
        for (const auto& ep : data.manifest().episodes)
            if (t >= ep.start && t < ep.start + ep.count) span = &ep;
        if (!span || t + opt.horizon > span->start + span->count)
            throw UsageError("rollout: horizon " + std::to_string(opt.horizon) +
                             " runs past the episode at frame " + std::to_string(t) +
                             " (use --null-actions to roll out without stored commands)");
        for (std::int64_t h = 0; h < opt.horizon; ++h) {
            const sim::FrameRecord rec = data.frame(t + h);
            std::copy_n(rec.action(), 3, actions.data.begin() + h * 3);
        }
    }

    const cvae::SensorBatch frame = cvae::make_inputs(data, {t}, cfg);
    const probe::Rollout roll = probe::feedback_rollout(loaded.model, frame, actions, probe_config(opt));
    write_text(opt.out, probe::rollout_json(roll) + "\n");
    std::cout << "rollout: " << roll.steps.size() << " step(s) from frame " << t << ", drift "
              << roll.steps.front().drift << " -> " << roll.steps.back().drift << "\n";
    std::cout << "rollout: wrote " << opt.out << "\n";

    if (!opt.png.empty()) {
        if (!cfg.in_vision)
            throw UsageError("rollout: --png needs a vision input to render");
        std::vector<io::Image8> panels{io::render_vision(frame.vision)};
        for (const auto& step : roll.steps) panels.push_back(io::render_vision(step.next_vision));
        ensure_parent_dir(opt.png);
        io::write_png(opt.png, io::hstack(panels));
        std::cout << "rollout: wrote " << opt.png << "\n";
    }
}

void run_probe(const ProbeOpts& opt) {
    if (opt.kind == "rollout") {
        run_rollout(opt);
        return;
    }

    sim::DatasetReader data(opt.data);
    const cvae::LoadedCheckpoint loaded = cvae::load_checkpoint(opt.ckpt);
    const cvae::ModalityConfig& cfg = loaded.model.config();
    const std::vector<std::int64_t> ts = dataset_pairs(data);
    const std::int64_t t = checked_frame(opt, ts);

    if (opt.kind == "resample") {
        const auto report = probe::resample_stability(
            loaded.model, cvae::make_inputs(data, {t}, cfg), cvae::make_actions(data, {t}),
            cvae::make_targets(data, {t}, cfg), probe_config(opt));
        write_text(opt.out, probe::probe_report_json(report) + "\n");
        std::cout << "probe: resample mean rmse " << report.mean << " over " << report.rmse.size()
                  << " draw(s)\n";
    } else if (opt.kind == "action") {
        if (opt.count < 1 || opt.frame + opt.count > std::int64_t(ts.size()))
            throw UsageError("probe: --count " + std::to_string(opt.count) +
                             " runs past the dataset (" + std::to_string(ts.size()) + " pairs)");
        const std::vector<std::int64_t> window(ts.begin() + opt.frame,
                                               ts.begin() + opt.frame + opt.count);
        const auto report = probe::action_perturbation(
            loaded.model, cvae::make_inputs(data, window, cfg),
            cvae::make_targets(data, window, cfg), sim::ActionBounds{}, opt.seed);
        write_text(opt.out, probe::action_perturbation_json(report) + "\n");
        std::cout << "probe: action null-vs-input rmse " << report.null_vs_input.mean
                  << ", random-vs-input rmse " << report.random_vs_input.mean << "\n";
    } else if (opt.kind == "synthetic") {
        const auto result = probe::synthetic_latent(loaded.model,
                                                    cvae::make_inputs(data, {t}, cfg),
                                                    cvae::make_actions(data, {t}),
                                                    probe_config(opt));
        write_text(opt.out, probe::probe_report_json(result.report) + "\n");
        std::cout << "probe: synthetic noise " << opt.noise << ", mean deviation "
                  << result.report.mean << " over " << result.report.rmse.size() << " draw(s)\n";
        if (!opt.png.empty()) {
            if (!cfg.out_flow) throw UsageError("probe: --png needs a flow output to render");
            write_flow_strip(opt.png, result.draws.flow.value(), 8);
            std::cout << "probe: wrote " << opt.png << "\n";
        }
    } else {  // sweep
        int n1 = 0, n2 = 0, n3 = 0;
        char sep1 = 0, sep2 = 0;
        std::istringstream grid_in(opt.grid);
        if (!(grid_in >> n1 >> sep1 >> n2 >> sep2 >> n3) || sep1 != 'x' || sep2 != 'x' ||
            !grid_in.eof())
            throw UsageError("probe: --grid must look like 11x5x5, got '" + opt.grid + "'");
        const auto result = probe::action_sweep(
            loaded.model, cvae::make_inputs(data, {t}, cfg),
            probe::make_action_grid(n1, n2, n3, sim::ActionBounds{}));
        write_text(opt.out, probe::probe_report_json(result.report) + "\n");
        std::cout << "probe: sweep over " << result.actions.dim(0)
                  << " action(s), mean deviation from null " << result.report.mean << "\n";
        if (!opt.png.empty()) {
            if (!cfg.out_flow) throw UsageError("probe: --png needs a flow output to render");
            write_flow_strip(opt.png, result.predictions.flow.value(), 8);
            std::cout << "probe: wrote " << opt.png << "\n";
        }
    }
    std::cout << "probe: wrote " << opt.out << "\n";
}

}  // namespace

// ----------------------------------------------------------------------------
// entry point
// ----------------------------------------------------------------------------

int main(int argc, char** argv) {
    CLI::App app{"softperc: generative multi-modal perception for a simulated soft finger"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read flag defaults from a TOML file (CLI flags win)");
    app.allow_config_extras(CLI::config_extras_mode::error);

    int threads = 0;
    app.add_option("--threads", threads,
                   "Worker threads for the linear-algebra backend (0 = hardware default)")
        ->envname("SOFTPERC_THREADS")
        ->capture_default_str();

    SimulateOpts sim_opt;
    CLI::App* sim_cmd = app.add_subcommand("simulate", "Generate a soft-finger dataset");
    sim_cmd->option_defaults()->always_capture_default();
    sim_cmd->add_option("--out", sim_opt.out, "Dataset directory to create")->required();
    sim_cmd->add_option("--frames", sim_opt.frames, "Frames per episode (10 per second)");
    sim_cmd->add_option("--episodes", sim_opt.episodes, "Episode count");
    sim_cmd->add_option("--seed", sim_opt.seed, "Root seed for scenes and actions");
    CLI::Option* scene_opt = sim_cmd->add_option(
        "--scene", sim_opt.scene_seed,
        "Fixed scene seed shared by every episode (default: derive per episode)");

    TrainOpts train_opt;
    CLI::App* train_cmd = app.add_subcommand("train", "Train the conditional world model");
    train_cmd->option_defaults()->always_capture_default();
    train_cmd->add_option("--data", train_opt.data, "Dataset directory")->required();
    train_cmd->add_option("--out", train_opt.out, "Checkpoint directory to create")->required();
    train_cmd->add_option("--inputs", train_opt.inputs,
                          "Input modalities (comma list of proprio,vision,force)");
    train_cmd->add_option("--outputs", train_opt.outputs,
                          "Output modalities (comma list of proprio,force,flow)");
    train_cmd->add_option("--latent-dim", train_opt.latent_dim, "Latent dimension");
    train_cmd->add_option("--epochs", train_opt.epochs, "Training epochs");
    train_cmd->add_option("--batch", train_opt.batch, "Minibatch size");
    train_cmd->add_option("--lr", train_opt.lr, "Adam learning rate");
    train_cmd->add_option("--val-fraction", train_opt.val_fraction,
                          "Episode fraction held out for validation");
    train_cmd->add_option("--beta", train_opt.beta, "KL weight");
    train_cmd->add_option("--seed", train_opt.seed, "Root seed (init, shuffle, sampling)");

    EvalOpts eval_opt;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Next-frame RMSE of a checkpoint");
    eval_cmd->option_defaults()->always_capture_default();
    eval_cmd->add_option("--data", eval_opt.data, "Dataset directory")->required();
    eval_cmd->add_option("--ckpt", eval_opt.ckpt, "Checkpoint directory")->required();
    eval_cmd->add_option("--out", eval_opt.out, "RMSE CSV path")->required();
    eval_cmd->add_option("--split", eval_opt.split, "Episodes to evaluate")
        ->check(CLI::IsMember({"train", "val", "all"}));
    eval_cmd->add_option("--val-fraction", eval_opt.val_fraction,
                         "Episode fraction held out for validation");
    eval_cmd->add_option("--seed", eval_opt.seed, "Split seed (must match training)");

    EmbedOpts embed_opt;
    CLI::App* embed_cmd = app.add_subcommand("embed", "2-D embedding of the latent space");
    embed_cmd->option_defaults()->always_capture_default();
    embed_cmd->add_option("--data", embed_opt.data, "Dataset directory")->required();
    embed_cmd->add_option("--ckpt", embed_opt.ckpt, "Checkpoint directory")->required();
    embed_cmd->add_option("--out", embed_opt.out, "Embedding CSV path")->required();
    embed_cmd->add_option("--method", embed_opt.method, "Embedding method")
        ->check(CLI::IsMember({"pca", "tsne"}));
    embed_cmd->add_option("--space", embed_opt.space, "Latent space to embed")
        ->check(CLI::IsMember({"encoded", "conditioned"}));
    embed_cmd->add_option("--max-points", embed_opt.max_points,
                          "Subsample cap on embedded frames (0 = no cap)");
    embed_cmd->add_option("--perplexity", embed_opt.perplexity,
                          "t-SNE perplexity (clipped to (N - 1) / 3)");
    embed_cmd->add_option("--iterations", embed_opt.iterations, "t-SNE iterations");
    embed_cmd->add_option("--seed", embed_opt.seed, "Root seed (subsample, t-SNE init)");
    embed_cmd->add_option("--png", embed_opt.png, "Optional scatter plot path");

    MiOpts mi_opt;
    CLI::App* mi_cmd = app.add_subcommand(
        "mi", "Information gain between latent topology and contact force");
    mi_cmd->option_defaults()->always_capture_default();
    mi_cmd->add_option("--data", mi_opt.data, "Dataset directory")->required();
    mi_cmd->add_option("--ckpt", mi_opt.ckpts, "Checkpoint directories (one report row each)")
        ->required()
        ->take_all();
    mi_cmd->add_option("--out", mi_opt.out, "Report JSON path")->required();
    mi_cmd->add_option("--bins", mi_opt.bins, "Histogram bins per axis");
    mi_cmd->add_option("--max-points", mi_opt.max_points,
                       "Subsample cap on embedded frames (0 = no cap)");
    mi_cmd->add_option("--perplexity", mi_opt.perplexity,
                       "t-SNE perplexity (clipped to (N - 1) / 3)");
    mi_cmd->add_option("--iterations", mi_opt.iterations, "t-SNE iterations");
    mi_cmd->add_option("--seed", mi_opt.seed, "Root seed (subsample, t-SNE init)");

    ProbeOpts probe_opt;
    CLI::App* probe_cmd = app.add_subcommand("probe", "Generative-property probes");
    probe_cmd->option_defaults()->always_capture_default();
    probe_cmd->add_option("--data", probe_opt.data, "Dataset directory")->required();
    probe_cmd->add_option("--ckpt", probe_opt.ckpt, "Checkpoint directory")->required();
    probe_cmd->add_option("--out", probe_opt.out, "Report JSON path")->required();
    probe_cmd->add_option("--kind", probe_opt.kind, "Probe to run")
        ->check(CLI::IsMember({"resample", "action", "synthetic", "sweep", "rollout"}));
    probe_cmd->add_option("--frame", probe_opt.frame, "Start pair index into the dataset");
    probe_cmd->add_option("--count", probe_opt.count, "Frames for the action probe");
    probe_cmd->add_option("--trials", probe_opt.trials, "Draws for resample/synthetic");
    probe_cmd->add_option("--horizon", probe_opt.horizon, "Steps for the rollout kind");
    probe_cmd->add_option("--noise", probe_opt.noise, "Latent noise scale for synthetic");
    probe_cmd->add_option("--grid", probe_opt.grid, "Sweep grid as n1xn2xn3");
    probe_cmd->add_flag("--clamp-variance", probe_opt.clamp_variance,
                        "Resample with the posterior variance forced to zero");
    probe_cmd->add_flag("--prior", probe_opt.prior, "Synthetic draws from the prior N(0, I)");
    probe_cmd->add_flag("--sampled", probe_opt.sampled,
                        "Rollout with sampled instead of mean-mode latents");
    probe_cmd->add_flag("--null-actions", probe_opt.null_actions,
                        "Rollout under zero commands instead of the stored ones");
    probe_cmd->add_option("--seed", probe_opt.seed, "Root seed for every draw");
    probe_cmd->add_option("--png", probe_opt.png, "Optional flow/vision strip path");

    ProbeOpts roll_opt;
    roll_opt.kind = "rollout";
    CLI::App* roll_cmd =
        app.add_subcommand("rollout", "Closed-loop rollout (shorthand for probe --kind rollout)");
    roll_cmd->option_defaults()->always_capture_default();
    roll_cmd->add_option("--data", roll_opt.data, "Dataset directory")->required();
    roll_cmd->add_option("--ckpt", roll_opt.ckpt, "Checkpoint directory")->required();
    roll_cmd->add_option("--out", roll_opt.out, "Report JSON path")->required();
    roll_cmd->add_option("--frame", roll_opt.frame, "Start pair index into the dataset");
    roll_cmd->add_option("--horizon", roll_opt.horizon, "Rollout steps");
    roll_cmd->add_flag("--sampled", roll_opt.sampled,
                       "Sampled instead of mean-mode latents");
    roll_cmd->add_flag("--null-actions", roll_opt.null_actions,
                       "Zero commands instead of the stored ones");
    roll_cmd->add_option("--seed", roll_opt.seed, "Root seed for sampled latents");
    roll_cmd->add_option("--png", roll_opt.png, "Optional vision strip path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // CLI11's own exit codes are remapped onto the documented contract:
        // 0 for --help, 2 for anything malformed.
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        softperc::set_thread_count(threads);
        if (*sim_cmd) {
            sim_opt.scene_fixed = scene_opt->count() > 0;
            run_simulate(sim_opt);
        } else if (*train_cmd) {
            run_train(train_opt);
        } else if (*eval_cmd) {
            run_eval(eval_opt);
        } else if (*embed_cmd) {
            run_embed(embed_opt);
        } else if (*mi_cmd) {
            run_mi(mi_opt);
        } else if (*probe_cmd) {
            run_probe(probe_opt);
        } else if (*roll_cmd) {
            run_rollout(roll_opt);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataFormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const softperc::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
