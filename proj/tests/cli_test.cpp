// End-to-end tests of the softperc binary: every subcommand runs as a real
// subprocess against a small shared dataset, checking output files, exit
// codes, and byte determinism.

#include <cstdint>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "support/subprocess.hpp"
#include "support/tempdir.hpp"

namespace {

namespace fs = std::filesystem;
using testutil::line_count;
using testutil::run;
using testutil::RunResult;
using testutil::slurp;

std::string cli() { return SOFTPERC_CLI; }

/// Shared fixture: one dataset generated twice (for the determinism check)
/// and one small proprio-only checkpoint, built on first use.
struct CliWorld {
    testutil::TempDir dir{"softperc-cli"};
    std::string ds = (dir.path / "ds").string();
    std::string ds_rerun = (dir.path / "ds-rerun").string();
    std::string ck = (dir.path / "ck").string();
    RunResult sim_a, sim_b, train_r;

    CliWorld() {
        const std::string flags = " --frames 30 --episodes 3 --seed 42";
        sim_a = run(cli() + " simulate --out " + ds + flags);
        sim_b = run(cli() + " simulate --out " + ds_rerun + flags);
        train_r = run(cli() + " train --data " + ds + " --out " + ck +
                      " --inputs proprio --outputs proprio,force --latent-dim 8"
                      " --epochs 2 --batch 32 --seed 5");
    }
};

CliWorld& world() {
    static CliWorld w;
    return w;
}

}  // namespace

TEST_CASE("simulate is deterministic and sizes the dataset correctly") {
    CliWorld& w = world();
    REQUIRE(w.sim_a.exit_code == 0);
    REQUIRE(w.sim_b.exit_code == 0);

    const auto manifest = nlohmann::json::parse(slurp(fs::path(w.ds) / "manifest.json"));
    const std::int64_t frames = manifest.at("frame_count").get<std::int64_t>();
    const int dropped = manifest.at("dropped_frames").get<int>();
    CHECK(frames + dropped == 90);
    CHECK(manifest.at("episodes").size() == 3);

    // frames.bin size follows from the record arithmetic alone.
    const std::int64_t record_bytes = (20 + 3 + 20 + 64 * 64 * 3 + 64 * 64 * 2 + 3) * 4;
    CHECK(std::int64_t(fs::file_size(fs::path(w.ds) / "frames.bin")) == frames * record_bytes);

    CHECK(slurp(fs::path(w.ds) / "frames.bin") == slurp(fs::path(w.ds_rerun) / "frames.bin"));
    CHECK(slurp(fs::path(w.ds) / "manifest.json") ==
          slurp(fs::path(w.ds_rerun) / "manifest.json"));
}

TEST_CASE("usage errors exit with code 2") {
    CliWorld& w = world();
    CHECK(run(cli() + " simulate --out " + (w.dir.path / "x").string() +
              " --frames 0").exit_code == 2);
    CHECK(run(cli() + " simulate --no-such-flag").exit_code == 2);
    CHECK(run(cli() + " train --data " + w.ds + " --out " + (w.dir.path / "x").string() +
              " --inputs sonar").exit_code == 2);
    CHECK(run(cli() + " eval --data " + w.ds + " --ckpt " + w.ck +
              " --out x.csv --split bogus").exit_code == 2);

    const RunResult modality = run(cli() + " train --data " + w.ds + " --out " +
                                   (w.dir.path / "x").string() + " --inputs sonar");
    CHECK(modality.output.find("unknown input modality 'sonar'") != std::string::npos);
}

TEST_CASE("data errors exit with code 3") {
    CliWorld& w = world();
    const std::string missing = (w.dir.path / "no-such-dir").string();
    CHECK(run(cli() + " train --data " + missing + " --out " + (w.dir.path / "x").string() +
              " --epochs 1").exit_code == 3);
    CHECK(run(cli() + " eval --data " + w.ds + " --ckpt " + missing +
              " --out x.csv").exit_code == 3);
}

TEST_CASE("train writes a checkpoint directory and a loss log") {
    CliWorld& w = world();
    REQUIRE(w.train_r.exit_code == 0);
    CHECK(fs::exists(fs::path(w.ck) / "model.json"));
    CHECK(fs::exists(fs::path(w.ck) / "weights.bin"));

    const std::string loss = slurp(fs::path(w.ck) / "loss.csv");
    CHECK(line_count(loss) == 3);  // header + one row per epoch
    CHECK(loss.rfind("epoch,train_elbo,val_elbo", 0) == 0);

    // The documented latent grid is accepted end to end.
    for (const char* d : {"16", "64", "128"}) {
        const std::string out = (w.dir.path / (std::string("ck-d") + d)).string();
        const RunResult r = run(cli() + " train --data " + w.ds + " --out " + out +
                                " --latent-dim " + d + " --epochs 1 --batch 64 --seed 1");
        CAPTURE(r.output);
        CHECK(r.exit_code == 0);
    }
}

TEST_CASE("eval writes the per-modality rmse table") {
    CliWorld& w = world();
    const std::string out = (w.dir.path / "rmse.csv").string();
    const RunResult r = run(cli() + " eval --data " + w.ds + " --ckpt " + w.ck + " --out " +
                            out + " --split val --seed 5");
    CAPTURE(r.output);
    REQUIRE(r.exit_code == 0);
    const std::string csv = slurp(out);
    CHECK(csv.rfind("modality,rmse_mean,rmse_std,frames", 0) == 0);
    CHECK(csv.find("\nproprio,") != std::string::npos);
    CHECK(csv.find("\nforce,") != std::string::npos);
}

TEST_CASE("embed produces an N-by-2 csv for both methods") {
    CliWorld& w = world();
    const std::string base = cli() + " embed --data " + w.ds + " --ckpt " + w.ck +
                             " --max-points 40 --seed 11 --out ";

    const std::string pca_csv = (w.dir.path / "emb-pca.csv").string();
    REQUIRE(run(base + pca_csv + " --method pca").exit_code == 0);
    const std::string pca = slurp(pca_csv);
    CHECK(line_count(pca) == 41);  // header + one row per point
    CHECK(pca.rfind("point_id,y1,y2,force,distance", 0) == 0);

    const std::string tsne_csv = (w.dir.path / "emb-tsne.csv").string();
    const std::string tsne_flags = " --method tsne --iterations 120";
    REQUIRE(run(base + tsne_csv + tsne_flags).exit_code == 0);
    CHECK(line_count(slurp(tsne_csv)) == 41);

    // Byte-identical across reruns with the same flags and seed.
    const std::string again_csv = (w.dir.path / "emb-tsne-again.csv").string();
    REQUIRE(run(base + again_csv + tsne_flags).exit_code == 0);
    CHECK(slurp(tsne_csv) == slurp(again_csv));
}

TEST_CASE("mi reports one row per checkpoint and skips missing ones") {
    CliWorld& w = world();
    const std::string out = (w.dir.path / "mi.json").string();
    const std::string missing = (w.dir.path / "no-such-ckpt").string();
    const RunResult r = run(cli() + " mi --data " + w.ds + " --ckpt " + w.ck + " " + missing +
                            " --out " + out + " --max-points 60 --bins 4 --iterations 120" +
                            " --seed 4");
    CAPTURE(r.output);
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("skipping missing checkpoint") != std::string::npos);

    const auto report = nlohmann::json::parse(slurp(out));
    CHECK(report.at("bins") == 4);
    CHECK(report.at("samples") == 60);
    REQUIRE(report.at("rows").size() == 1);
    const auto& row = report.at("rows").at(0);
    CHECK(row.at("latent_dim") == 8);
    CHECK(row.at("inputs") == "proprio");
    CHECK(row.contains("mi_encoded_bits"));
    CHECK(row.contains("mi_conditioned_bits"));
    CHECK(row.contains("gain_percent"));

    // Nothing readable at all is a data error, not an empty report.
    CHECK(run(cli() + " mi --data " + w.ds + " --ckpt " + missing + " --out " + out)
              .exit_code == 3);
}

TEST_CASE("probe kinds emit auditable reports") {
    CliWorld& w = world();
    const std::string base = cli() + " probe --data " + w.ds + " --ckpt " + w.ck + " ";

    const std::string res = (w.dir.path / "p-res.json").string();
    REQUIRE(run(base + "--kind resample --trials 6 --seed 9 --out " + res).exit_code == 0);
    const auto resample = nlohmann::json::parse(slurp(res));
    CHECK(resample.at("kind") == "resample");
    CHECK(resample.at("rmse").size() == 6);
    CHECK(resample.at("config").at("trials") == 6);
    CHECK(resample.at("config").at("seed") == 9);

    // Determinism: same seed reruns byte-identically, a new seed does not.
    const std::string res2 = (w.dir.path / "p-res2.json").string();
    REQUIRE(run(base + "--kind resample --trials 6 --seed 9 --out " + res2).exit_code == 0);
    CHECK(slurp(res) == slurp(res2));
    const std::string res3 = (w.dir.path / "p-res3.json").string();
    REQUIRE(run(base + "--kind resample --trials 6 --seed 10 --out " + res3).exit_code == 0);
    CHECK(slurp(res) != slurp(res3));

    const std::string act = (w.dir.path / "p-act.json").string();
    REQUIRE(run(base + "--kind action --count 10 --seed 9 --out " + act).exit_code == 0);
    const auto action = nlohmann::json::parse(slurp(act));
    CHECK(action.contains("null_vs_input"));
    CHECK(action.contains("random_vs_input"));
    CHECK(action.contains("null_vs_truth"));
    CHECK(action.contains("random_vs_truth"));
    CHECK(action.at("null_vs_input").at("rmse").size() == 10);

    const std::string syn = (w.dir.path / "p-syn.json").string();
    REQUIRE(run(base + "--kind synthetic --trials 4 --noise 0.5 --seed 9 --out " + syn)
                .exit_code == 0);
    CHECK(nlohmann::json::parse(slurp(syn)).at("kind") == "synthetic-latent");

    const std::string swp = (w.dir.path / "p-swp.json").string();
    REQUIRE(run(base + "--kind sweep --grid 3x1x1 --seed 9 --out " + swp).exit_code == 0);
    const auto sweep = nlohmann::json::parse(slurp(swp));
    CHECK(sweep.at("kind") == "action-sweep");
    CHECK(sweep.at("rmse").size() == 3);

    CHECK(run(base + "--kind sweep --grid nonsense --out " + swp).exit_code == 2);
    CHECK(run(base + "--kind resample --frame 100000 --out " + res).exit_code == 2);
}

TEST_CASE("rollout runs closed loop and validates its horizon") {
    CliWorld& w = world();
    const std::string out = (w.dir.path / "roll.json").string();
    const RunResult r = run(cli() + " rollout --data " + w.ds + " --ckpt " + w.ck +
                            " --frame 2 --horizon 3 --seed 9 --out " + out);
    CAPTURE(r.output);
    REQUIRE(r.exit_code == 0);
    const auto roll = nlohmann::json::parse(slurp(out));
    CHECK(roll.at("steps").size() == 3);
    CHECK(roll.at("report").at("kind") == "rollout");
    CHECK(roll.at("report").at("config").at("horizon") == 3);

    // probe --kind rollout is the same code path, byte for byte.
    const std::string alias = (w.dir.path / "roll-alias.json").string();
    REQUIRE(run(cli() + " probe --data " + w.ds + " --ckpt " + w.ck +
                " --kind rollout --frame 2 --horizon 3 --seed 9 --out " + alias)
                .exit_code == 0);
    CHECK(slurp(out) == slurp(alias));

    // Stored commands run out before a 1000-step horizon does.
    const RunResult deep = run(cli() + " rollout --data " + w.ds + " --ckpt " + w.ck +
                               " --frame 2 --horizon 1000 --out " + out);
    CHECK(deep.exit_code == 2);
    CHECK(deep.output.find("runs past the episode") != std::string::npos);
    CHECK(run(cli() + " rollout --data " + w.ds + " --ckpt " + w.ck +
              " --frame 2 --horizon 4 --null-actions --out " + out).exit_code == 0);
}

TEST_CASE("help documents every subcommand and its defaults") {
    const RunResult top = run(cli() + " --help");
    CHECK(top.exit_code == 0);
    for (const char* sub : {"simulate", "train", "eval", "embed", "mi", "probe", "rollout"})
        CHECK(top.output.find(sub) != std::string::npos);

    const RunResult train_help = run(cli() + " train --help");
    CHECK(train_help.exit_code == 0);
    for (const char* flag : {"--data", "--out", "--inputs", "--outputs", "--latent-dim",
                             "--epochs", "--batch", "--lr", "--val-fraction", "--seed"})
        CHECK(train_help.output.find(flag) != std::string::npos);
    CHECK(train_help.output.find("[50]") != std::string::npos);  // default epochs shown

    const RunResult probe_help = run(cli() + " probe --help");
    CHECK(probe_help.exit_code == 0);
    for (const char* flag : {"--kind", "--trials", "--horizon", "--noise", "--grid", "--png"})
        CHECK(probe_help.output.find(flag) != std::string::npos);
}

TEST_CASE("config files fill in defaults but explicit flags win") {
    CliWorld& w = world();
    const std::string toml = (w.dir.path / "run.toml").string();
    {
        std::ofstream out(toml);
        out << "[simulate]\nframes = 25\nseed = 77\n";
    }

    const std::string from_cfg = (w.dir.path / "ds-cfg").string();
    REQUIRE(run(cli() + " --config " + toml + " simulate --out " + from_cfg).exit_code == 0);
    auto manifest = nlohmann::json::parse(slurp(fs::path(from_cfg) / "manifest.json"));
    const std::int64_t cfg_frames = manifest.at("frame_count").get<std::int64_t>() +
                                    manifest.at("dropped_frames").get<std::int64_t>();
    CHECK(cfg_frames == 25);
    CHECK(manifest.at("seed") == 77);

    const std::string flag_wins = (w.dir.path / "ds-flag").string();
    REQUIRE(run(cli() + " --config " + toml + " simulate --out " + flag_wins +
                " --frames 12").exit_code == 0);
    manifest = nlohmann::json::parse(slurp(fs::path(flag_wins) / "manifest.json"));
    CHECK(manifest.at("frame_count").get<std::int64_t>() +
              manifest.at("dropped_frames").get<std::int64_t>() == 12);

    const std::string bad = (w.dir.path / "bad.toml").string();
    {
        std::ofstream out(bad);
        out << "[simulate]\nbogus_key = 3\n";
    }
    CHECK(run(cli() + " --config " + bad + " simulate --out " +
              (w.dir.path / "ds-bad").string()).exit_code == 2);
}
