// Microbenchmarks for the hot paths: dense/conv kernels at the model's
// actual shapes, the quasi-static solver, single-frame prediction latency,
// one training step, and the t-SNE inner loop.
#include <benchmark/benchmark.h>

#include <cstdint>
#include <optional>
#include <vector>

#include "softperc/cvae/model.hpp"
#include "softperc/lens/lens.hpp"
#include "softperc/ops.hpp"
#include "softperc/optim.hpp"
#include "softperc/rng.hpp"
#include "softperc/sim/sim.hpp"

using namespace softperc;
using namespace softperc::num;

namespace {

TensorT<float> rand_tensor(Rng& rng, Shape s) {
    TensorT<float> t(std::move(s));
    for (auto& v : t.data) v = static_cast<float>(rng.normal());
    return t;
}

cvae::SensorBatch sensor_frame(const cvae::ModalityConfig& cfg, Rng& rng) {
    cvae::SensorBatch f;
    if (cfg.in_proprio) f.proprio = rand_tensor(rng, {1, cvae::kProprioDim});
    if (cfg.in_vision) f.vision = rand_tensor(rng, {1, 3, cvae::kImageSize, cvae::kImageSize});
    if (cfg.in_force) f.force = rand_tensor(rng, {1, cvae::kForceDim});
    return f;
}

}  // namespace

// ---------------------------------------------------------------------------
// numerics kernels
// ---------------------------------------------------------------------------

static void bm_matmul_training_shape(benchmark::State& state) {
    Rng rng(1);
    const auto a = rand_tensor(rng, {128, 256});
    const auto b = rand_tensor(rng, {256, 256});
    const auto va = VarT<float>::constant(a);
    const auto vb = VarT<float>::constant(b);
    NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(matmul(va, vb).value().data.data());
}
BENCHMARK(bm_matmul_training_shape);

static void bm_conv2d_encoder_stem(benchmark::State& state) {
    // The vision encoder's first layer: 3 -> 8 channels, k4 s2 p1 on 64 px.
    Rng rng(2);
    const auto x = VarT<float>::constant(rand_tensor(rng, {1, 3, 64, 64}));
    const auto w = VarT<float>::constant(rand_tensor(rng, {8, 3, 4, 4}));
    const auto b = VarT<float>::constant(rand_tensor(rng, {8}));
    NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, 2, 1).value().data.data());
}
BENCHMARK(bm_conv2d_encoder_stem);

// ---------------------------------------------------------------------------
// simulator
// ---------------------------------------------------------------------------

static void bm_settle_pressed(benchmark::State& state) {
    const sim::SceneConfig scene = sim::sample_scene(3);
    sim::RigidArmState arm;
    arm.q = {0.2, 0.05, -0.06};
    for (auto _ : state) benchmark::DoNotOptimize(sim::settle(scene, arm).energy);
}
BENCHMARK(bm_settle_pressed);

static void bm_render_frame(benchmark::State& state) {
    const sim::SceneConfig scene = sim::sample_scene(3);
    sim::RigidArmState arm;
    arm.q = {0.2, 0.05, -0.06};
    const auto st = sim::settle(scene, arm);
    for (auto _ : state) benchmark::DoNotOptimize(sim::render(scene, arm, st.finger).data());
}
BENCHMARK(bm_render_frame);

static void bm_episode_10s(benchmark::State& state) {
    const sim::SceneConfig scene = sim::sample_scene(3);
    std::int64_t frames = 0;
    for (auto _ : state) {
        const auto ep = sim::generate_episode(scene, 10.0, 7);
        frames += static_cast<std::int64_t>(ep.frames.size());
        benchmark::DoNotOptimize(ep.frames.size());
    }
    state.SetItemsProcessed(frames);  // items/s == frames/s
}
BENCHMARK(bm_episode_10s);

// ---------------------------------------------------------------------------
// world model
// ---------------------------------------------------------------------------

static void bm_predict(benchmark::State& state, bool with_vision) {
    cvae::ModalityConfig cfg;
    cfg.in_proprio = true;
    cfg.in_vision = with_vision;
    cfg.out_proprio = cfg.out_force = true;
    cfg.out_flow = with_vision;
    cfg.latent_dim = 16;
    auto init = Rng::substream(11, "init");
    cvae::WorldModel model(cfg, init);
    Rng data(12);
    const auto frame = sensor_frame(cfg, data);
    const auto actions = rand_tensor(data, {1, cvae::kActionDim});
    for (auto _ : state) benchmark::DoNotOptimize(cvae::predict(model, frame, actions).millis);
}
BENCHMARK_CAPTURE(bm_predict, proprio, false);
BENCHMARK_CAPTURE(bm_predict, proprio_vision, true);

static void bm_elbo_training_step(benchmark::State& state) {
    cvae::ModalityConfig cfg;
    cfg.in_proprio = cfg.out_proprio = cfg.out_force = true;
    cfg.latent_dim = 16;
    auto init = Rng::substream(13, "init");
    cvae::WorldModel model(cfg, init);
    AdamT<float> adam(model.parameters());

    Rng data(14);
    const std::int64_t b = 32;
    cvae::SensorBatch frame;
    frame.proprio = rand_tensor(data, {b, cvae::kProprioDim});
    const auto actions = rand_tensor(data, {b, cvae::kActionDim});
    cvae::TargetBatch target;
    target.proprio = rand_tensor(data, {b, cvae::kProprioDim});
    target.force = rand_tensor(data, {b, cvae::kForceDim});

    Rng eps(15);
    for (auto _ : state) {
        adam.zero_grad();
        const auto latent = model.encode(frame, eps);
        const auto pred = model.decode(model.condition(latent.z, actions));
        const auto terms = cvae::elbo_loss(pred, target, latent, cfg);
        backward(terms.total);
        adam.step();
        benchmark::DoNotOptimize(terms.elbo);
    }
}
BENCHMARK(bm_elbo_training_step);

// ---------------------------------------------------------------------------
// latent lens
// ---------------------------------------------------------------------------

static void bm_tsne_affinities(benchmark::State& state) {
    Rng rng(21);
    TensorT<double> x({300, 16});
    for (auto& v : x.data) v = rng.normal();
    for (auto _ : state)
        benchmark::DoNotOptimize(lens::tsne_affinities(x, 30.0).p.data.data());
}
BENCHMARK(bm_tsne_affinities);

static void bm_tsne_embed_100_iterations(benchmark::State& state) {
    Rng rng(22);
    TensorT<double> x({300, 16});
    for (auto& v : x.data) v = rng.normal();
    lens::TsneConfig cfg;
    cfg.perplexity = 30.0;
    cfg.iterations = 100;
    cfg.exaggeration_until = 50;
    cfg.momentum_switch = 50;
    for (auto _ : state) benchmark::DoNotOptimize(lens::tsne_embed(x, cfg).final_kl);
}
BENCHMARK(bm_tsne_embed_100_iterations);

BENCHMARK_MAIN();
