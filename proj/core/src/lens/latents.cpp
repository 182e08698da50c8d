#include <algorithm>
#include <cstdint>
#include <vector>

#include "softperc/autodiff.hpp"
#include "softperc/common.hpp"
#include "softperc/cvae/train.hpp"
#include "softperc/lens/lens.hpp"
#include "softperc/sim/dataset.hpp"

namespace softperc::lens {

LatentDump collect_latents(const cvae::WorldModel& model, const sim::DatasetReader& data,
                           const std::vector<std::int64_t>& ts) {
    if (ts.empty()) throw UsageError("collect_latents: no frames requested");
    const std::int64_t n = std::int64_t(ts.size());
    const std::int64_t d = model.config().latent_dim;

    LatentDump dump;
    dump.encoded = num::TensorT<double>({n, d});
    dump.conditioned = num::TensorT<double>({n, d});
    dump.force.resize(n);

    num::NoGradGuard eval_only;
    constexpr std::int64_t kChunk = 128;
    for (std::int64_t at = 0; at < n; at += kChunk) {
        const std::int64_t b = std::min(kChunk, n - at);
        const std::vector<std::int64_t> chunk(ts.begin() + at, ts.begin() + at + b);
        const auto inputs = cvae::make_inputs(data, chunk, model.config());
        const auto actions = cvae::make_actions(data, chunk);
        // Mean mode: z == mu, so one encode yields both latent spaces.
        const auto lat = model.encode(inputs);
        const auto z_c = model.condition(lat.z, actions);
        for (std::int64_t i = 0; i < b; ++i) {
            for (std::int64_t k = 0; k < d; ++k) {
                dump.encoded[(at + i) * d + k] = double(lat.mu.value()[i * d + k]);
                dump.conditioned[(at + i) * d + k] = double(z_c.value()[i * d + k]);
            }
        }
    }
    for (std::int64_t i = 0; i < n; ++i) {
        const sim::FrameRecord rec = data.frame(ts[i]);
        double total = 0.0;
        for (std::int64_t k = 0; k < sim::kForceDim; ++k) total += double(rec.force()[k]);
        dump.force[i] = total;
    }
    return dump;
}

}  // namespace softperc::lens
