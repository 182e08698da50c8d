#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "softperc/common.hpp"
#include "softperc/lens/lens.hpp"

namespace softperc::lens {

namespace {

std::int64_t bin_of(double v, double lo, double hi, int bins) {
    const auto b = std::int64_t((v - lo) / (hi - lo) * bins);
    return std::clamp<std::int64_t>(b, 0, bins - 1);
}

}  // namespace

MiResult mutual_information(const std::vector<double>& x, const std::vector<double>& y,
                            int bins) {
    if (bins < 2) throw UsageError("mi: need at least 2 bins, got " + std::to_string(bins));
    if (x.size() != y.size())
        throw UsageError("mi: series lengths differ, " + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()));
    const std::int64_t n = std::int64_t(x.size());
    if (n < 10 * std::int64_t(bins))
        throw UsageError("mi: need at least 10 samples per bin, got " + std::to_string(n) +
                         " for " + std::to_string(bins) + " bins");

    const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
    const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
    if (*xmin == *xmax || *ymin == *ymax) return {0.0, true};  // no spread, no information

    std::vector<std::int64_t> joint(std::size_t(bins) * bins, 0);
    std::vector<std::int64_t> mx(bins, 0);
    std::vector<std::int64_t> my(bins, 0);
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t bx = bin_of(x[i], *xmin, *xmax, bins);
        const std::int64_t by = bin_of(y[i], *ymin, *ymax, bins);
        ++joint[bx * bins + by];
        ++mx[bx];
        ++my[by];
    }

    // Summing the cell terms in sorted order makes the estimate exactly
    // symmetric in its arguments: swapping x and y transposes the histogram
    // but leaves the multiset of terms untouched.
    std::vector<double> terms;
    terms.reserve(joint.size());
    for (int bx = 0; bx < bins; ++bx) {
        for (int by = 0; by < bins; ++by) {
            const std::int64_t c = joint[bx * bins + by];
            if (c == 0) continue;
            const double pxy = double(c) / double(n);
            const double px = double(mx[bx]) / double(n);
            const double py = double(my[by]) / double(n);
            terms.push_back(pxy * std::log2(pxy / (px * py)));
        }
    }
    std::sort(terms.begin(), terms.end());
    double mi = 0.0;
    for (const double t : terms) mi += t;
    return {std::max(mi, 0.0), false};
}

MiReport information_gain(const num::TensorT<double>& encoded_latents,
                          const num::TensorT<double>& conditioned_latents,
                          const std::vector<double>& force, const TsneConfig& cfg,
                          int bins) {
    if (encoded_latents.ndim() != 2 || conditioned_latents.ndim() != 2)
        throw UsageError("gain: latents must be [N, d]");
    const std::int64_t n = encoded_latents.dim(0);
    if (conditioned_latents.dim(0) != n || std::int64_t(force.size()) != n)
        throw UsageError("gain: encoded, conditioned and force rows must agree, got " +
                         std::to_string(n) + " / " + std::to_string(conditioned_latents.dim(0)) +
                         " / " + std::to_string(force.size()));

    // Identical seed and config for both spaces; the comparison is between
    // latents, not between optimizer runs.
    const TsneResult enc = tsne_embed(encoded_latents, cfg);
    const TsneResult cond = tsne_embed(conditioned_latents, cfg);
    const CentroidAnalysis enc_c = centroid_distance_analysis(enc.embedding, force);
    const CentroidAnalysis cond_c = centroid_distance_analysis(cond.embedding, force);
    const MiResult mi_e = mutual_information(enc_c.distance, force, bins);
    const MiResult mi_c = mutual_information(cond_c.distance, force, bins);

    MiReport rep;
    rep.mi_encoded = mi_e.bits;
    rep.mi_conditioned = mi_c.bits;
    rep.gain_percent =
        mi_e.bits > 0.0 ? 100.0 * (mi_c.bits - mi_e.bits) / mi_e.bits : 0.0;
    rep.bins = bins;
    rep.samples = n;
    rep.used_perplexity = enc.used_perplexity;
    rep.degenerate = mi_e.degenerate || mi_c.degenerate;
    return rep;
}

std::string mi_report_json(const std::vector<MiReport>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const MiReport& r : rows) {
        arr.push_back({{"mi_encoded_bits", r.mi_encoded},
                       {"mi_conditioned_bits", r.mi_conditioned},
                       {"gain_percent", r.gain_percent},
                       {"bins", r.bins},
                       {"samples", r.samples},
                       {"used_perplexity", r.used_perplexity},
                       {"degenerate", r.degenerate}});
    }
    return arr.dump(2);
}

}  // namespace softperc::lens
