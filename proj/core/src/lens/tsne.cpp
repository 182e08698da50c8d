#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "softperc/common.hpp"
#include "softperc/lens/lens.hpp"
#include "softperc/rng.hpp"

namespace softperc::lens {

namespace {

constexpr double kProbFloor = 1e-12;

std::vector<double> pairwise_sq(const num::TensorT<double>& x) {
    const std::int64_t n = x.dim(0);
    const std::int64_t d = x.dim(1);
    std::vector<double> dist(std::size_t(n) * n, 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::int64_t k = 0; k < d; ++k) {
                const double diff = x[i * d + k] - x[j * d + k];
                s += diff * diff;
            }
            dist[i * n + j] = s;
            dist[j * n + i] = s;
        }
    }
    return dist;
}

/// Row entropy for precision beta over the shifted distances; fills `p`
/// with the unnormalized kernel and returns the perplexity exp(H).
double row_perplexity(const std::vector<double>& shifted, double beta,
                      std::vector<double>& p) {
    double sum = 0.0;
    double weighted = 0.0;  // sum_j p_j * (d_j - dmin)
    for (std::size_t j = 0; j < shifted.size(); ++j) {
        const double e = std::exp(-beta * shifted[j]);
        p[j] = e;
        sum += e;
        weighted += e * shifted[j];
    }
    const double entropy = std::log(sum) + beta * weighted / sum;
    return std::exp(entropy);
}

}  // namespace

TsneAffinities tsne_affinities(const num::TensorT<double>& latents, double perplexity) {
    if (latents.ndim() != 2)
        throw UsageError("tsne: latents must be [N, d], got ndim " +
                         std::to_string(latents.ndim()));
    const std::int64_t n = latents.dim(0);
    if (n < 3) throw UsageError("tsne: need at least 3 points for affinities");
    if (!(perplexity > 1.0) || !(perplexity < double(n)))
        throw UsageError("tsne: perplexity must lie in (1, N), got " +
                         std::to_string(perplexity));

    const std::vector<double> dist = pairwise_sq(latents);

    TsneAffinities aff;
    aff.conditional = num::TensorT<double>::zeros({n, n});
    aff.joint = num::TensorT<double>::zeros({n, n});
    aff.achieved_perplexity.resize(n);

    std::vector<double> shifted(n - 1);
    std::vector<double> p(n - 1);
    for (std::int64_t i = 0; i < n; ++i) {
        double dmin = std::numeric_limits<double>::infinity();
        for (std::int64_t j = 0; j < n; ++j)
            if (j != i) dmin = std::min(dmin, dist[i * n + j]);
        std::size_t w = 0;
        for (std::int64_t j = 0; j < n; ++j)
            if (j != i) shifted[w++] = dist[i * n + j] - dmin;

        // Perplexity falls monotonically as beta grows, so expand a bracket
        // geometrically and then bisect it down to the tolerance.
        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity();
        double beta = 1.0;
        double perp = row_perplexity(shifted, beta, p);
        for (int it = 0; it < 100 && std::abs(perp - perplexity) > 1e-5; ++it) {
            if (perp > perplexity) {
                lo = beta;
                if (std::isinf(hi)) {
                    beta *= 2.0;
                } else {
                    break;  // bracketed
                }
            } else {
                hi = beta;
                if (lo == 0.0) {
                    beta /= 2.0;
                } else {
                    break;
                }
            }
            perp = row_perplexity(shifted, beta, p);
        }
        for (int it = 0; it < 50 && std::abs(perp - perplexity) > 1e-5; ++it) {
            if (perp > perplexity)
                lo = beta;
            else
                hi = beta;
            beta = std::isinf(hi) ? lo * 2.0 : 0.5 * (lo + hi);
            perp = row_perplexity(shifted, beta, p);
        }
        aff.achieved_perplexity[i] = perp;

        const double sum = std::accumulate(p.begin(), p.end(), 0.0);
        w = 0;
        for (std::int64_t j = 0; j < n; ++j)
            if (j != i) aff.conditional[i * n + j] = p[w++] / sum;
    }

    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j)
            aff.joint[i * n + j] =
                (aff.conditional[i * n + j] + aff.conditional[j * n + i]) / (2.0 * n);
    return aff;
}

namespace {

/// KL(P || Q) in nats against the unexaggerated joint, both sides floored.
double tsne_kl(const std::vector<double>& p, const num::TensorT<double>& y,
               std::int64_t n) {
    std::vector<double> w(std::size_t(n) * n, 0.0);
    double z = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = i + 1; j < n; ++j) {
            const double dy0 = y[i * 2] - y[j * 2];
            const double dy1 = y[i * 2 + 1] - y[j * 2 + 1];
            const double t = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
            w[i * n + j] = t;
            w[j * n + i] = t;
            z += 2.0 * t;
        }
    }
    double kl = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double pij = std::max(p[i * n + j], kProbFloor);
            const double qij = std::max(w[i * n + j] / z, kProbFloor);
            kl += pij * std::log(pij / qij);
        }
    }
    return kl;
}

}  // namespace

TsneResult tsne_embed(const num::TensorT<double>& latents, const TsneConfig& cfg) {
    if (latents.ndim() != 2)
        throw UsageError("tsne: latents must be [N, d], got ndim " +
                         std::to_string(latents.ndim()));
    const std::int64_t n = latents.dim(0);
    if (n < 10) throw UsageError("tsne: need at least 10 points, got " + std::to_string(n));
    if (!(cfg.perplexity > 1.0))
        throw UsageError("tsne: perplexity must exceed 1, got " +
                         std::to_string(cfg.perplexity));
    if (cfg.iterations < 1) throw UsageError("tsne: iterations must be positive");
    if (!(cfg.learning_rate > 0.0)) throw UsageError("tsne: learning rate must be positive");

    TsneResult res;
    res.used_perplexity = std::min(cfg.perplexity, double(n - 1) / 3.0);
    res.clipped = res.used_perplexity != cfg.perplexity;

    TsneAffinities aff = tsne_affinities(latents, res.used_perplexity);
    res.achieved_perplexity = std::move(aff.achieved_perplexity);
    std::vector<double> p = std::move(aff.joint.data);
    aff.conditional = {};  // N^2 buffers; free what the descent does not need
    aff.joint = {};

    Rng rng = Rng::substream(cfg.seed, "tsne-init");
    num::TensorT<double> y({n, 2});
    for (std::int64_t i = 0; i < 2 * n; ++i) y[i] = rng.normal(0.0, 1e-4);
    res.initial_kl = tsne_kl(p, y, n);

    std::vector<double> vel(std::size_t(n) * 2, 0.0);
    std::vector<double> grad(std::size_t(n) * 2, 0.0);
    std::vector<double> w(std::size_t(n) * n, 0.0);
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const double exag = iter < cfg.exaggeration_until ? cfg.early_exaggeration : 1.0;
        const double momentum =
            iter < cfg.momentum_switch ? cfg.momentum_start : cfg.momentum_late;

        double z = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t j = i + 1; j < n; ++j) {
                const double dy0 = y[i * 2] - y[j * 2];
                const double dy1 = y[i * 2 + 1] - y[j * 2 + 1];
                const double t = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
                w[i * n + j] = t;
                w[j * n + i] = t;
                z += 2.0 * t;
            }
        }

        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double t = w[i * n + j];
                const double pij = std::max(exag * p[i * n + j], kProbFloor);
                const double qij = std::max(t / z, kProbFloor);
                const double coeff = 4.0 * (pij - qij) * t;
                grad[i * 2] += coeff * (y[i * 2] - y[j * 2]);
                grad[i * 2 + 1] += coeff * (y[i * 2 + 1] - y[j * 2 + 1]);
            }
        }

        double mean0 = 0.0;
        double mean1 = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            vel[i * 2] = momentum * vel[i * 2] - cfg.learning_rate * grad[i * 2];
            vel[i * 2 + 1] = momentum * vel[i * 2 + 1] - cfg.learning_rate * grad[i * 2 + 1];
            y[i * 2] += vel[i * 2];
            y[i * 2 + 1] += vel[i * 2 + 1];
            mean0 += y[i * 2];
            mean1 += y[i * 2 + 1];
        }
        mean0 /= double(n);
        mean1 /= double(n);
        for (std::int64_t i = 0; i < n; ++i) {
            y[i * 2] -= mean0;
            y[i * 2 + 1] -= mean1;
        }
    }

    res.final_kl = tsne_kl(p, y, n);
    res.embedding = std::move(y);
    return res;
}

SweepResult perplexity_sweep(const num::TensorT<double>& latents,
                             const std::vector<double>& grid, const TsneConfig& cfg) {
    if (grid.empty()) throw UsageError("tsne: perplexity sweep needs a non-empty grid");
    for (const double g : grid)
        if (!(g > 1.0) || !(g < double(latents.dim(0))))
            throw UsageError("tsne: sweep perplexity must lie in (1, N), got " +
                             std::to_string(g));
    SweepResult res;
    for (const double g : grid) {
        TsneConfig c = cfg;
        c.perplexity = g;
        const TsneResult r = tsne_embed(latents, c);
        res.rows.push_back({g, r.used_perplexity, r.final_kl});
    }
    res.best = 0;
    for (std::size_t i = 1; i < res.rows.size(); ++i)
        if (res.rows[i].final_kl < res.rows[res.best].final_kl) res.best = i;
    return res;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw UsageError("spearman: need two equal-length series of at least 2 values");
    const auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> order(v.size());
        std::iota(order.begin(), order.end(), std::size_t(0));
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        std::size_t i = 0;
        while (i < order.size()) {
            std::size_t j = i;
            while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
            const double avg = 0.5 * (double(i) + double(j)) + 1.0;  // average rank of the tie run
            for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const std::vector<double> rx = ranks(x);
    const std::vector<double> ry = ranks(y);
    const double n = double(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;  // a constant series carries no ranking
    return sxy / std::sqrt(sxx * syy);
}

CentroidAnalysis centroid_distance_analysis(const num::TensorT<double>& embedding,
                                            const std::vector<double>& force) {
    if (embedding.ndim() != 2 || embedding.dim(1) != 2)
        throw UsageError("centroid: embedding must be [N, 2]");
    const std::int64_t n = embedding.dim(0);
    if (n < 10) throw UsageError("centroid: need at least 10 points, got " + std::to_string(n));
    if (std::int64_t(force.size()) != n)
        throw UsageError("centroid: force labels must match the embedding, got " +
                         std::to_string(force.size()) + " for " + std::to_string(n));

    double c0 = 0.0;
    double c1 = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        c0 += embedding[i * 2];
        c1 += embedding[i * 2 + 1];
    }
    c0 /= double(n);
    c1 /= double(n);

    CentroidAnalysis res;
    res.distance.resize(n);
    for (std::int64_t i = 0; i < n; ++i)
        res.distance[i] = std::hypot(embedding[i * 2] - c0, embedding[i * 2 + 1] - c1);
    res.spearman = spearman(res.distance, force);
    return res;
}

void write_embedding_csv(const std::string& path, const num::TensorT<double>& embedding,
                         const std::vector<double>& force,
                         const std::vector<double>& distance) {
    if (embedding.ndim() != 2 || embedding.dim(1) != 2)
        throw UsageError("lens: embedding must be [N, 2]");
    const std::int64_t n = embedding.dim(0);
    if (std::int64_t(force.size()) != n || std::int64_t(distance.size()) != n)
        throw UsageError("lens: force and distance columns must match the embedding");
    std::ofstream out(path);
    if (!out) throw DataFormatError("lens: cannot open '" + path + "' for writing");
    out << "point_id,y1,y2,force,distance\n" << std::setprecision(17);
    for (std::int64_t i = 0; i < n; ++i)
        out << i << ',' << embedding[i * 2] << ',' << embedding[i * 2 + 1] << ','
            << force[i] << ',' << distance[i] << '\n';
}

}  // namespace softperc::lens
