#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "softperc/cvae/model.hpp"
#include "softperc/sim/dataset.hpp"
#include "softperc/tensor.hpp"

namespace softperc::lens {

// All analyses run in double regardless of the model's training precision;
// they are read-only consumers of latents and labels.

/// PCA onto the top-k components of the sample covariance.
struct PcaResult {
    num::TensorT<double> projection;  // [N, k]
    num::TensorT<double> components;  // [d, k], unit columns, sign-fixed
    std::vector<double> mean;         // [d]
    std::vector<double> explained;    // k variance ratios, each in [0, 1]
};

/// Eigendecomposition of the covariance; components are ordered by
/// decreasing eigenvalue and sign-fixed so each column's largest-magnitude
/// entry is positive. Rank-0 (all rows identical) data is rejected.
PcaResult pca_project(const num::TensorT<double>& latents, int k = 2);

struct TsneConfig {
    double perplexity = 1000.0;  // clipped to (N - 1) / 3 at run time
    int iterations = 1000;
    double learning_rate = 200.0;
    double momentum_start = 0.5;
    double momentum_late = 0.8;
    int momentum_switch = 250;      // iteration where momentum steps up
    double early_exaggeration = 12.0;
    int exaggeration_until = 250;   // P is scaled up before this iteration
    std::uint64_t seed = 0;
};

struct TsneResult {
    num::TensorT<double> embedding;  // [N, 2]
    double initial_kl = 0.0;         // KL(P||Q) at the random initialization
    double final_kl = 0.0;           // KL(P||Q) at the last iterate
    double used_perplexity = 0.0;    // after clipping
    bool clipped = false;
    std::vector<double> achieved_perplexity;  // per point, from the calibration
};

/// Exact O(N^2) t-SNE: per-point sigma by bisection to the target
/// perplexity, symmetrized affinities, Student-t low-dimensional kernel,
/// momentum gradient descent with early exaggeration. Both KL figures are
/// computed against the unexaggerated P.
TsneResult tsne_embed(const num::TensorT<double>& latents, const TsneConfig& cfg);

/// Calibrated high-dimensional affinities, exposed for property tests:
/// `conditional` rows sum to 1, `joint` = (P + P^T) / 2N sums to 1.
struct TsneAffinities {
    num::TensorT<double> conditional;  // [N, N], zero diagonal
    num::TensorT<double> joint;        // [N, N]
    std::vector<double> achieved_perplexity;
};
TsneAffinities tsne_affinities(const num::TensorT<double>& latents, double perplexity);

struct SweepRow {
    double requested = 0.0;
    double used = 0.0;
    double final_kl = 0.0;
};
struct SweepResult {
    std::vector<SweepRow> rows;
    std::size_t best = 0;  // index of the lowest final KL
};

/// One tsne_embed per grid value, sharing the config's seed.
SweepResult perplexity_sweep(const num::TensorT<double>& latents,
                             const std::vector<double>& grid, const TsneConfig& cfg);

/// Distance of every embedded point to the embedding centroid, with the
/// Spearman rank correlation against the force labels.
struct CentroidAnalysis {
    std::vector<double> distance;
    double spearman = 0.0;
};
CentroidAnalysis centroid_distance_analysis(const num::TensorT<double>& embedding,
                                            const std::vector<double>& force);

/// Spearman rank correlation with average ranks on ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// `point_id,y1,y2,force,distance` rows for downstream plotting.
void write_embedding_csv(const std::string& path, const num::TensorT<double>& embedding,
                         const std::vector<double>& force,
                         const std::vector<double>& distance);

/// Binned mutual information in bits over an equal-width 2-D histogram.
/// A constant input has no information and is flagged rather than failed.
struct MiResult {
    double bits = 0.0;
    bool degenerate = false;
};
MiResult mutual_information(const std::vector<double>& x, const std::vector<double>& y,
                            int bins = 16);

/// One information-gain row: embed both latent spaces with the same t-SNE
/// seed, reduce each to centroid distances, and compare their MI with the
/// contact force.
struct MiReport {
    double mi_encoded = 0.0;      // bits
    double mi_conditioned = 0.0;  // bits
    double gain_percent = 0.0;    // 100 * (cond - enc) / enc
    int bins = 0;
    std::int64_t samples = 0;
    double used_perplexity = 0.0;
    bool degenerate = false;  // either MI came from a constant input
};
MiReport information_gain(const num::TensorT<double>& encoded_latents,
                          const num::TensorT<double>& conditioned_latents,
                          const std::vector<double>& force, const TsneConfig& cfg,
                          int bins = 16);

std::string mi_report_json(const std::vector<MiReport>& rows);

/// Mean-mode latents for the frames `ts`: encoded mu, conditioned z_c, and
/// the per-frame total contact force label (newtons).
struct LatentDump {
    num::TensorT<double> encoded;     // [N, d]
    num::TensorT<double> conditioned; // [N, d]
    std::vector<double> force;        // [N]
};
LatentDump collect_latents(const cvae::WorldModel& model, const sim::DatasetReader& data,
                           const std::vector<std::int64_t>& ts);

}  // namespace softperc::lens
