#include <Eigen/Dense>

#include <cmath>
#include <cstdint>

#include "softperc/common.hpp"
#include "softperc/lens/lens.hpp"

namespace softperc::lens {

PcaResult pca_project(const num::TensorT<double>& latents, int k) {
    if (latents.ndim() != 2)
        throw UsageError("pca: latents must be [N, d], got ndim " +
                         std::to_string(latents.ndim()));
    const std::int64_t n = latents.dim(0);
    const std::int64_t d = latents.dim(1);
    if (n < 3 || d < 2)
        throw UsageError("pca: need at least 3 points of dimension >= 2, got " +
                         std::to_string(n) + " x " + std::to_string(d));
    if (k < 1 || k > d)
        throw UsageError("pca: k must be in [1, d], got " + std::to_string(k));

    Eigen::MatrixXd x(n, d);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < d; ++j) x(i, j) = latents[i * d + j];

    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;

    const Eigen::MatrixXd cov = (x.transpose() * x) / double(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success)
        throw NumericError("pca: eigendecomposition of the covariance failed");

    // Ascending eigenvalues; negative values are round-off from a
    // positive-semidefinite matrix and count as zero variance.
    double total = 0.0;
    for (std::int64_t j = 0; j < d; ++j) total += std::max(eig.eigenvalues()(j), 0.0);
    if (total <= 0.0)
        throw NumericError("pca: data has zero variance (all points identical)");

    PcaResult res;
    res.mean.assign(mean.data(), mean.data() + d);
    res.components = num::TensorT<double>::zeros({d, std::int64_t(k)});
    res.explained.resize(k);

    Eigen::MatrixXd comps(d, k);
    for (int c = 0; c < k; ++c) {
        const std::int64_t src = d - 1 - c;  // take from the top
        Eigen::VectorXd v = eig.eigenvectors().col(src);
        // Sign convention: the largest-magnitude coordinate points positive,
        // so identical inputs always produce the identical projection.
        std::int64_t arg = 0;
        for (std::int64_t j = 1; j < d; ++j)
            if (std::abs(v(j)) > std::abs(v(arg))) arg = j;
        if (v(arg) < 0.0) v = -v;
        comps.col(c) = v;
        for (std::int64_t j = 0; j < d; ++j) res.components[j * k + c] = v(j);
        res.explained[c] = std::max(eig.eigenvalues()(src), 0.0) / total;
    }

    const Eigen::MatrixXd proj = x * comps;
    res.projection = num::TensorT<double>::zeros({n, std::int64_t(k)});
    for (std::int64_t i = 0; i < n; ++i)
        for (int c = 0; c < k; ++c) res.projection[i * k + c] = proj(i, c);
    return res;
}

}  // namespace softperc::lens
