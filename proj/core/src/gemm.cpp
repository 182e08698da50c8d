#include "softperc/detail/gemm.hpp"

#include <Eigen/Core>

namespace softperc::num::detail {

namespace {

template <class T>
using MapC = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
                        Eigen::Unaligned, Eigen::OuterStride<Eigen::Dynamic>>;
template <class T>
using Map = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
                       Eigen::Unaligned, Eigen::OuterStride<Eigen::Dynamic>>;

}  // namespace

template <class T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, T alpha,
          const T* a, std::int64_t lda, const T* b, std::int64_t ldb, T beta, T* c,
          std::int64_t ldc) {
    MapC<T> ma(a, trans_a ? k : m, trans_a ? m : k, Eigen::OuterStride<Eigen::Dynamic>(lda));
    MapC<T> mb(b, trans_b ? n : k, trans_b ? k : n, Eigen::OuterStride<Eigen::Dynamic>(ldb));
    Map<T> mc(c, m, n, Eigen::OuterStride<Eigen::Dynamic>(ldc));

    if (beta == T(0))
        mc.setZero();
    else if (beta != T(1))
        mc *= beta;

    if (!trans_a && !trans_b)
        mc.noalias() += alpha * (ma * mb);
    else if (trans_a && !trans_b)
        mc.noalias() += alpha * (ma.transpose() * mb);
    else if (!trans_a && trans_b)
        mc.noalias() += alpha * (ma * mb.transpose());
    else
        mc.noalias() += alpha * (ma.transpose() * mb.transpose());
}

template void gemm<float>(bool, bool, std::int64_t, std::int64_t, std::int64_t, float,
                          const float*, std::int64_t, const float*, std::int64_t, float, float*,
                          std::int64_t);
template void gemm<double>(bool, bool, std::int64_t, std::int64_t, std::int64_t, double,
                           const double*, std::int64_t, const double*, std::int64_t, double,
                           double*, std::int64_t);

}  // namespace softperc::num::detail
