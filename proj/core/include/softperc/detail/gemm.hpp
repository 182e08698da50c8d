#pragma once

#include <cstdint>

namespace softperc::num::detail {

/// C = alpha * op(A) * op(B) + beta * C, all row-major.
/// op(A) is M x K, op(B) is K x N, C is M x N with leading dimension ldc.
/// lda/ldb are the leading dimensions of the stored (untransposed) A/B.
template <class T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, T alpha,
          const T* a, std::int64_t lda, const T* b, std::int64_t ldb, T beta, T* c,
          std::int64_t ldc);

extern template void gemm<float>(bool, bool, std::int64_t, std::int64_t, std::int64_t, float,
                                 const float*, std::int64_t, const float*, std::int64_t, float,
                                 float*, std::int64_t);
extern template void gemm<double>(bool, bool, std::int64_t, std::int64_t, std::int64_t, double,
                                  const double*, std::int64_t, const double*, std::int64_t, double,
                                  double*, std::int64_t);

}  // namespace softperc::num::detail
