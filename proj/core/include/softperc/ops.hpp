#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "softperc/autodiff.hpp"
#include "softperc/detail/gemm.hpp"
#include "softperc/tensor.hpp"

namespace softperc::num {

namespace detail {

[[noreturn]] inline void shape_error(const char* op, const Shape& a, const Shape& b) {
    throw NumericError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                       shape_str(b));
}

[[noreturn]] inline void shape_error(const char* op, const Shape& a, const std::string& what) {
    throw NumericError(std::string(op) + ": " + what + ", got " + shape_str(a));
}

/// Unpacks [outer, axis, inner] extents around `axis`.
inline void axis_extents(const Shape& s, int axis, std::int64_t& outer, std::int64_t& mid,
                         std::int64_t& inner) {
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
    mid = s[static_cast<std::size_t>(axis)];
    for (int i = axis + 1; i < static_cast<int>(s.size()); ++i)
        inner *= s[static_cast<std::size_t>(i)];
}

/// img [C,H,W] -> col [C*kh*kw, oh*ow], conv geometry (stride s, zero pad p).
template <class T>
void im2col(const T* img, std::int64_t c, std::int64_t h, std::int64_t w, std::int64_t kh,
            std::int64_t kw, std::int64_t s, std::int64_t p, std::int64_t oh, std::int64_t ow,
            T* col) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
        const T* src = img + ch * h * w;
        for (std::int64_t di = 0; di < kh; ++di) {
            for (std::int64_t dj = 0; dj < kw; ++dj) {
                T* dst = col + ((ch * kh + di) * kw + dj) * oh * ow;
                for (std::int64_t oi = 0; oi < oh; ++oi) {
                    const std::int64_t ii = oi * s - p + di;
                    if (ii < 0 || ii >= h) {
                        std::fill(dst + oi * ow, dst + (oi + 1) * ow, T(0));
                        continue;
                    }
                    for (std::int64_t oj = 0; oj < ow; ++oj) {
                        const std::int64_t jj = oj * s - p + dj;
                        dst[oi * ow + oj] = (jj < 0 || jj >= w) ? T(0) : src[ii * w + jj];
                    }
                }
            }
        }
    }
}

/// Scatter-add inverse of im2col: col [C*kh*kw, oh*ow] += back into img [C,H,W].
template <class T>
void col2im_add(const T* col, std::int64_t c, std::int64_t h, std::int64_t w, std::int64_t kh,
                std::int64_t kw, std::int64_t s, std::int64_t p, std::int64_t oh, std::int64_t ow,
                T* img) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
        T* dst = img + ch * h * w;
        for (std::int64_t di = 0; di < kh; ++di) {
            for (std::int64_t dj = 0; dj < kw; ++dj) {
                const T* src = col + ((ch * kh + di) * kw + dj) * oh * ow;
                for (std::int64_t oi = 0; oi < oh; ++oi) {
                    const std::int64_t ii = oi * s - p + di;
                    if (ii < 0 || ii >= h) continue;
                    for (std::int64_t oj = 0; oj < ow; ++oj) {
                        const std::int64_t jj = oj * s - p + dj;
                        if (jj >= 0 && jj < w) dst[ii * w + jj] += src[oi * ow + oj];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// dense / elementwise ops
// ---------------------------------------------------------------------------

/// a [M,K] x b [K,N] -> [M,N]
template <class T>
VarT<T> matmul(const VarT<T>& a, const VarT<T>& b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(0))
        detail::shape_error("matmul", av.shape, bv.shape);
    const std::int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    TensorT<T> out({m, n});
    detail::gemm<T>(false, false, m, n, k, T(1), av.data.data(), k, bv.data.data(), n, T(0),
                    out.data.data(), n);
    return make_op<T>("matmul", std::move(out), {a, b}, [m, k, n](NodeT<T>& self) {
        const T* g = self.ensure_grad().data.data();
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad)
            detail::gemm<T>(false, true, m, k, n, T(1), g, n, pb.value.data.data(), n, T(1),
                            pa.ensure_grad().data.data(), k);
        if (pb.requires_grad)
            detail::gemm<T>(true, false, k, n, m, T(1), pa.value.data.data(), k, g, n, T(1),
                            pb.ensure_grad().data.data(), n);
    });
}

/// Same-shape addition, or bias broadcast: b rank-1 matching a's trailing dim.
template <class T>
VarT<T> add(const VarT<T>& a, const VarT<T>& b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    const bool bias = (bv.ndim() == 1 && av.ndim() >= 1 && av.shape.back() == bv.dim(0) &&
                       av.shape != bv.shape);
    if (!bias && av.shape != bv.shape) detail::shape_error("add", av.shape, bv.shape);
    TensorT<T> out(av.shape);
    if (bias) {
        const std::int64_t cols = bv.dim(0), rows = av.numel() / cols;
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < cols; ++c)
                out[r * cols + c] = av[r * cols + c] + bv[c];
    } else {
        for (std::int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] + bv[i];
    }
    return make_op<T>("add", std::move(out), {a, b}, [bias](NodeT<T>& self) {
        const auto& g = self.ensure_grad();
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& da = pa.ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
        }
        if (pb.requires_grad) {
            auto& db = pb.ensure_grad();
            if (bias) {
                const std::int64_t cols = db.numel(), rows = g.numel() / cols;
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t c = 0; c < cols; ++c) db[c] += g[r * cols + c];
            } else {
                for (std::int64_t i = 0; i < g.numel(); ++i) db[i] += g[i];
            }
        }
    });
}

template <class T>
VarT<T> sub(const VarT<T>& a, const VarT<T>& b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.shape != bv.shape) detail::shape_error("sub", av.shape, bv.shape);
    TensorT<T> out(av.shape);
    for (std::int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] - bv[i];
    return make_op<T>("sub", std::move(out), {a, b}, [](NodeT<T>& self) {
        const auto& g = self.ensure_grad();
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& da = pa.ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
        }
        if (pb.requires_grad) {
            auto& db = pb.ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i) db[i] -= g[i];
        }
    });
}

/// Elementwise product (same shapes).
template <class T>
VarT<T> mul(const VarT<T>& a, const VarT<T>& b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.shape != bv.shape) detail::shape_error("multiply", av.shape, bv.shape);
    TensorT<T> out(av.shape);
    for (std::int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] * bv[i];
    return make_op<T>("multiply", std::move(out), {a, b}, [](NodeT<T>& self) {
        const auto& g = self.ensure_grad();
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& da = pa.ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            auto& db = pb.ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i) db[i] += g[i] * pa.value[i];
        }
    });
}

template <class T>
VarT<T> scale(const VarT<T>& a, T c) {
    TensorT<T> out(a.value().shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = c * a.value()[i];
    return make_op<T>("scale", std::move(out), {a}, [c](NodeT<T>& self) {
        const auto& g = self.ensure_grad();
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& da = pa.ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) da[i] += c * g[i];
    });
}

template <class T>
VarT<T> add_scalar(const VarT<T>& a, T c) {
    TensorT<T> out(a.value().shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + c;
    return make_op<T>("add_scalar", std::move(out), {a}, [](NodeT<T>& self) {
        const auto& g = self.ensure_grad();
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& da = pa.ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
    });
}

template <class T>
VarT<T> relu(const VarT<T>& a) {
    TensorT<T> out(a.value().shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] > T(0) ? a.value()[i] : T(0);
    return make_op<T>("relu", std::move(out), {a}, [](NodeT<T>& self) {
        const auto& g = self.ensure_grad();
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& da = pa.ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i)
            if (pa.value[i] > T(0)) da[i] += g[i];
    });
}

template <class T>
VarT<T> tanh_op(const VarT<T>& a) {
    TensorT<T> out(a.value().shape);
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<T>(std::tanh(static_cast<double>(a.value()[i])));
    return make_op<T>("tanh", std::move(out), {a}, [](NodeT<T>& self) {
        const auto& g = self.ensure_grad();
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& da = pa.ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            const T y = self.value[i];
            da[i] += g[i] * (T(1) - y * y);
        }
    });
}

/// log(1 + exp(x)), overflow-safe.
template <class T>
VarT<T> softplus(const VarT<T>& a) {
    TensorT<T> out(a.value().shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        const double x = static_cast<double>(a.value()[i]);
        out[i] = static_cast<T>(std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))));
    }
    return make_op<T>("softplus", std::move(out), {a}, [](NodeT<T>& self) {
        const auto& g = self.ensure_grad();
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& da = pa.ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            const double x = static_cast<double>(pa.value[i]);
            da[i] += g[i] * static_cast<T>(1.0 / (1.0 + std::exp(-x)));
        }
    });
}

template <class T>
VarT<T> exp_op(const VarT<T>& a) {
    TensorT<T> out(a.value().shape);
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<T>(std::exp(static_cast<double>(a.value()[i])));
    return make_op<T>("exp", std::move(out), {a}, [](NodeT<T>& self) {
        const auto& g = self.ensure_grad();
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& da = pa.ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] * self.value[i];
    });
}

template <class T>
VarT<T> log_op(const VarT<T>& a) {
    TensorT<T> out(a.value().shape);
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<T>(std::log(static_cast<double>(a.value()[i])));
    return make_op<T>("log", std::move(out), {a}, [](NodeT<T>& self) {
        const auto& g = self.ensure_grad();
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& da = pa.ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] / pa.value[i];
    });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <class T>
VarT<T> sum(const VarT<T>& a) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.value().numel(); ++i) acc += static_cast<double>(a.value()[i]);
    return make_op<T>("sum", TensorT<T>::scalar(static_cast<T>(acc)), {a}, [](NodeT<T>& self) {
        const T g = self.ensure_grad()[0];
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& da = pa.ensure_grad();
        for (std::int64_t i = 0; i < da.numel(); ++i) da[i] += g;
    });
}

template <class T>
VarT<T> mean(const VarT<T>& a) {
    const std::int64_t n = a.value().numel();
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) acc += static_cast<double>(a.value()[i]);
    return make_op<T>("mean", TensorT<T>::scalar(static_cast<T>(acc / static_cast<double>(n))), {a},
                      [n](NodeT<T>& self) {
                          const T g = self.ensure_grad()[0] / static_cast<T>(n);
                          auto& pa = *self.parents[0];
                          if (!pa.requires_grad) return;
                          auto& da = pa.ensure_grad();
                          for (std::int64_t i = 0; i < da.numel(); ++i) da[i] += g;
                      });
}

/// Scalar sum of squared differences.
template <class T>
VarT<T> squared_error(const VarT<T>& a, const VarT<T>& b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.shape != bv.shape) detail::shape_error("squared-error", av.shape, bv.shape);
    double acc = 0.0;
    for (std::int64_t i = 0; i < av.numel(); ++i) {
        const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
        acc += d * d;
    }
    return make_op<T>("squared-error", TensorT<T>::scalar(static_cast<T>(acc)), {a, b},
                      [](NodeT<T>& self) {
                          const T g = self.ensure_grad()[0];
                          auto& pa = *self.parents[0];
                          auto& pb = *self.parents[1];
                          for (std::int64_t i = 0; i < pa.value.numel(); ++i) {
                              const T d = T(2) * (pa.value[i] - pb.value[i]) * g;
                              if (pa.requires_grad) pa.ensure_grad()[i] += d;
                              if (pb.requires_grad) pb.ensure_grad()[i] -= d;
                          }
                      });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <class T>
VarT<T> reshape(const VarT<T>& a, Shape shape) {
    if (numel_of(shape) != a.value().numel())
        detail::shape_error("reshape", a.value().shape,
                            "cannot reshape to " + shape_str(shape));
    TensorT<T> out(std::move(shape), a.value().data);
    return make_op<T>("reshape", std::move(out), {a}, [](NodeT<T>& self) {
        const auto& g = self.ensure_grad();
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& da = pa.ensure_grad();
        for (std::int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
    });
}

template <class T>
VarT<T> concat(const std::vector<VarT<T>>& xs, int axis) {
    if (xs.empty()) throw NumericError("concat: no inputs");
    const auto& s0 = xs[0].value().shape;
    if (axis < 0 || axis >= static_cast<int>(s0.size()))
        detail::shape_error("concat", s0, "axis " + std::to_string(axis) + " out of range");
    Shape out_shape = s0;
    std::int64_t mid_total = 0;
    for (const auto& x : xs) {
        const auto& s = x.value().shape;
        if (s.size() != s0.size()) detail::shape_error("concat", s0, s);
        for (int i = 0; i < static_cast<int>(s.size()); ++i)
            if (i != axis && s[static_cast<std::size_t>(i)] != s0[static_cast<std::size_t>(i)])
                detail::shape_error("concat", s0, s);
        mid_total += s[static_cast<std::size_t>(axis)];
    }
    out_shape[static_cast<std::size_t>(axis)] = mid_total;

    std::int64_t outer, mid_out, inner;
    detail::axis_extents(out_shape, axis, outer, mid_out, inner);
    TensorT<T> out(out_shape);
    std::int64_t off = 0;
    for (const auto& x : xs) {
        const std::int64_t mid = x.value().shape[static_cast<std::size_t>(axis)];
        for (std::int64_t o = 0; o < outer; ++o)
            std::copy_n(x.value().data.data() + o * mid * inner, mid * inner,
                        out.data.data() + (o * mid_out + off) * inner);
        off += mid;
    }
    return make_op<T>("concat", std::move(out), xs, [axis](NodeT<T>& self) {
        const auto& g = self.ensure_grad();
        std::int64_t outer, mid_out, inner;
        detail::axis_extents(g.shape, axis, outer, mid_out, inner);
        std::int64_t off = 0;
        for (auto& p : self.parents) {
            const std::int64_t mid = p->value.shape[static_cast<std::size_t>(axis)];
            if (p->requires_grad) {
                auto& dp = p->ensure_grad();
                for (std::int64_t o = 0; o < outer; ++o) {
                    const T* src = g.data.data() + (o * mid_out + off) * inner;
                    T* dst = dp.data.data() + o * mid * inner;
                    for (std::int64_t i = 0; i < mid * inner; ++i) dst[i] += src[i];
                }
            }
            off += mid;
        }
    });
}

template <class T>
VarT<T> concat(const VarT<T>& a, const VarT<T>& b, int axis) {
    return concat(std::vector<VarT<T>>{a, b}, axis);
}

/// Contiguous range [start, start+len) along `axis`.
template <class T>
VarT<T> slice(const VarT<T>& a, int axis, std::int64_t start, std::int64_t len) {
    const auto& s = a.value().shape;
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        detail::shape_error("slice", s, "axis " + std::to_string(axis) + " out of range");
    const std::int64_t mid = s[static_cast<std::size_t>(axis)];
    if (start < 0 || len <= 0 || start + len > mid)
        detail::shape_error("slice", s,
                            "range [" + std::to_string(start) + "," + std::to_string(start + len) +
                                ") exceeds axis " + std::to_string(axis));
    std::int64_t outer, m, inner;
    detail::axis_extents(s, axis, outer, m, inner);
    Shape out_shape = s;
    out_shape[static_cast<std::size_t>(axis)] = len;
    TensorT<T> out(out_shape);
    for (std::int64_t o = 0; o < outer; ++o)
        std::copy_n(a.value().data.data() + (o * mid + start) * inner, len * inner,
                    out.data.data() + o * len * inner);
    return make_op<T>("slice", std::move(out), {a}, [axis, start, len](NodeT<T>& self) {
        const auto& g = self.ensure_grad();
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        auto& da = pa.ensure_grad();
        std::int64_t outer, mid, inner;
        detail::axis_extents(da.shape, axis, outer, mid, inner);
        for (std::int64_t o = 0; o < outer; ++o) {
            const T* src = g.data.data() + o * len * inner;
            T* dst = da.data.data() + (o * mid + start) * inner;
            for (std::int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
    });
}

// ---------------------------------------------------------------------------
// convolutions
// ---------------------------------------------------------------------------

/// x [N,C,H,W], w [F,C,kh,kw], optional bias [F]; zero padding, stride >= 1.
template <class T>
VarT<T> conv2d(const VarT<T>& x, const VarT<T>& w, const VarT<T>& b, std::int64_t stride,
               std::int64_t pad) {
    const auto& xv = x.value();
    const auto& wv = w.value();
    if (xv.ndim() != 4 || wv.ndim() != 4 || xv.dim(1) != wv.dim(1))
        detail::shape_error("conv2d", xv.shape, wv.shape);
    if (stride < 1) throw NumericError("conv2d: stride must be >= 1");
    const std::int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
    const std::int64_t f = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    const std::int64_t oh = (h + 2 * pad - kh) / stride + 1;
    const std::int64_t ow = (wd + 2 * pad - kw) / stride + 1;
    if (oh < 1 || ow < 1) detail::shape_error("conv2d", xv.shape, "kernel larger than padded input");
    if (b.defined() && (b.value().ndim() != 1 || b.value().dim(0) != f))
        detail::shape_error("conv2d", wv.shape, b.value().shape);

    const std::int64_t ckk = c * kh * kw;
    TensorT<T> out({n, f, oh, ow});
    std::vector<T> col(static_cast<std::size_t>(ckk * oh * ow));
    for (std::int64_t i = 0; i < n; ++i) {
        detail::im2col(xv.data.data() + i * c * h * wd, c, h, wd, kh, kw, stride, pad, oh, ow,
                       col.data());
        detail::gemm<T>(false, false, f, oh * ow, ckk, T(1), wv.data.data(), ckk, col.data(),
                        oh * ow, T(0), out.data.data() + i * f * oh * ow, oh * ow);
    }
    if (b.defined()) {
        const auto& bv = b.value();
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t ch = 0; ch < f; ++ch) {
                T* dst = out.data.data() + (i * f + ch) * oh * ow;
                for (std::int64_t px = 0; px < oh * ow; ++px) dst[px] += bv[ch];
            }
    }

    std::vector<VarT<T>> inputs = b.defined() ? std::vector<VarT<T>>{x, w, b}
                                              : std::vector<VarT<T>>{x, w};
    auto back = [stride, pad](NodeT<T>& self) {
        const auto& g = self.ensure_grad();
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        const auto& xv = px.value;
        const auto& wv = pw.value;
        const std::int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
        const std::int64_t f = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
        const std::int64_t oh = g.dim(2), ow = g.dim(3), ckk = c * kh * kw;
        std::vector<T> col(static_cast<std::size_t>(ckk * oh * ow));
        for (std::int64_t i = 0; i < n; ++i) {
            const T* gi = g.data.data() + i * f * oh * ow;
            if (pw.requires_grad) {
                detail::im2col(xv.data.data() + i * c * h * wd, c, h, wd, kh, kw, stride, pad, oh,
                               ow, col.data());
                detail::gemm<T>(false, true, f, ckk, oh * ow, T(1), gi, oh * ow, col.data(),
                                oh * ow, T(1), pw.ensure_grad().data.data(), ckk);
            }
            if (px.requires_grad) {
                detail::gemm<T>(true, false, ckk, oh * ow, f, T(1), wv.data.data(), ckk, gi,
                                oh * ow, T(0), col.data(), oh * ow);
                detail::col2im_add(col.data(), c, h, wd, kh, kw, stride, pad, oh, ow,
                                   px.ensure_grad().data.data() + i * c * h * wd);
            }
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            auto& db = self.parents[2]->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t ch = 0; ch < f; ++ch) {
                    const T* gi = g.data.data() + (i * f + ch) * oh * ow;
                    double acc = 0.0;
                    for (std::int64_t px2 = 0; px2 < oh * ow; ++px2)
                        acc += static_cast<double>(gi[px2]);
                    db[ch] += static_cast<T>(acc);
                }
        }
    };
    return make_op<T>("conv2d", std::move(out), std::move(inputs), std::move(back));
}

template <class T>
VarT<T> conv2d(const VarT<T>& x, const VarT<T>& w, std::int64_t stride, std::int64_t pad) {
    return conv2d(x, w, VarT<T>{}, stride, pad);
}

/// Transposed convolution. x [N,Cin,H,W], w [Cin,Cout,kh,kw], optional bias
/// [Cout]. Output spatial size (H-1)*stride - 2*pad + kh.
template <class T>
VarT<T> deconv2d(const VarT<T>& x, const VarT<T>& w, const VarT<T>& b, std::int64_t stride,
                 std::int64_t pad) {
    const auto& xv = x.value();
    const auto& wv = w.value();
    if (xv.ndim() != 4 || wv.ndim() != 4 || xv.dim(1) != wv.dim(0))
        detail::shape_error("deconv2d", xv.shape, wv.shape);
    if (stride < 1) throw NumericError("deconv2d: stride must be >= 1");
    const std::int64_t n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
    const std::int64_t cout = wv.dim(1), kh = wv.dim(2), kw = wv.dim(3);
    const std::int64_t oh = (h - 1) * stride - 2 * pad + kh;
    const std::int64_t ow = (wd - 1) * stride - 2 * pad + kw;
    if (oh < 1 || ow < 1) detail::shape_error("deconv2d", xv.shape, "degenerate output size");
    if (b.defined() && (b.value().ndim() != 1 || b.value().dim(0) != cout))
        detail::shape_error("deconv2d", wv.shape, b.value().shape);

    const std::int64_t ckk = cout * kh * kw;
    TensorT<T> out({n, cout, oh, ow});
    std::vector<T> col(static_cast<std::size_t>(ckk * h * wd));
    for (std::int64_t i = 0; i < n; ++i) {
        // col = W^T * x_i, then scatter into the (larger) output plane.
        detail::gemm<T>(true, false, ckk, h * wd, cin, T(1), wv.data.data(), ckk,
                        xv.data.data() + i * cin * h * wd, h * wd, T(0), col.data(), h * wd);
        detail::col2im_add(col.data(), cout, oh, ow, kh, kw, stride, pad, h, wd,
                           out.data.data() + i * cout * oh * ow);
    }
    if (b.defined()) {
        const auto& bv = b.value();
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t ch = 0; ch < cout; ++ch) {
                T* dst = out.data.data() + (i * cout + ch) * oh * ow;
                for (std::int64_t px = 0; px < oh * ow; ++px) dst[px] += bv[ch];
            }
    }

    std::vector<VarT<T>> inputs = b.defined() ? std::vector<VarT<T>>{x, w, b}
                                              : std::vector<VarT<T>>{x, w};
    auto back = [stride, pad](NodeT<T>& self) {
        const auto& g = self.ensure_grad();
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        const auto& xv = px.value;
        const auto& wv = pw.value;
        const std::int64_t n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
        const std::int64_t cout = wv.dim(1), kh = wv.dim(2), kw = wv.dim(3);
        const std::int64_t oh = g.dim(2), ow = g.dim(3), ckk = cout * kh * kw;
        std::vector<T> col(static_cast<std::size_t>(ckk * h * wd));
        for (std::int64_t i = 0; i < n; ++i) {
            detail::im2col(g.data.data() + i * cout * oh * ow, cout, oh, ow, kh, kw, stride, pad, h,
                           wd, col.data());
            if (px.requires_grad)
                detail::gemm<T>(false, false, cin, h * wd, ckk, T(1), wv.data.data(), ckk,
                                col.data(), h * wd, T(1),
                                px.ensure_grad().data.data() + i * cin * h * wd, h * wd);
            if (pw.requires_grad)
                detail::gemm<T>(false, true, cin, ckk, h * wd, T(1),
                                xv.data.data() + i * cin * h * wd, h * wd, col.data(), h * wd, T(1),
                                pw.ensure_grad().data.data(), ckk);
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            auto& db = self.parents[2]->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t ch = 0; ch < cout; ++ch) {
                    const T* gi = g.data.data() + (i * cout + ch) * oh * ow;
                    double acc = 0.0;
                    for (std::int64_t px2 = 0; px2 < oh * ow; ++px2)
                        acc += static_cast<double>(gi[px2]);
                    db[ch] += static_cast<T>(acc);
                }
        }
    };
    return make_op<T>("deconv2d", std::move(out), std::move(inputs), std::move(back));
}

template <class T>
VarT<T> deconv2d(const VarT<T>& x, const VarT<T>& w, std::int64_t stride, std::int64_t pad) {
    return deconv2d(x, w, VarT<T>{}, stride, pad);
}

}  // namespace softperc::num
