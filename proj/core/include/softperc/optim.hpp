#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "softperc/autodiff.hpp"
#include "softperc/common.hpp"
#include "softperc/tensor.hpp"

namespace softperc::num {

template <class T>
struct AdamConfigT {
    T lr = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
};

/// Adam with bias correction. Holds first/second moment estimates per
/// parameter; parameters are registered once and updated in place.
template <class T>
class AdamT {
public:
    explicit AdamT(std::vector<VarT<T>> params, AdamConfigT<T> cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (const auto& p : params_) {
            m_.push_back(TensorT<T>::zeros(p.shape()));
            v_.push_back(TensorT<T>::zeros(p.shape()));
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    /// One update from the gradients currently stored on the parameters.
    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), t_);
        const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), t_);
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& p = params_[k];
            const auto& g = p.grad();
            if (!g.all_finite()) {
                const std::string id = p.name().empty() ? ("#" + std::to_string(k)) : p.name();
                throw NumericError("adam: non-finite gradient for parameter " + id);
            }
            auto& val = p.mutable_value();
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::int64_t i = 0; i < val.numel(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (T(1) - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (T(1) - cfg_.beta2) * g[i] * g[i];
                const double mhat = static_cast<double>(m[i]) / bc1;
                const double vhat = static_cast<double>(v[i]) / bc2;
                val[i] -= static_cast<T>(static_cast<double>(cfg_.lr) * mhat /
                                         (std::sqrt(vhat) + static_cast<double>(cfg_.eps)));
            }
        }
    }

    std::int64_t steps() const { return t_; }
    const std::vector<VarT<T>>& params() const { return params_; }

private:
    std::vector<VarT<T>> params_;
    AdamConfigT<T> cfg_;
    std::vector<TensorT<T>> m_;
    std::vector<TensorT<T>> v_;
    std::int64_t t_ = 0;
};

using Adam = AdamT<float>;
using AdamConfig = AdamConfigT<float>;

}  // namespace softperc::num
