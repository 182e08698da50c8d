#pragma once

// Central-difference gradient checking against the autodiff backward pass.
// Runs in double precision; the op kernels are templated so the exact same
// code paths are exercised as the float build.

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "softperc/autodiff.hpp"
#include "softperc/ops.hpp"

namespace gc {

using softperc::num::TensorT;
using softperc::num::VarT;

struct Result {
    double max_rel = 0.0;
    std::string where;  // "input 1, element 7" for the worst element
};

using GraphFn = std::function<VarT<double>(const std::vector<VarT<double>>&)>;

inline double eval_forward(const GraphFn& fn, const std::vector<TensorT<double>>& inputs) {
    softperc::num::NoGradGuard no_grad;
    std::vector<VarT<double>> leaves;
    leaves.reserve(inputs.size());
    for (const auto& t : inputs) leaves.push_back(VarT<double>::constant(t));
    return fn(leaves).value()[0];
}

/// Compares backward() against (f(x+h) - f(x-h)) / 2h element by element.
/// Relative error uses a unit floor so near-zero gradients are compared
/// absolutely.
inline Result check(const GraphFn& fn, std::vector<TensorT<double>> inputs, double h = 1e-3) {
    std::vector<VarT<double>> leaves;
    leaves.reserve(inputs.size());
    for (const auto& t : inputs) leaves.push_back(VarT<double>::leaf(t, true));
    auto y = fn(leaves);
    softperc::num::backward(y);

    Result res;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const auto& analytic = leaves[k].grad();
        for (std::int64_t i = 0; i < inputs[k].numel(); ++i) {
            const double saved = inputs[k][i];
            inputs[k][i] = saved + h;
            const double fp = eval_forward(fn, inputs);
            inputs[k][i] = saved - h;
            const double fm = eval_forward(fn, inputs);
            inputs[k][i] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[i];
            const double rel =
                std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            if (rel > res.max_rel) {
                res.max_rel = rel;
                std::ostringstream os;
                os << "input " << k << ", element " << i << ": analytic " << a << " vs numeric "
                   << numeric;
                res.where = os.str();
            }
        }
    }
    return res;
}

}  // namespace gc

