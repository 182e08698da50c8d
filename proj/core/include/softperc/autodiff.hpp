#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "softperc/common.hpp"
#include "softperc/tensor.hpp"

namespace softperc::num {

template <class T>
struct NodeT;

template <class T>
using NodePtr = std::shared_ptr<NodeT<T>>;

/// One vertex of the computation graph. Holds the cached forward value
/// and, after backward(), the accumulated adjoint (same shape as value).
template <class T>
struct NodeT {
    TensorT<T> value;
    TensorT<T> grad;  // empty until backward touches this node
    std::vector<NodePtr<T>> parents;
    std::function<void(NodeT<T>&)> backward_fn;  // reads this->grad, accumulates into parents
    bool requires_grad = false;
    const char* op = "leaf";
    std::string name;  // set for named parameters

    TensorT<T>& ensure_grad() {
        if (grad.data.empty()) grad = TensorT<T>::zeros(value.shape);
        return grad;
    }
    void zero_grad() {
        if (!grad.data.empty()) std::fill(grad.data.begin(), grad.data.end(), T(0));
    }
};

namespace detail {
inline thread_local bool g_grad_enabled = true;
}

/// RAII switch that stops ops from recording graph nodes (pure inference).
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(detail::g_grad_enabled) { detail::g_grad_enabled = false; }
    ~NoGradGuard() { detail::g_grad_enabled = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::g_grad_enabled; }

/// Value-semantics handle to a graph node.
template <class T>
class VarT {
public:
    VarT() = default;
    explicit VarT(NodePtr<T> n) : node_(std::move(n)) {}

    static VarT leaf(TensorT<T> value, bool requires_grad = false, std::string name = {}) {
        auto n = std::make_shared<NodeT<T>>();
        n->value = std::move(value);
        n->requires_grad = requires_grad;
        n->name = std::move(name);
        return VarT(std::move(n));
    }
    static VarT constant(TensorT<T> value) { return leaf(std::move(value), false); }

    bool defined() const { return node_ != nullptr; }
    const TensorT<T>& value() const { return node_->value; }
    TensorT<T>& mutable_value() { return node_->value; }
    const TensorT<T>& grad() const { return node_->ensure_grad(); }
    TensorT<T>& mutable_grad() { return node_->ensure_grad(); }
    bool requires_grad() const { return node_->requires_grad; }
    const std::string& name() const { return node_->name; }
    const Shape& shape() const { return node_->value.shape; }
    NodeT<T>* node() const { return node_.get(); }
    const NodePtr<T>& node_ptr() const { return node_; }
    void zero_grad() { node_->zero_grad(); }

private:
    NodePtr<T> node_;
};

/// Builds an op node. Records parents and the backward closure only when
/// gradients are both enabled and needed.
template <class T>
VarT<T> make_op(const char* op, TensorT<T> value, std::vector<VarT<T>> inputs,
                std::function<void(NodeT<T>&)> backward) {
    auto n = std::make_shared<NodeT<T>>();
    n->value = std::move(value);
    n->op = op;
    bool need = false;
    if (grad_enabled())
        for (const auto& in : inputs)
            if (in.requires_grad()) need = true;
    if (need) {
        n->requires_grad = true;
        n->parents.reserve(inputs.size());
        for (auto& in : inputs) n->parents.push_back(in.node_ptr());
        n->backward_fn = std::move(backward);
    }
    return VarT<T>(std::move(n));
}

/// Reverse-mode sweep from a scalar root. Every reachable recorded node is
/// visited exactly once in reverse topological order; adjoints accumulate,
/// so leaves feeding several consumers receive the sum of contributions.
/// Leaf gradients persist until explicitly zeroed.
template <class T>
void backward(const VarT<T>& root) {
    if (!root.defined() || !root.value().is_scalar())
        throw NumericError("backward: root must be a scalar, got shape " +
                           shape_str(root.shape()));

    std::vector<NodeT<T>*> order;
    std::unordered_set<NodeT<T>*> seen;
    // Iterative post-order DFS over parents.
    std::vector<std::pair<NodeT<T>*, std::size_t>> stack;
    if (root.node()->requires_grad) stack.emplace_back(root.node(), 0);
    seen.insert(root.node());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            NodeT<T>* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    root.node()->ensure_grad();
    root.node()->grad.data[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

using Var = VarT<float>;

}  // namespace softperc::num
