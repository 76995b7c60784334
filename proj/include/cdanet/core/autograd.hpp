#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cdanet/core/tensor.hpp"

namespace cdanet {

/// A value in the computation graph. Leaves with requires_grad are trainable
/// parameters; interior nodes keep their parents alive until the root is dropped.
template <class T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward_fn;

    /// Adds g into this node's gradient, allocating on first use.
    void accumulate(const Tensor<T>& g) {
        if (!requires_grad) return;
        if (grad.empty()) {
            grad = g;
            return;
        }
        require_same_shape(grad, g, "gradient accumulation");
        T* dst = grad.data();
        const T* src = g.data();
        for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += src[i];
    }
    Tensor<T>& grad_buffer() {
        if (grad.empty()) grad = Tensor<T>(value.shape());
        return grad;
    }
    void zero_grad() { grad = Tensor<T>(); }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

namespace detail {
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

template <class T>
Var<T> constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return n;
}

template <class T>
Var<T> parameter(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = true;
    return n;
}

/// Creates the result node of an op. The backward closure receives the result
/// node; it is only stored when some parent needs a gradient.
template <class T, class Backward>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, Backward&& backward) {
    auto out = std::make_shared<Node<T>>();
    out->value = std::move(value);
    if (!grad_enabled()) return out;
    bool needs = false;
    for (const auto& p : parents) needs = needs || (p && p->requires_grad);
    if (!needs) return out;
    out->requires_grad = true;
    out->parents = std::move(parents);
    Node<T>* self = out.get();
    out->backward_fn = [self, fn = std::forward<Backward>(backward)]() mutable {
        if (!self->grad.empty()) fn(*self);
    };
    return out;
}

/// Reverse-mode sweep from a scalar root.
template <class T>
void backward(const Var<T>& root) {
    if (!root) throw std::invalid_argument("backward on null node");
    if (root->value.size() != 1) throw std::invalid_argument("backward requires a scalar root");
    if (!root->requires_grad) return;

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p && p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->grad_buffer()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn();
    }
}

}  // namespace cdanet
