#pragma once

#include "combts/tensor.hpp"

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

namespace combts {

struct Node;
using Var = std::shared_ptr<Node>;

/// One cell of the reverse-mode computation graph.
///
/// `value` is fixed once the node is built. `grad` has the same shape and is
/// zero until a backward pass accumulates into it. `backward_fn` reads this
/// node's grad and adds contributions into its parents' grads.
struct Node {
    Tensor4 value;
    Tensor4 grad;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;
    bool requires_grad = false;

    Node() = default;
    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    // Release uniquely owned ancestors iteratively; recursive shared_ptr
    // teardown of a long chain would exhaust the stack.
    ~Node() {
        std::vector<Var> pending = std::move(parents);
        while (!pending.empty()) {
            Var p = std::move(pending.back());
            pending.pop_back();
            if (p && p.use_count() == 1) {
                for (auto& q : p->parents) {
                    pending.push_back(std::move(q));
                }
                p->parents.clear();
            }
        }
    }

    const Shape& shape() const noexcept { return value.shape(); }

    Tensor4& ensure_grad() {
        if (grad.size() != value.size() || !(grad.shape() == value.shape())) {
            grad = Tensor4::zeros(value.shape());
        }
        return grad;
    }

    void zero_grad() {
        ensure_grad();
        grad.fill(0.0);
    }
};

/// A leaf that never receives gradient.
inline Var constant(Tensor4 value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return n;
}

/// A trainable leaf. Its grad is allocated (zeroed) immediately.
inline Var parameter(Tensor4 value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->ensure_grad();
    return n;
}

/// Build an interior node. Parents and the backward rule are dropped when no
/// parent needs gradient, so inference graphs stay cheap.
inline Var make_node(Tensor4 value, std::vector<Var> parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool needs = false;
    for (const auto& p : parents) {
        needs = needs || p->requires_grad;
    }
    if (needs) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(fn);
    }
    return n;
}

/// Reverse topological order of every node reachable from `root` that
/// requires gradient. Iterative so deep graphs cannot overflow the stack.
inline std::vector<Node*> topo_order(const Var& root) {
    std::vector<Node*> order;
    if (!root->requires_grad) {
        return order;
    }
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) {
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    std::reverse(order.begin(), order.end());
    return order;
}

/// Backpropagate from a scalar. Each reachable node's rule runs exactly once.
inline void backward(const Var& loss) {
    if (loss->value.size() != 1) {
        throw DimensionError("backward() requires a scalar loss, got " + loss->shape().str());
    }
    auto order = topo_order(loss);
    if (order.empty()) {
        return;
    }
    loss->ensure_grad();
    loss->grad[0] += 1.0;
    for (Node* n : order) {
        if (n->backward_fn) {
            n->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

inline void zero_grads(const std::vector<Var>& params) {
    for (const auto& p : params) {
        p->zero_grad();
    }
}

} // namespace combts
