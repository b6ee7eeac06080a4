// SPDX-License-Identifier: Apache-2.0
#include "flowtok/numerics/autograd.hpp"

#include <unordered_set>

namespace flowtok::num {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor& Node::grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor(value.shape(), 0.0);
    if (grad.shape() != value.shape()) grad = Tensor(value.shape(), 0.0);
    return grad;
}

void Node::accumulate(const Tensor& g) {
    if (g.shape() != value.shape()) throw ShapeError("accumulate:" + op, {value.shape(), g.shape()});
    if (grad.empty()) {
        grad = g;
        return;
    }
    grad += g;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
    node_->op = "leaf";
}

void Var::zero_grad() {
    if (node_ && !node_->grad.empty()) node_->grad.fill(0.0);
}

Var make_result(Tensor value, std::string op, std::vector<Var> parents,
                std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->op = std::move(op);
    if (g_grad_enabled) {
        bool any = false;
        for (const auto& p : parents) any = any || p.requires_grad();
        if (any) {
            node->requires_grad = true;
            node->parents.reserve(parents.size());
            for (const auto& p : parents) node->parents.push_back(p.node());
            node->backward = std::move(backward_fn);
        }
    }
    return Var(std::move(node));
}

void backward(const Var& loss) {
    if (!loss.defined() || !loss.requires_grad() || !loss.node()->backward) {
        throw std::logic_error("backward: tensor has no recorded computation");
    }
    if (loss.size() != 1) throw ShapeError("backward", {loss.shape()}, "loss must be scalar");

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }

    Node* root = loss.node().get();
    root->accumulate(Tensor(root->value.shape(), 1.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward && !node->grad.empty()) node->backward(*node);
        // Interior gradients are not needed after propagation.
        if (node->backward && node != root) node->grad = Tensor();
    }
}

}  // namespace flowtok::num
