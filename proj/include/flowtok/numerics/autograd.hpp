// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "flowtok/numerics/tensor.hpp"

namespace flowtok::num {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the dynamic computation graph. Leaves (parameters, inputs)
// have no parents and no backward function.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward;
    std::string op;
    bool requires_grad = false;

    void accumulate(const Tensor& g);
    Tensor& grad_buffer();  // zero-initialised on first use
};

/// Handle to a graph node. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);
    explicit Var(NodePtr node) : node_(std::move(node)) {}

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
    std::size_t size() const { return node_->value.size(); }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    const Tensor& grad() const { return node_->grad; }
    Tensor& grad_buffer() { return node_->grad_buffer(); }
    void zero_grad();

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const NodePtr& node() const noexcept { return node_; }

private:
    NodePtr node_;
};

inline Var constant(Tensor value) { return Var(std::move(value), false); }

// Builds the result node of an op. The parents and backward closure are only
// recorded when gradients are enabled and some parent requires them.
Var make_result(Tensor value, std::string op, std::vector<Var> parents,
                std::function<void(Node&)> backward);

// Reverse-mode sweep from a scalar. Gradients accumulate into every reachable
// node that requires them (including parameter leaves).
void backward(const Var& loss);

bool grad_enabled() noexcept;

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

}  // namespace flowtok::num
