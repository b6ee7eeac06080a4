// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flowtok/numerics/autograd.hpp"
#include "flowtok/numerics/rng.hpp"

// Differentiable operations. Binary elementwise ops follow numpy broadcasting.
// Every op throws ShapeError (naming itself and the shapes) on non-conforming
// operands.
namespace flowtok::num {

// elementwise
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var square(const Var& a);
Var tanh(const Var& a);
Var silu(const Var& a);
Var gelu(const Var& a);

// reductions to a scalar
Var sum(const Var& a);
Var mean(const Var& a);
// mean((a - b)^2) over all entries
Var mse(const Var& a, const Var& b);

// a [..., M, K] x b [K, N] -> [..., M, N]
Var matmul(const Var& a, const Var& b);
// a [..., M, K] x b [..., K, N] (or [..., N, K] with transpose_b) with equal
// leading dims -> [..., M, N]
Var bmm(const Var& a, const Var& b, bool transpose_b = false);

// shape manipulation
Var reshape(const Var& a, Shape shape);
Var permute(const Var& a, const std::vector<std::size_t>& perm);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(const Var& a, std::size_t axis, std::size_t start, std::size_t length);
// Rows of table [V, D] selected by indices; output shape index_shape + [D].
Var embedding(const Var& table, std::span<const std::int64_t> indices, const Shape& index_shape);

// normalisation along the last axis
Var softmax(const Var& a);
// (x - mean) / sqrt(var + eps), no affine terms; constant rows map to zero
Var layer_norm(const Var& a, double eps = 1e-5);

// Mean next-token cross-entropy. logits [N, V]; targets equal to ignore_index
// are skipped. Throws std::out_of_range for a target outside [0, V).
Var cross_entropy(const Var& logits, std::span<const std::int64_t> targets,
                  std::int64_t ignore_index = -1);

// Rotary position embedding on x [..., T, D] (D even); positions has length T.
Var rope(const Var& a, std::span<const std::int64_t> positions, double base = 10000.0);

// Identity forward, no gradient.
Var stop_gradient(const Var& a);
// Forward value `forward`, gradient passed to `a` unchanged.
Var straight_through(const Var& a, Tensor forward);
// round() in the forward pass, identity in the backward pass.
Var round_ste(const Var& a);

// Inverted dropout; identity when p == 0.
Var dropout(const Var& a, double p, Rng& rng);

}  // namespace flowtok::num
