// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "flowtok/numerics/ops.hpp"
#include "flowtok/numerics/rng.hpp"

// Linear probability path x_t = (1 - t) x0 + t x1 with target field x1 - x0.
// Tensors are batched [B, L, A, 3] in model units.
namespace flowtok::flow {

using num::Tensor;
using num::Var;

struct FlowState {
    Tensor x0;  // centred noise
    Tensor x1;  // centred data
    Tensor xt;
    std::vector<double> t;  // one per sample
};

// Interpolant for per-sample times.
Tensor interpolate(const Tensor& x0, const Tensor& x1, std::span<const double> t);

// State at given noise and times.
FlowState make_state(Tensor x1, Tensor x0, std::vector<double> t);

// x0 ~ N(0, I) projected onto zero CA centroid, t ~ U[0, 1).
FlowState make_training_pair(const Tensor& x1, int atoms, num::Rng& rng);

Tensor target_field(const FlowState& s);

// Mean squared error over every coordinate entry. Throws NumericError when
// the loss is not finite.
Var flow_loss(const Var& predicted, const FlowState& s);

using FieldPredictor = std::function<Var(const FlowState&)>;
Var flow_loss(const FieldPredictor& predict, const FlowState& s);

// Per-sample conditioning dropout flags (1 = replace by the null condition).
std::vector<std::uint8_t> draw_null_mask(std::size_t n, double p, num::Rng& rng);

}  // namespace flowtok::flow
