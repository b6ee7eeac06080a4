// SPDX-License-Identifier: Apache-2.0
#include "flowtok/flowtrain/flow.hpp"

#include <cmath>

#include "flowtok/error.hpp"
#include "flowtok/tokenizer/coords.hpp"

namespace flowtok::flow {

using num::Shape;

Tensor interpolate(const Tensor& x0, const Tensor& x1, std::span<const double> t) {
    if (x0.shape() != x1.shape() || x0.rank() == 0) throw num::ShapeError("interpolate", {x0.shape(), x1.shape()});
    if (t.size() != x0.dim(0)) throw num::ShapeError("interpolate", {x0.shape(), Shape{t.size()}}, "one t per sample");
    Tensor xt(x0.shape());
    const std::size_t per = x0.size() / t.size();
    for (std::size_t b = 0; b < t.size(); ++b) {
        const double tb = t[b];
        for (std::size_t i = b * per; i < (b + 1) * per; ++i) xt[i] = (1.0 - tb) * x0[i] + tb * x1[i];
    }
    return xt;
}

FlowState make_state(Tensor x1, Tensor x0, std::vector<double> t) {
    FlowState s{std::move(x0), std::move(x1), {}, std::move(t)};
    s.xt = interpolate(s.x0, s.x1, s.t);
    return s;
}

FlowState make_training_pair(const Tensor& x1, int atoms, num::Rng& rng) {
    if (x1.rank() != 4) throw num::ShapeError("make_training_pair", {x1.shape()}, "expected [B, L, A, 3]");
    Tensor x0 = rng.normal_tensor(x1.shape());
    tok::center_ca(x0, atoms);
    std::vector<double> t(x1.dim(0));
    for (auto& v : t) v = rng.uniform();
    return make_state(x1, std::move(x0), std::move(t));
}

Tensor target_field(const FlowState& s) { return s.x1 - s.x0; }

Var flow_loss(const Var& predicted, const FlowState& s) {
    if (predicted.shape() != s.x1.shape()) throw num::ShapeError("flow_loss", {predicted.shape(), s.x1.shape()});
    Var loss = num::mse(predicted, num::constant(target_field(s)));
    if (!std::isfinite(loss.value().item())) {
        throw NumericError("flow loss is not finite (prediction finite: " +
                           std::string(predicted.value().all_finite() ? "yes" : "no") + ")");
    }
    return loss;
}

Var flow_loss(const FieldPredictor& predict, const FlowState& s) { return flow_loss(predict(s), s); }

std::vector<std::uint8_t> draw_null_mask(std::size_t n, double p, num::Rng& rng) {
    std::vector<std::uint8_t> m(n, 0);
    if (p <= 0.0) return m;
    for (auto& v : m) v = rng.uniform() < p ? 1 : 0;
    return m;
}

}  // namespace flowtok::flow
