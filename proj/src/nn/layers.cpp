// SPDX-License-Identifier: Apache-2.0
#include "flowtok/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace flowtok::nn {

using num::Shape;
using num::Tensor;

Var Context::drop(const Var& x) const {
    if (!training || dropout <= 0.0) return x;
    if (rng == nullptr) throw std::logic_error("nn::Context: dropout requested without an rng");
    return num::dropout(x, dropout, *rng);
}

Linear::Linear(num::ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               num::Rng& init_rng, Init init, bool bias)
    : in_(in), out_(out) {
    Tensor w(Shape{in, out}, 0.0);
    if (init == Init::normal_fan_in) {
        const double std = 1.0 / std::sqrt(static_cast<double>(in));
        for (auto& v : w.data()) v = std * init_rng.normal();
    }
    weight_ = store.add(name + ".weight", std::move(w));
    if (bias) bias_ = store.add(name + ".bias", Tensor(Shape{out}, 0.0));
}

Var Linear::operator()(const Var& x) const {
    Var y = num::matmul(x, weight_);
    return bias_.defined() ? num::add(y, bias_) : y;
}

LayerNorm::LayerNorm(num::ParameterStore& store, const std::string& name, std::size_t dim, bool affine) {
    if (affine) {
        gain_ = store.add(name + ".gain", Tensor(Shape{dim}, 1.0));
        shift_ = store.add(name + ".shift", Tensor(Shape{dim}, 0.0));
    }
}

Var LayerNorm::operator()(const Var& x) const {
    Var y = num::layer_norm(x);
    if (!gain_.defined()) return y;
    return num::add(num::mul(y, gain_), shift_);
}

Mlp::Mlp(num::ParameterStore& store, const std::string& name, std::size_t dim, std::size_t hidden,
         num::Rng& init_rng)
    : fc1_(store, name + ".fc1", dim, hidden, init_rng), fc2_(store, name + ".fc2", hidden, dim, init_rng) {}

Var Mlp::operator()(const Var& x, const Context& ctx) const { return fc2_(ctx.drop(num::gelu(fc1_(x)))); }

SelfAttention::SelfAttention(num::ParameterStore& store, const std::string& name, std::size_t dim,
                             std::size_t heads, num::Rng& init_rng)
    : heads_(heads),
      dim_(dim),
      qkv_(store, name + ".qkv", dim, 3 * dim, init_rng),
      out_(store, name + ".out", dim, dim, init_rng) {
    if (heads == 0 || dim % heads != 0) {
        throw std::invalid_argument("SelfAttention: width " + std::to_string(dim) + " not divisible by " +
                                    std::to_string(heads) + " heads");
    }
}

Var SelfAttention::operator()(const Var& x, const AttentionExtras& extras, const Context& ctx) const {
    const Shape& s = x.shape();
    if (s.size() != 3 || s[2] != dim_) throw num::ShapeError("SelfAttention", {s});
    const std::size_t b = s[0], t = s[1], h = heads_, dh = dim_ / heads_;

    Var qkv = num::reshape(qkv_(x), Shape{b, t, 3, h, dh});
    qkv = num::permute(qkv, {2, 0, 3, 1, 4});  // [3, B, H, T, Dh]
    auto part = [&](std::size_t i) { return num::reshape(num::slice(qkv, 0, i, 1), Shape{b, h, t, dh}); };
    Var q = part(0), k = part(1), v = part(2);
    if (!extras.rope_positions.empty()) {
        q = num::rope(q, extras.rope_positions);
        k = num::rope(k, extras.rope_positions);
    }
    Var logits = num::scale(num::bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(dh)));
    if (extras.logit_bias.defined()) logits = num::add(logits, extras.logit_bias);
    Var attn = num::softmax(logits);
    Var ctx_v = num::bmm(attn, v);                      // [B, H, T, Dh]
    ctx_v = num::permute(ctx_v, {0, 2, 1, 3});          // [B, T, H, Dh]
    ctx_v = num::reshape(ctx_v, Shape{b, t, dim_});
    return ctx.drop(out_(ctx_v));
}

Tensor sliding_window_mask(std::size_t length, int window) {
    Tensor mask(Shape{length, length}, 0.0);
    if (window < 0) return mask;
    const auto w = static_cast<std::size_t>(window);
    for (std::size_t i = 0; i < length; ++i) {
        for (std::size_t j = 0; j < length; ++j) {
            const std::size_t dist = i > j ? i - j : j - i;
            if (dist > w) mask[i * length + j] = kMaskedLogit;
        }
    }
    return mask;
}

Tensor causal_mask(std::size_t length) {
    Tensor mask(Shape{length, length}, 0.0);
    for (std::size_t i = 0; i < length; ++i) {
        for (std::size_t j = i + 1; j < length; ++j) mask[i * length + j] = kMaskedLogit;
    }
    return mask;
}

Tensor sinusoidal_features(std::span<const double> values, std::size_t dim, double max_period) {
    const std::size_t half = dim / 2;
    Tensor out(Shape{values.size(), dim}, 0.0);
    for (std::size_t n = 0; n < values.size(); ++n) {
        for (std::size_t i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(max_period) * static_cast<double>(i) / static_cast<double>(half));
            const double arg = values[n] * freq;
            out[n * dim + i] = std::cos(arg);
            out[n * dim + half + i] = std::sin(arg);
        }
    }
    return out;
}

}  // namespace flowtok::nn
