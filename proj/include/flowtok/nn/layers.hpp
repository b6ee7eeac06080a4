// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "flowtok/numerics/ops.hpp"
#include "flowtok/numerics/optim.hpp"
#include "flowtok/numerics/rng.hpp"

// Transformer building blocks shared by the tokenizer and the prior. Each
// layer registers its parameters in a ParameterStore under a dotted prefix and
// keeps handles to them.
namespace flowtok::nn {

using num::Var;

// Per-forward switches: dropout is only active in training mode.
struct Context {
    bool training = false;
    double dropout = 0.0;
    num::Rng* rng = nullptr;

    Var drop(const Var& x) const;
};

enum class Init { normal_fan_in, zeros };

class Linear {
public:
    Linear() = default;
    Linear(num::ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
           num::Rng& init_rng, Init init = Init::normal_fan_in, bool bias = true);

    Var operator()(const Var& x) const;
    std::size_t in_features() const noexcept { return in_; }
    std::size_t out_features() const noexcept { return out_; }
    const Var& weight() const noexcept { return weight_; }  // [in, out]
    const Var& bias() const noexcept { return bias_; }      // [out] or undefined

private:
    std::size_t in_ = 0, out_ = 0;
    Var weight_, bias_;
};

class LayerNorm {
public:
    LayerNorm() = default;
    LayerNorm(num::ParameterStore& store, const std::string& name, std::size_t dim, bool affine = true);

    Var operator()(const Var& x) const;
    bool affine() const noexcept { return gain_.defined(); }
    const Var& gain() const noexcept { return gain_; }
    const Var& shift() const noexcept { return shift_; }

private:
    Var gain_, shift_;
};

// fc2(dropout(gelu(fc1(x))))
class Mlp {
public:
    Mlp() = default;
    Mlp(num::ParameterStore& store, const std::string& name, std::size_t dim, std::size_t hidden,
        num::Rng& init_rng);

    Var operator()(const Var& x, const Context& ctx) const;
    const Linear& fc1() const noexcept { return fc1_; }
    const Linear& fc2() const noexcept { return fc2_; }

private:
    Linear fc1_, fc2_;
};

struct AttentionExtras {
    // Added to the [B, H, T, T] logits after scaling; any broadcastable shape
    // (e.g. [T, T] masks or [H, T, T] pair biases). Undefined when unused.
    Var logit_bias;
    // Rotary positions for queries and keys; empty disables rotary encoding.
    std::span<const std::int64_t> rope_positions;
};

// Multi-head self-attention on x [B, T, D].
class SelfAttention {
public:
    SelfAttention() = default;
    SelfAttention(num::ParameterStore& store, const std::string& name, std::size_t dim, std::size_t heads,
                  num::Rng& init_rng);

    Var operator()(const Var& x, const AttentionExtras& extras, const Context& ctx) const;
    std::size_t heads() const noexcept { return heads_; }
    const Linear& qkv() const noexcept { return qkv_; }
    const Linear& out() const noexcept { return out_; }

private:
    std::size_t heads_ = 1;
    std::size_t dim_ = 0;
    Linear qkv_, out_;
};

// Additive mask over [T, T]: 0 where key j is visible from query i, a large
// negative constant elsewhere. `window` < 0 means unrestricted.
num::Tensor sliding_window_mask(std::size_t length, int window);
num::Tensor causal_mask(std::size_t length);

inline constexpr double kMaskedLogit = -1e9;

// Sinusoidal features of scalar inputs: [N] -> [N, dim].
num::Tensor sinusoidal_features(std::span<const double> values, std::size_t dim, double max_period = 10000.0);

}  // namespace flowtok::nn
