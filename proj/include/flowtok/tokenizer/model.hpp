// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "flowtok/nn/layers.hpp"
#include "flowtok/numerics/optim.hpp"
#include "flowtok/tokenizer/config.hpp"
#include "flowtok/tokenizer/fsq.hpp"

namespace flowtok::tok {

using num::Tensor;
using num::Var;

enum class QuantizeMode {
    straight_through,  // round forward, identity backward
    frozen_offset,     // bound + a constant offset; an explicit identity bottleneck
};

struct Quantized {
    Var z;        // projected pre-bound values [B, L, K]
    Var c_hat;    // grid values [B, L, K]
    Tensor offset;  // c_hat - bound(z), the constant the frozen mode adds
    std::vector<std::int64_t> codes;  // B * L, row-major
};

/// Encoder, FSQ bottleneck and flow decoder. All coordinate tensors are in
/// model units (Angstrom times coord_scale) with layout [B, L, A, 3].
class TokenizerModel {
public:
    explicit TokenizerModel(TokenizerConfig config);

    const TokenizerConfig& config() const noexcept { return config_; }
    const Fsq& fsq() const noexcept { return fsq_; }
    num::ParameterStore& store() noexcept { return store_; }
    const num::ParameterStore& store() const noexcept { return store_; }

    // Pre-quantisation latents c [B, L, encoder_width]. The input is
    // re-centred on its CA centroid first.
    Var encode(const Tensor& x, const nn::Context& ctx) const;

    // Projection to len(levels) dims, bound and rounding. In frozen mode
    // `offset` (if given) replaces the offset derived from the forward value.
    Quantized quantize(const Var& c, const nn::Context& ctx, QuantizeMode mode = QuantizeMode::straight_through,
                       const Tensor* offset = nullptr) const;

    // Grid values [B, L, K] for codes laid out as B rows of L.
    Tensor grid_from_codes(std::span<const std::int64_t> codes, std::size_t batch, std::size_t length) const;

    // Velocity [B, L, A, 3]. `null_mask[b]` != 0 replaces sample b's
    // conditioning by the learned null embedding; an empty mask means all
    // conditioned. `self_cond` is the previous x1 estimate (zeros when absent
    // and self-conditioning is enabled; ignored otherwise).
    Var decode(const Var& x_t, std::span<const double> t, const Var& c_hat, std::span<const std::uint8_t> null_mask,
               const Tensor* self_cond, const nn::Context& ctx) const;

    // Scalars in the time-embedding MLP and all adaLN projections.
    std::size_t time_conditioning_parameter_count() const;

    // Attention-logit bias from the pair representation for decoder layer i,
    // [H, 2L, 2L]; undefined when pair bias is off.
    Var pair_logit_bias(std::size_t layer, std::size_t length) const;

private:
    struct EncoderBlock {
        nn::LayerNorm ln1, ln2;
        nn::SelfAttention attn;
        nn::Mlp mlp;
    };
    struct DecoderBlock {
        nn::SelfAttention attn;
        nn::Mlp mlp;
        nn::Linear adaln;     // per-block modulation when not shared
        nn::Linear pair_proj; // pair channels -> heads
    };
    struct Embedding {
        nn::Linear fc1, fc2;
        nn::LayerNorm ln;
        bool nonlinear = true;
        Var operator()(const Var& x) const;
    };

    Embedding make_embedding(const std::string& name, std::size_t in, std::size_t out, num::Rng& rng);
    nn::Context effective(const nn::Context& ctx) const;

    TokenizerConfig config_;
    Fsq fsq_;
    num::ParameterStore store_;

    Embedding enc_embed_;
    Var enc_positions_;
    std::vector<EncoderBlock> enc_blocks_;
    nn::LayerNorm enc_out_ln_;
    nn::Linear fsq_in_;

    Embedding dec_embed_;
    nn::Linear cond_in_;
    Var coord_type_, cond_type_, null_cond_;
    nn::Linear time_fc1_, time_fc2_;
    nn::Linear shared_adaln_;
    std::vector<DecoderBlock> dec_blocks_;
    nn::Linear final_adaln_, head_;
    Var relpos_table_, pair_type_table_;
};

// Checkpoint with the config embedded in the header meta.
void save_tokenizer(const std::filesystem::path& path, const TokenizerModel& model, nlohmann::json extra = {});
std::unique_ptr<TokenizerModel> load_tokenizer(const std::filesystem::path& path);

}  // namespace flowtok::tok
