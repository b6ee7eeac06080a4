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

namespace flowtok::prior {

using num::Tensor;
using num::Var;

/// Decoder-only transformer over codebook tokens plus BOS/EOS markers.
/// Token ids: codes 0..codebook-1, BOS = codebook, EOS = codebook + 1.
struct PriorConfig {
    std::size_t codebook = 1000;
    std::size_t layers = 4;
    std::size_t width = 256;
    std::size_t heads = 8;
    std::size_t mlp_factor = 4;
    std::size_t max_length = 258;  // including BOS and EOS
    double dropout = 0.0;
    std::size_t input_dims = 0;    // > 0: embed continuous vectors of this size instead of codes
    std::uint64_t init_seed = 0;

    std::size_t vocab() const noexcept { return codebook + 2; }
    std::int64_t bos() const noexcept { return static_cast<std::int64_t>(codebook); }
    std::int64_t eos() const noexcept { return static_cast<std::int64_t>(codebook) + 1; }
    std::size_t max_codes() const noexcept { return max_length - 2; }
    void validate() const;  // throws UserError
};

nlohmann::json to_json(const PriorConfig& c);
PriorConfig prior_config_from_json(const nlohmann::json& j, PriorConfig base = {});

class PriorModel {
public:
    explicit PriorModel(PriorConfig config);

    const PriorConfig& config() const noexcept { return config_; }
    num::ParameterStore& store() noexcept { return store_; }
    const num::ParameterStore& store() const noexcept { return store_; }

    // Token embeddings plus positions for tokens laid out as [B, T].
    Var embed_tokens(std::span<const std::int64_t> tokens, std::size_t batch, std::size_t length) const;
    // [BOS, proj(x_0), ..., proj(x_{L-1})] plus positions for x [B, L, input_dims].
    Var embed_continuous(const Var& x) const;
    // Causal transformer and output head: [B, T, D] -> logits [B, T, vocab].
    Var logits(const Var& embedded, const nn::Context& ctx) const;

    // Mean next-token cross-entropy of the sequences framed as
    // [BOS, codes...] -> [codes..., EOS].
    Var sequence_loss(const std::vector<std::vector<std::int64_t>>& sequences, const nn::Context& ctx) const;
    // Same framing for continuous inputs x [B, L, input_dims] whose codes are
    // given row-major (B * L).
    Var continuous_loss(const Var& x, std::span<const std::int64_t> codes, const nn::Context& ctx) const;

    // Sum of log-probabilities of `codes` (and EOS when `with_eos`) given BOS.
    double log_likelihood(std::span<const std::int64_t> codes, bool with_eos) const;

private:
    friend class PriorSession;
    struct Block {
        nn::LayerNorm ln1, ln2;
        nn::SelfAttention attn;
        nn::Mlp mlp;
    };
    nn::Context effective(const nn::Context& ctx) const;

    PriorConfig config_;
    num::ParameterStore store_;
    Var token_table_, positions_, bos_vec_;
    nn::Linear in_proj_;
    std::vector<Block> blocks_;
    nn::LayerNorm final_ln_;
    nn::Linear head_;
};

/// Source of next-token logits for autoregressive sampling.
class NextTokenModel {
public:
    virtual ~NextTokenModel() = default;
    virtual std::size_t vocab() const = 0;
    virtual std::int64_t bos() const = 0;
    virtual std::int64_t eos() const = 0;
    virtual std::size_t max_codes() const = 0;
    // Starts a new sequence; returns the logits after BOS.
    virtual std::vector<double> start() = 0;
    // Appends `token`; returns the logits for the following position.
    virtual std::vector<double> feed(std::int64_t token) = 0;
};

/// Incremental decoding with per-layer key/value caches; matches the full
/// forward pass position by position.
class PriorSession : public NextTokenModel {
public:
    explicit PriorSession(const PriorModel& model);

    std::size_t vocab() const override { return model_.config().vocab(); }
    std::int64_t bos() const override { return model_.config().bos(); }
    std::int64_t eos() const override { return model_.config().eos(); }
    std::size_t max_codes() const override { return model_.config().max_codes(); }
    std::vector<double> start() override;
    std::vector<double> feed(std::int64_t token) override;

private:
    std::vector<double> step(std::int64_t token);

    const PriorModel& model_;
    std::size_t position_ = 0;
    std::vector<std::vector<double>> keys_, values_;  // per layer: [t, D]
};

void save_prior(const std::filesystem::path& path, const PriorModel& model, nlohmann::json extra = {});
std::unique_ptr<PriorModel> load_prior(const std::filesystem::path& path);

}  // namespace flowtok::prior
