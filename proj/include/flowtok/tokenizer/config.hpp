// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace flowtok::tok {

enum class PositionMode { none, absolute, rotary };

/// Architecture of the diffusion autoencoder. Defaults follow the reference
/// training configuration; `small_profile()` is a desk-scale variant.
struct TokenizerConfig {
    int atoms = 1;                  // 1 (CA) or 3 (N, CA, C)
    std::size_t max_length = 256;

    std::size_t encoder_layers = 2;
    std::size_t encoder_width = 256;
    std::size_t decoder_layers = 8;
    std::size_t decoder_width = 512;
    std::size_t heads = 8;
    std::size_t mlp_factor = 4;
    double dropout = 0.1;

    int window = 8;                 // encoder half-width; 0 pointwise, -1 unrestricted
    PositionMode encoder_positions = PositionMode::absolute;
    bool nonlinear_embedding = true;  // Linear -> SiLU -> Linear -> LayerNorm, else one Linear

    std::vector<int> fsq_levels{8, 5, 5, 5};
    double codebook_jitter = 0.0;   // training-only uniform noise before rounding

    bool share_adaln = true;
    bool pair_bias = false;
    std::size_t pair_channels = 64;
    int relpos_clip = 32;
    bool self_conditioning = false;

    double cond_mask_prob = 0.1;
    double coord_scale = 0.1;       // Angstrom -> model units
    std::uint64_t init_seed = 0;

    std::size_t codebook_size() const;
    void validate() const;  // throws UserError
};

TokenizerConfig small_profile();

nlohmann::json to_json(const TokenizerConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
TokenizerConfig tokenizer_config_from_json(const nlohmann::json& j, TokenizerConfig base = {});

std::string to_string(PositionMode m);
PositionMode parse_position_mode(const std::string& s);

}  // namespace flowtok::tok
