// SPDX-License-Identifier: Apache-2.0
#include "flowtok/tokenizer/config.hpp"

#include <set>

#include "flowtok/error.hpp"

namespace flowtok::tok {

using nlohmann::json;

std::size_t TokenizerConfig::codebook_size() const {
    std::size_t n = 1;
    for (int l : fsq_levels) n *= static_cast<std::size_t>(l);
    return n;
}

void TokenizerConfig::validate() const {
    auto fail = [](const std::string& m) { throw UserError("tokenizer config: " + m); };
    if (atoms != 1 && atoms != 3) fail("atoms must be 1 or 3");
    if (max_length == 0) fail("max_length must be positive");
    if (encoder_layers == 0 || decoder_layers == 0) fail("layer counts must be positive");
    if (encoder_width == 0 || decoder_width == 0 || heads == 0 || mlp_factor == 0) fail("widths must be positive");
    if (encoder_width % heads || decoder_width % heads) fail("widths must be divisible by heads");
    if ((encoder_width / heads) % 2 || (decoder_width / heads) % 2) fail("head width must be even for rotary positions");
    if (window < -1) fail("window must be -1 (unrestricted), 0 (pointwise) or positive");
    if (fsq_levels.empty()) fail("fsq_levels must not be empty");
    for (int l : fsq_levels) {
        if (l < 2) fail("every FSQ level must be at least 2");
    }
    if (dropout < 0.0 || dropout >= 1.0) fail("dropout must lie in [0, 1)");
    if (cond_mask_prob < 0.0 || cond_mask_prob > 1.0) fail("cond_mask_prob must lie in [0, 1]");
    if (codebook_jitter < 0.0) fail("codebook_jitter must be non-negative");
    if (pair_bias && pair_channels == 0) fail("pair_channels must be positive");
    if (relpos_clip < 1) fail("relpos_clip must be positive");
    if (!(coord_scale > 0.0)) fail("coord_scale must be positive");
}

TokenizerConfig small_profile() {
    TokenizerConfig c;
    c.encoder_layers = 2;
    c.encoder_width = 32;
    c.decoder_layers = 4;
    c.decoder_width = 64;
    c.heads = 4;
    c.max_length = 64;
    return c;
}

std::string to_string(PositionMode m) {
    switch (m) {
        case PositionMode::none: return "none";
        case PositionMode::absolute: return "absolute";
        case PositionMode::rotary: return "rotary";
    }
    return "?";
}

PositionMode parse_position_mode(const std::string& s) {
    if (s == "none") return PositionMode::none;
    if (s == "absolute") return PositionMode::absolute;
    if (s == "rotary") return PositionMode::rotary;
    throw UserError("unknown encoder position mode '" + s + "'");
}

json to_json(const TokenizerConfig& c) {
    return {{"atoms", c.atoms},
            {"max_length", c.max_length},
            {"encoder_layers", c.encoder_layers},
            {"encoder_width", c.encoder_width},
            {"decoder_layers", c.decoder_layers},
            {"decoder_width", c.decoder_width},
            {"heads", c.heads},
            {"mlp_factor", c.mlp_factor},
            {"dropout", c.dropout},
            {"window", c.window},
            {"encoder_positions", to_string(c.encoder_positions)},
            {"nonlinear_embedding", c.nonlinear_embedding},
            {"fsq_levels", c.fsq_levels},
            {"codebook_jitter", c.codebook_jitter},
            {"share_adaln", c.share_adaln},
            {"pair_bias", c.pair_bias},
            {"pair_channels", c.pair_channels},
            {"relpos_clip", c.relpos_clip},
            {"self_conditioning", c.self_conditioning},
            {"cond_mask_prob", c.cond_mask_prob},
            {"coord_scale", c.coord_scale},
            {"init_seed", c.init_seed}};
}

TokenizerConfig tokenizer_config_from_json(const json& j, TokenizerConfig c) {
    if (!j.is_object()) throw UserError("tokenizer config must be a JSON object");
    static const std::set<std::string> known = [] {
        std::set<std::string> k;
        const json defaults = to_json(TokenizerConfig{});
        for (auto& [key, _] : defaults.items()) k.insert(key);
        return k;
    }();
    for (auto& [key, _] : j.items()) {
        if (!known.count(key)) throw UserError("tokenizer config: unknown key '" + key + "'");
    }
    try {
        c.atoms = j.value("atoms", c.atoms);
        c.max_length = j.value("max_length", c.max_length);
        c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
        c.encoder_width = j.value("encoder_width", c.encoder_width);
        c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
        c.decoder_width = j.value("decoder_width", c.decoder_width);
        c.heads = j.value("heads", c.heads);
        c.mlp_factor = j.value("mlp_factor", c.mlp_factor);
        c.dropout = j.value("dropout", c.dropout);
        c.window = j.value("window", c.window);
        if (j.contains("encoder_positions")) c.encoder_positions = parse_position_mode(j.at("encoder_positions"));
        c.nonlinear_embedding = j.value("nonlinear_embedding", c.nonlinear_embedding);
        c.fsq_levels = j.value("fsq_levels", c.fsq_levels);
        c.codebook_jitter = j.value("codebook_jitter", c.codebook_jitter);
        c.share_adaln = j.value("share_adaln", c.share_adaln);
        c.pair_bias = j.value("pair_bias", c.pair_bias);
        c.pair_channels = j.value("pair_channels", c.pair_channels);
        c.relpos_clip = j.value("relpos_clip", c.relpos_clip);
        c.self_conditioning = j.value("self_conditioning", c.self_conditioning);
        c.cond_mask_prob = j.value("cond_mask_prob", c.cond_mask_prob);
        c.coord_scale = j.value("coord_scale", c.coord_scale);
        c.init_seed = j.value("init_seed", c.init_seed);
    } catch (const json::exception& e) {
        throw UserError(std::string("tokenizer config: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace flowtok::tok
