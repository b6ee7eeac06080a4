// SPDX-License-Identifier: Apache-2.0
#include "flowtok/tokenizer/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowtok/error.hpp"
#include "flowtok/numerics/checkpoint.hpp"
#include "flowtok/tokenizer/coords.hpp"

namespace flowtok::tok {

using num::Shape;

namespace {

constexpr const char* kCheckpointKind = "flowtok-tokenizer";
constexpr double kTimeScale = 1000.0;  // t in [0, 1] spread over the sinusoid periods
constexpr double kEmbedStd = 0.02;

const TokenizerConfig& validated(const TokenizerConfig& c) {
    c.validate();
    return c;
}

Tensor normal_init(num::Rng& rng, Shape shape, double std) {
    Tensor t = rng.normal_tensor(shape);
    t *= std;
    return t;
}

// x * (1 + scale) + shift
Var modulate(const Var& x, const Var& shift, const Var& scale) {
    return num::add(num::mul(x, num::add_scalar(scale, 1.0)), shift);
}

std::vector<std::int64_t> iota_positions(std::size_t n, std::size_t repeats) {
    std::vector<std::int64_t> p;
    p.reserve(n * repeats);
    for (std::size_t r = 0; r < repeats; ++r) {
        for (std::size_t i = 0; i < n; ++i) p.push_back(static_cast<std::int64_t>(i));
    }
    return p;
}

}  // namespace

Var TokenizerModel::Embedding::operator()(const Var& x) const {
    if (!nonlinear) return fc1(x);
    return ln(fc2(num::silu(fc1(x))));
}

TokenizerModel::Embedding TokenizerModel::make_embedding(const std::string& name, std::size_t in, std::size_t out,
                                                         num::Rng& rng) {
    Embedding e;
    e.nonlinear = config_.nonlinear_embedding;
    e.fc1 = nn::Linear(store_, name + ".fc1", in, out, rng);
    if (e.nonlinear) {
        e.fc2 = nn::Linear(store_, name + ".fc2", out, out, rng);
        e.ln = nn::LayerNorm(store_, name + ".ln", out);
    }
    return e;
}

TokenizerModel::TokenizerModel(TokenizerConfig config)
    : config_(std::move(config)), fsq_(validated(config_).fsq_levels) {
    num::Rng rng(config_.init_seed);
    const auto& c = config_;
    const std::size_t de = c.encoder_width, dd = c.decoder_width, a3 = static_cast<std::size_t>(c.atoms) * 3;

    enc_embed_ = make_embedding("enc.embed", a3, de, rng);
    if (c.encoder_positions == PositionMode::absolute) {
        enc_positions_ = store_.add("enc.positions", normal_init(rng, Shape{c.max_length, de}, kEmbedStd));
    }
    for (std::size_t i = 0; i < c.encoder_layers; ++i) {
        const std::string p = "enc.block" + std::to_string(i);
        EncoderBlock b;
        b.ln1 = nn::LayerNorm(store_, p + ".ln1", de);
        b.attn = nn::SelfAttention(store_, p + ".attn", de, c.heads, rng);
        b.ln2 = nn::LayerNorm(store_, p + ".ln2", de);
        b.mlp = nn::Mlp(store_, p + ".mlp", de, de * c.mlp_factor, rng);
        enc_blocks_.push_back(std::move(b));
    }
    enc_out_ln_ = nn::LayerNorm(store_, "enc.out_ln", de);
    fsq_in_ = nn::Linear(store_, "fsq.in", de, fsq_.dims(), rng);

    dec_embed_ = make_embedding("dec.embed", c.self_conditioning ? 2 * a3 : a3, dd, rng);
    cond_in_ = nn::Linear(store_, "dec.cond_in", fsq_.dims(), dd, rng);
    coord_type_ = store_.add("dec.coord_type", normal_init(rng, Shape{dd}, kEmbedStd));
    cond_type_ = store_.add("dec.cond_type", normal_init(rng, Shape{dd}, kEmbedStd));
    null_cond_ = store_.add("dec.null_cond", normal_init(rng, Shape{dd}, kEmbedStd));
    time_fc1_ = nn::Linear(store_, "dec.time.fc1", dd, dd, rng);
    time_fc2_ = nn::Linear(store_, "dec.time.fc2", dd, dd, rng);
    if (c.share_adaln) shared_adaln_ = nn::Linear(store_, "dec.adaln", dd, 6 * dd, rng, nn::Init::zeros);
    if (c.pair_bias) {
        const std::size_t bins = 2 * static_cast<std::size_t>(c.relpos_clip) + 1;
        relpos_table_ = store_.add("dec.pair.relpos", rng.normal_tensor(Shape{bins, c.pair_channels}));
        pair_type_table_ = store_.add("dec.pair.stream", rng.normal_tensor(Shape{4, c.pair_channels}));
    }
    for (std::size_t i = 0; i < c.decoder_layers; ++i) {
        const std::string p = "dec.block" + std::to_string(i);
        DecoderBlock b;
        b.attn = nn::SelfAttention(store_, p + ".attn", dd, c.heads, rng);
        b.mlp = nn::Mlp(store_, p + ".mlp", dd, dd * c.mlp_factor, rng);
        if (!c.share_adaln) b.adaln = nn::Linear(store_, p + ".adaln", dd, 6 * dd, rng, nn::Init::zeros);
        if (c.pair_bias) b.pair_proj = nn::Linear(store_, p + ".pair_proj", c.pair_channels, c.heads, rng,
                                                  nn::Init::normal_fan_in, false);
        dec_blocks_.push_back(std::move(b));
    }
    final_adaln_ = nn::Linear(store_, "dec.final_adaln", dd, 2 * dd, rng, nn::Init::zeros);
    head_ = nn::Linear(store_, "dec.head", dd, a3, rng, nn::Init::zeros);
}

nn::Context TokenizerModel::effective(const nn::Context& ctx) const {
    nn::Context e = ctx;
    e.dropout = ctx.training ? config_.dropout : 0.0;
    return e;
}

Var TokenizerModel::encode(const Tensor& x, const nn::Context& ctx_in) const {
    const nn::Context ctx = effective(ctx_in);
    const auto a = static_cast<std::size_t>(config_.atoms);
    if (x.rank() != 4 || x.dim(2) != a || x.dim(3) != 3) {
        throw num::ShapeError("encode", {x.shape()}, "expected [B, L, " + std::to_string(a) + ", 3]");
    }
    const std::size_t b = x.dim(0), l = x.dim(1);
    if (l == 0) throw UserError("encode: empty chain");
    if (l > config_.max_length) {
        throw UserError("encode: length " + std::to_string(l) + " exceeds max_length " +
                        std::to_string(config_.max_length));
    }
    Tensor xc = x;
    center_ca(xc, config_.atoms);
    Var h = enc_embed_(num::constant(xc.reshaped(Shape{b, l, 3 * a})));
    if (enc_positions_.defined()) h = num::add(h, num::slice(enc_positions_, 0, 0, l));

    const std::vector<std::int64_t> pos = iota_positions(l, 1);
    nn::AttentionExtras extras;
    if (config_.window >= 0) extras.logit_bias = num::constant(nn::sliding_window_mask(l, config_.window));
    if (config_.encoder_positions == PositionMode::rotary) extras.rope_positions = pos;
    for (const auto& blk : enc_blocks_) {
        h = num::add(h, blk.attn(blk.ln1(h), extras, ctx));
        h = num::add(h, blk.mlp(blk.ln2(h), ctx));
    }
    return enc_out_ln_(h);
}

Quantized TokenizerModel::quantize(const Var& c, const nn::Context& ctx, QuantizeMode mode,
                                   const Tensor* offset) const {
    Quantized q;
    q.z = fsq_in_(c);
    Var bounded = fsq_.bound(q.z);
    Tensor target = bounded.value();
    if (ctx.training && config_.codebook_jitter > 0.0) {
        if (ctx.rng == nullptr) throw std::logic_error("quantize: codebook jitter requires an rng");
        const std::size_t k = fsq_.dims();
        for (std::size_t i = 0; i < target.size(); ++i) {
            const double j = target[i] + ctx.rng->uniform(-config_.codebook_jitter, config_.codebook_jitter);
            const std::size_t d = i % k;
            target[i] = std::clamp(j, static_cast<double>(fsq_.min_value(d)), static_cast<double>(fsq_.max_value(d)));
        }
    }
    for (auto& v : target.data()) v = std::round(v);
    q.offset = target - bounded.value();
    if (mode == QuantizeMode::straight_through) {
        q.c_hat = num::straight_through(bounded, target);
    } else {
        const Tensor& off = offset ? *offset : q.offset;
        if (off.shape() != bounded.shape()) throw num::ShapeError("quantize", {off.shape(), bounded.shape()});
        q.c_hat = num::add(bounded, num::constant(off));
    }
    Tensor grid = q.c_hat.value();
    for (auto& v : grid.data()) v = std::round(v);
    q.codes = fsq_.codes(grid);
    return q;
}

Tensor TokenizerModel::grid_from_codes(std::span<const std::int64_t> codes, std::size_t batch,
                                       std::size_t length) const {
    if (codes.size() != batch * length) {
        throw UserError("grid_from_codes: " + std::to_string(codes.size()) + " codes for " + std::to_string(batch) +
                        " x " + std::to_string(length));
    }
    try {
        return fsq_.grid_from_codes(codes).reshaped(Shape{batch, length, fsq_.dims()});
    } catch (const std::out_of_range& e) {
        throw UserError(e.what());
    }
}

Var TokenizerModel::pair_logit_bias(std::size_t layer, std::size_t length) const {
    if (!config_.pair_bias) return {};
    const std::size_t n = 2 * length;
    const auto clip = static_cast<std::int64_t>(config_.relpos_clip);
    std::vector<std::int64_t> rel(n * n), typ(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const auto ri = static_cast<std::int64_t>(i % length), rj = static_cast<std::int64_t>(j % length);
            rel[i * n + j] = std::clamp<std::int64_t>(rj - ri, -clip, clip) + clip;
            typ[i * n + j] = static_cast<std::int64_t>((i / length) * 2 + j / length);
        }
    }
    Var z = num::add(num::embedding(relpos_table_, rel, Shape{n, n}),
                     num::embedding(pair_type_table_, typ, Shape{n, n}));
    Var bias = dec_blocks_.at(layer).pair_proj(num::layer_norm(z));  // [2L, 2L, H]
    return num::permute(bias, {2, 0, 1});
}

Var TokenizerModel::decode(const Var& x_t, std::span<const double> t, const Var& c_hat,
                           std::span<const std::uint8_t> null_mask, const Tensor* self_cond,
                           const nn::Context& ctx_in) const {
    const nn::Context ctx = effective(ctx_in);
    const auto a = static_cast<std::size_t>(config_.atoms);
    const std::size_t dd = config_.decoder_width, k = fsq_.dims();
    const Shape& xs = x_t.shape();
    if (xs.size() != 4 || xs[2] != a || xs[3] != 3) {
        throw num::ShapeError("decode", {xs}, "expected [B, L, " + std::to_string(a) + ", 3]");
    }
    const std::size_t b = xs[0], l = xs[1];
    if (c_hat.shape() != Shape{b, l, k}) throw num::ShapeError("decode", {xs, c_hat.shape()}, "conditioning length");
    if (t.size() != b) throw num::ShapeError("decode", {xs, Shape{t.size()}}, "one time per sample");
    if (!null_mask.empty() && null_mask.size() != b) throw num::ShapeError("decode", {xs, Shape{null_mask.size()}});
    if (l > config_.max_length) throw UserError("decode: length exceeds max_length");

    Var in = num::reshape(x_t, Shape{b, l, 3 * a});
    if (config_.self_conditioning) {
        Tensor sc = self_cond ? self_cond->reshaped(Shape{b, l, 3 * a}) : Tensor(Shape{b, l, 3 * a});
        in = num::concat({in, num::constant(std::move(sc))}, 2);
    }
    Var coord = num::add(dec_embed_(in), coord_type_);

    Var cond = cond_in_(num::mul(c_hat, num::constant(fsq_.normalizer())));
    if (std::any_of(null_mask.begin(), null_mask.end(), [](std::uint8_t m) { return m != 0; })) {
        Tensor keep(Shape{b, 1, 1}), drop(Shape{b, 1, 1});
        for (std::size_t i = 0; i < b; ++i) {
            keep[i] = null_mask[i] ? 0.0 : 1.0;
            drop[i] = 1.0 - keep[i];
        }
        cond = num::add(num::mul(cond, num::constant(keep)), num::mul(null_cond_, num::constant(drop)));
    }
    cond = num::add(cond, cond_type_);
    Var h = num::concat({coord, cond}, 1);  // [B, 2L, D]

    std::vector<double> ts(t.begin(), t.end());
    for (auto& v : ts) v *= kTimeScale;
    Var temb = time_fc2_(num::silu(time_fc1_(num::constant(nn::sinusoidal_features(ts, dd)))));
    Var st = num::silu(temb);
    auto split = [&](const Var& m, std::size_t parts) {
        Var r = num::reshape(m, Shape{b, parts, dd});
        std::vector<Var> out;
        for (std::size_t i = 0; i < parts; ++i) out.push_back(num::slice(r, 1, i, 1));  // [B, 1, D]
        return out;
    };
    std::vector<Var> shared;
    if (config_.share_adaln) shared = split(shared_adaln_(st), 6);

    const std::vector<std::int64_t> pos = iota_positions(l, 2);
    for (std::size_t i = 0; i < dec_blocks_.size(); ++i) {
        const auto& blk = dec_blocks_[i];
        const std::vector<Var> m = config_.share_adaln ? shared : split(blk.adaln(st), 6);
        nn::AttentionExtras extras;
        extras.rope_positions = pos;
        if (config_.pair_bias) extras.logit_bias = pair_logit_bias(i, l);
        Var u = blk.attn(modulate(num::layer_norm(h), m[0], m[1]), extras, ctx);
        h = num::add(h, num::mul(m[2], u));
        u = blk.mlp(modulate(num::layer_norm(h), m[3], m[4]), ctx);
        h = num::add(h, num::mul(m[5], u));
    }
    const std::vector<Var> f = split(final_adaln_(st), 2);
    h = modulate(num::layer_norm(h), f[0], f[1]);
    Var v = head_(num::slice(h, 1, 0, l));
    return num::reshape(v, Shape{b, l, a, 3});
}

std::size_t TokenizerModel::time_conditioning_parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : store_.entries()) {
        const std::string& s = e.name;
        if (s.rfind("dec.time.", 0) == 0 || s.find("adaln") != std::string::npos) n += e.param.size();
    }
    return n;
}

void save_tokenizer(const std::filesystem::path& path, const TokenizerModel& model, nlohmann::json extra) {
    nlohmann::json meta = {{"kind", kCheckpointKind}, {"config", to_json(model.config())}};
    if (extra.is_object()) {
        for (auto& [k, v] : extra.items()) meta[k] = v;
    }
    num::save_checkpoint(path, model.store(), meta);
}

std::unique_ptr<TokenizerModel> load_tokenizer(const std::filesystem::path& path) {
    const num::Checkpoint ckpt = num::read_checkpoint(path);
    if (!ckpt.meta.is_object() || ckpt.meta.value("kind", "") != kCheckpointKind || !ckpt.meta.contains("config")) {
        throw UserError(path.string() + ": not a tokenizer checkpoint");
    }
    auto model = std::make_unique<TokenizerModel>(tokenizer_config_from_json(ckpt.meta.at("config")));
    num::restore(ckpt, model->store());
    return model;
}

}  // namespace flowtok::tok
