// SPDX-License-Identifier: Apache-2.0
#include "flowtok/prior/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "flowtok/error.hpp"
#include "flowtok/numerics/checkpoint.hpp"

namespace flowtok::prior {

using nlohmann::json;
using num::Shape;

namespace {

constexpr const char* kCheckpointKind = "flowtok-prior";
constexpr double kEmbedStd = 0.02;

Tensor scaled_normal(num::Rng& rng, Shape shape, double std) {
    Tensor t = rng.normal_tensor(shape);
    t *= std;
    return t;
}

void check_code(std::int64_t c, const PriorConfig& cfg) {
    if (c < 0 || static_cast<std::size_t>(c) >= cfg.codebook) {
        throw UserError("prior: code " + std::to_string(c) + " outside [0, " + std::to_string(cfg.codebook) + ")");
    }
}

}  // namespace

void PriorConfig::validate() const {
    auto fail = [](const std::string& m) { throw UserError("prior config: " + m); };
    if (codebook == 0) fail("codebook must be positive");
    if (layers == 0 || width == 0 || heads == 0 || mlp_factor == 0) fail("sizes must be positive");
    if (width % heads) fail("width must be divisible by heads");
    if (max_length < 3) fail("max_length must leave room for BOS, EOS and one code");
    if (dropout < 0.0 || dropout >= 1.0) fail("dropout must lie in [0, 1)");
}

json to_json(const PriorConfig& c) {
    return {{"codebook", c.codebook}, {"layers", c.layers},         {"width", c.width},
            {"heads", c.heads},       {"mlp_factor", c.mlp_factor}, {"max_length", c.max_length},
            {"dropout", c.dropout},   {"input_dims", c.input_dims}, {"init_seed", c.init_seed}};
}

PriorConfig prior_config_from_json(const json& j, PriorConfig c) {
    if (!j.is_object()) throw UserError("prior config must be a JSON object");
    const json defaults = to_json(PriorConfig{});
    for (auto& [key, _] : j.items()) {
        if (!defaults.contains(key)) throw UserError("prior config: unknown key '" + key + "'");
    }
    try {
        c.codebook = j.value("codebook", c.codebook);
        c.layers = j.value("layers", c.layers);
        c.width = j.value("width", c.width);
        c.heads = j.value("heads", c.heads);
        c.mlp_factor = j.value("mlp_factor", c.mlp_factor);
        c.max_length = j.value("max_length", c.max_length);
        c.dropout = j.value("dropout", c.dropout);
        c.input_dims = j.value("input_dims", c.input_dims);
        c.init_seed = j.value("init_seed", c.init_seed);
    } catch (const json::exception& e) {
        throw UserError(std::string("prior config: ") + e.what());
    }
    c.validate();
    return c;
}

PriorModel::PriorModel(PriorConfig config) : config_(std::move(config)) {
    config_.validate();
    num::Rng rng(config_.init_seed);
    const std::size_t d = config_.width;
    const std::string p = "prior.";
    if (config_.input_dims > 0) {
        in_proj_ = nn::Linear(store_, p + "in_proj", config_.input_dims, d, rng);
        bos_vec_ = store_.add(p + "bos", scaled_normal(rng, Shape{d}, kEmbedStd));
    } else {
        token_table_ = store_.add(p + "tokens", scaled_normal(rng, Shape{config_.vocab(), d}, kEmbedStd));
    }
    positions_ = store_.add(p + "positions", scaled_normal(rng, Shape{config_.max_length, d}, kEmbedStd));
    for (std::size_t i = 0; i < config_.layers; ++i) {
        const std::string b = p + "block" + std::to_string(i);
        Block blk;
        blk.ln1 = nn::LayerNorm(store_, b + ".ln1", d);
        blk.attn = nn::SelfAttention(store_, b + ".attn", d, config_.heads, rng);
        blk.ln2 = nn::LayerNorm(store_, b + ".ln2", d);
        blk.mlp = nn::Mlp(store_, b + ".mlp", d, d * config_.mlp_factor, rng);
        blocks_.push_back(std::move(blk));
    }
    final_ln_ = nn::LayerNorm(store_, p + "final_ln", d);
    head_ = nn::Linear(store_, p + "head", d, config_.vocab(), rng, nn::Init::zeros);
    // Small output weights keep the untrained distribution near uniform.
    for (auto& v : store_.get(p + "head.weight").mutable_value().data()) v = kEmbedStd * rng.normal();
}

nn::Context PriorModel::effective(const nn::Context& ctx) const {
    nn::Context e = ctx;
    e.dropout = ctx.training ? config_.dropout : 0.0;
    return e;
}

Var PriorModel::embed_tokens(std::span<const std::int64_t> tokens, std::size_t batch, std::size_t length) const {
    if (!token_table_.defined()) throw std::logic_error("PriorModel: continuous-input model has no token table");
    if (tokens.size() != batch * length) throw num::ShapeError("embed_tokens", {Shape{tokens.size()}, Shape{batch, length}});
    if (length > config_.max_length) throw UserError("prior: sequence longer than max_length");
    Var e = num::embedding(token_table_, tokens, Shape{batch, length});
    return num::add(e, num::slice(positions_, 0, 0, length));
}

Var PriorModel::embed_continuous(const Var& x) const {
    if (!in_proj_.weight().defined()) throw std::logic_error("PriorModel: token model has no input projection");
    const Shape& s = x.shape();
    if (s.size() != 3 || s[2] != config_.input_dims) throw num::ShapeError("embed_continuous", {s});
    const std::size_t b = s[0], l = s[1];
    if (l + 1 > config_.max_length) throw UserError("prior: sequence longer than max_length");
    Tensor ones(Shape{b, 1, 1}, 1.0);
    Var bos = num::mul(num::constant(ones), bos_vec_);  // [B, 1, D]
    Var e = num::concat({bos, in_proj_(x)}, 1);
    return num::add(e, num::slice(positions_, 0, 0, l + 1));
}

Var PriorModel::logits(const Var& embedded, const nn::Context& ctx_in) const {
    const nn::Context ctx = effective(ctx_in);
    const std::size_t t = embedded.dim(1);
    nn::AttentionExtras extras;
    extras.logit_bias = num::constant(nn::causal_mask(t));
    Var h = ctx.drop(embedded);
    for (const auto& blk : blocks_) {
        h = num::add(h, blk.attn(blk.ln1(h), extras, ctx));
        h = num::add(h, blk.mlp(blk.ln2(h), ctx));
    }
    return head_(final_ln_(h));
}

Var PriorModel::sequence_loss(const std::vector<std::vector<std::int64_t>>& seqs, const nn::Context& ctx) const {
    if (seqs.empty()) throw UserError("prior: empty batch");
    std::size_t longest = 0;
    for (const auto& s : seqs) {
        if (s.empty()) throw UserError("prior: empty token sequence");
        if (s.size() > config_.max_codes()) {
            throw UserError("prior: sequence of " + std::to_string(s.size()) + " codes exceeds max " +
                            std::to_string(config_.max_codes()));
        }
        for (auto c : s) check_code(c, config_);
        longest = std::max(longest, s.size());
    }
    const std::size_t b = seqs.size(), t = longest + 1;
    std::vector<std::int64_t> tokens(b * t, config_.eos()), targets(b * t, -1);
    for (std::size_t i = 0; i < b; ++i) {
        tokens[i * t] = config_.bos();
        for (std::size_t j = 0; j < seqs[i].size(); ++j) {
            tokens[i * t + j + 1] = seqs[i][j];
            targets[i * t + j] = seqs[i][j];
        }
        targets[i * t + seqs[i].size()] = config_.eos();
    }
    Var lg = logits(embed_tokens(tokens, b, t), ctx);
    return num::cross_entropy(num::reshape(lg, Shape{b * t, config_.vocab()}), targets);
}

Var PriorModel::continuous_loss(const Var& x, std::span<const std::int64_t> codes, const nn::Context& ctx) const {
    const std::size_t b = x.dim(0), l = x.dim(1), t = l + 1;
    if (codes.size() != b * l) throw num::ShapeError("continuous_loss", {x.shape(), Shape{codes.size()}});
    std::vector<std::int64_t> targets(b * t);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < l; ++j) {
            check_code(codes[i * l + j], config_);
            targets[i * t + j] = codes[i * l + j];
        }
        targets[i * t + l] = config_.eos();
    }
    Var lg = logits(embed_continuous(x), ctx);
    return num::cross_entropy(num::reshape(lg, Shape{b * t, config_.vocab()}), targets);
}

double PriorModel::log_likelihood(std::span<const std::int64_t> codes, bool with_eos) const {
    num::NoGradGuard ng;
    for (auto c : codes) check_code(c, config_);
    std::vector<std::int64_t> tokens{config_.bos()};
    tokens.insert(tokens.end(), codes.begin(), codes.end());
    const std::size_t t = tokens.size(), v = config_.vocab();
    const Tensor lg = logits(embed_tokens(tokens, 1, t), {}).value();
    double ll = 0.0;
    const std::size_t steps = with_eos ? t : t - 1;
    for (std::size_t i = 0; i < steps; ++i) {
        const double* row = lg.ptr() + i * v;
        const double m = *std::max_element(row, row + v);
        double z = 0.0;
        for (std::size_t k = 0; k < v; ++k) z += std::exp(row[k] - m);
        const std::int64_t target = i + 1 < t ? tokens[i + 1] : config_.eos();
        ll += row[target] - m - std::log(z);
    }
    return ll;
}

PriorSession::PriorSession(const PriorModel& model)
    : model_(model), keys_(model.blocks_.size()), values_(model.blocks_.size()) {
    if (!model.token_table_.defined()) throw std::logic_error("PriorSession: requires a token-input model");
}

std::vector<double> PriorSession::start() {
    position_ = 0;
    for (auto& k : keys_) k.clear();
    for (auto& v : values_) v.clear();
    return step(model_.config().bos());
}

std::vector<double> PriorSession::feed(std::int64_t token) {
    if (token == model_.config().bos() || token == model_.config().eos()) {
        throw std::invalid_argument("PriorSession::feed: boundary markers are not fed back");
    }
    check_code(token, model_.config());
    return step(token);
}

std::vector<double> PriorSession::step(std::int64_t token) {
    const PriorConfig& cfg = model_.config();
    if (position_ >= cfg.max_length) throw UserError("prior: generation exceeded max_length");
    num::NoGradGuard ng;
    const std::size_t d = cfg.width, h = cfg.heads, dh = d / h;
    const std::int64_t tok[1] = {token};
    Var x = num::add(num::embedding(model_.token_table_, tok, Shape{1, 1}),
                     num::slice(model_.positions_, 0, position_, 1));
    const std::size_t t = position_ + 1;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t li = 0; li < model_.blocks_.size(); ++li) {
        const auto& blk = model_.blocks_[li];
        const Tensor qkv = blk.attn.qkv()(blk.ln1(x)).value();  // [1, 1, 3D]
        auto& kc = keys_[li];
        auto& vc = values_[li];
        kc.insert(kc.end(), qkv.ptr() + d, qkv.ptr() + 2 * d);
        vc.insert(vc.end(), qkv.ptr() + 2 * d, qkv.ptr() + 3 * d);
        Tensor ctx(Shape{1, 1, d});
        std::vector<double> w(t);
        for (std::size_t hi = 0; hi < h; ++hi) {
            const double* q = qkv.ptr() + hi * dh;
            double m = -INFINITY;
            for (std::size_t j = 0; j < t; ++j) {
                const double* k = kc.data() + j * d + hi * dh;
                double s = 0.0;
                for (std::size_t e = 0; e < dh; ++e) s += q[e] * k[e];
                w[j] = s * inv;
                m = std::max(m, w[j]);
            }
            double z = 0.0;
            for (auto& v : w) z += (v = std::exp(v - m));
            for (std::size_t j = 0; j < t; ++j) {
                const double p = w[j] / z;
                const double* v = vc.data() + j * d + hi * dh;
                for (std::size_t e = 0; e < dh; ++e) ctx[hi * dh + e] += p * v[e];
            }
        }
        x = num::add(x, blk.attn.out()(num::constant(std::move(ctx))));
        x = num::add(x, blk.mlp(blk.ln2(x), {}));
    }
    ++position_;
    const Tensor lg = model_.head_(model_.final_ln_(x)).value();
    return std::vector<double>(lg.data().begin(), lg.data().end());
}

void save_prior(const std::filesystem::path& path, const PriorModel& model, json extra) {
    json meta = {{"kind", kCheckpointKind}, {"config", to_json(model.config())}};
    if (extra.is_object()) {
        for (auto& [k, v] : extra.items()) meta[k] = v;
    }
    num::save_checkpoint(path, model.store(), meta);
}

std::unique_ptr<PriorModel> load_prior(const std::filesystem::path& path) {
    const num::Checkpoint ckpt = num::read_checkpoint(path);
    if (!ckpt.meta.is_object() || ckpt.meta.value("kind", "") != kCheckpointKind || !ckpt.meta.contains("config")) {
        throw UserError(path.string() + ": not a prior checkpoint");
    }
    auto model = std::make_unique<PriorModel>(prior_config_from_json(ckpt.meta.at("config")));
    num::restore(ckpt, model->store());
    return model;
}

}  // namespace flowtok::prior
