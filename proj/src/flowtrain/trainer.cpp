// SPDX-License-Identifier: Apache-2.0
#include "flowtok/flowtrain/trainer.hpp"

#include <cmath>
#include <numeric>

#include "flowtok/error.hpp"
#include "flowtok/geometry/geometry.hpp"

namespace flowtok::flow {

using nlohmann::json;
using num::Shape;

void TrainConfig::validate() const {
    schedule.validate();
    auto prob = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) throw UserError(std::string("training config: ") + name + " must lie in [0, 1]");
    };
    prob(cond_mask_prob, "cond_mask_prob");
    prob(self_cond_prob, "self_cond_prob");
    if (micro_batch == 0 || accum_steps == 0) throw UserError("training config: batch sizes must be positive");
    if (gpt_reg_weight < 0.0) throw UserError("training config: gpt_reg_weight must be non-negative");
    if (clip && !(*clip > 0.0)) throw UserError("training config: clip must be positive");
}

json to_json(const TrainConfig& c) {
    return {{"lr", c.schedule.lr},
            {"warmup", c.schedule.warmup},
            {"decay_iters", c.schedule.decay_iters},
            {"min_lr", c.schedule.min_lr},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"weight_decay", c.weight_decay},
            {"clip", c.clip ? json(*c.clip) : json(nullptr)},
            {"micro_batch", c.micro_batch},
            {"accum_steps", c.accum_steps},
            {"cond_mask_prob", c.cond_mask_prob},
            {"gpt_reg_weight", c.gpt_reg_weight},
            {"self_cond_prob", c.self_cond_prob},
            {"augment_rotations", c.augment_rotations},
            {"steps", c.steps},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
    if (!j.is_object()) throw UserError("training config must be a JSON object");
    const json defaults = to_json(TrainConfig{});
    for (auto& [key, _] : j.items()) {
        if (!defaults.contains(key)) throw UserError("training config: unknown key '" + key + "'");
    }
    try {
        c.schedule.lr = j.value("lr", c.schedule.lr);
        c.schedule.warmup = j.value("warmup", c.schedule.warmup);
        c.schedule.decay_iters = j.value("decay_iters", c.schedule.decay_iters);
        c.schedule.min_lr = j.value("min_lr", c.schedule.min_lr);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        if (j.contains("clip")) c.clip = j["clip"].is_null() ? std::nullopt : std::optional<double>(j["clip"].get<double>());
        c.micro_batch = j.value("micro_batch", c.micro_batch);
        c.accum_steps = j.value("accum_steps", c.accum_steps);
        c.cond_mask_prob = j.value("cond_mask_prob", c.cond_mask_prob);
        c.gpt_reg_weight = j.value("gpt_reg_weight", c.gpt_reg_weight);
        c.self_cond_prob = j.value("self_cond_prob", c.self_cond_prob);
        c.augment_rotations = j.value("augment_rotations", c.augment_rotations);
        c.steps = j.value("steps", c.steps);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw UserError(std::string("training config: ") + e.what());
    }
    c.validate();
    return c;
}

double lr_at(std::uint64_t step, const TrainConfig& c) { return c.schedule.at(step); }

json to_json(const StepMetrics& m) {
    return {{"step", m.step},           {"loss", m.loss},       {"flow_loss", m.flow_loss},
            {"reg_loss", m.reg_loss},   {"lr", m.lr},           {"grad_norm", m.grad_norm},
            {"codebook_usage", m.codebook_usage}, {"codes_seen", m.codes_seen},
            {"null_fraction", m.null_fraction}};
}

prior::PriorConfig regularizer_config(const tok::TokenizerConfig& model, std::uint64_t seed) {
    prior::PriorConfig p;
    p.codebook = model.codebook_size();
    p.layers = 2;
    p.width = model.decoder_width;
    p.heads = model.heads;
    p.max_length = model.max_length + 2;
    p.input_dims = model.fsq_levels.size();
    p.init_seed = seed;
    return p;
}

TokenizerTrainer::TokenizerTrainer(tok::TokenizerModel& model, TrainConfig config, std::vector<Example> corpus,
                                   prior::PriorModel* regularizer)
    : model_(model), config_(std::move(config)), corpus_(std::move(corpus)), regularizer_(regularizer),
      rng_(config_.seed) {
    config_.validate();
    if (corpus_.empty()) throw UserError("tokenizer training: empty corpus");
    const auto a = static_cast<std::size_t>(model_.config().atoms);
    for (const auto& e : corpus_) {
        if (e.x.rank() != 3 || e.x.dim(1) != a || e.x.dim(2) != 3) {
            throw UserError("tokenizer training: example '" + e.id + "' has shape " + num::shape_str(e.x.shape()) +
                            ", expected [L, " + std::to_string(a) + ", 3]");
        }
        if (e.x.dim(0) > model_.config().max_length) {
            throw UserError("tokenizer training: example '" + e.id + "' exceeds max_length");
        }
    }
    if (config_.gpt_reg_weight > 0.0 && regularizer_ == nullptr) {
        throw UserError("tokenizer training: gpt_reg_weight > 0 requires a regularizer prior");
    }
    if (regularizer_ && (regularizer_->config().input_dims != model_.fsq().dims() ||
                         regularizer_->config().codebook != model_.fsq().codebook_size())) {
        throw UserError("tokenizer training: regularizer prior does not match the codebook");
    }
    order_.resize(corpus_.size());
}

std::size_t TokenizerTrainer::next_index() {
    if (cursor_ == 0) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
    }
    const std::size_t idx = order_[cursor_];
    cursor_ = (cursor_ + 1) % order_.size();
    return idx;
}

Tensor TokenizerTrainer::augmented_views(std::size_t index) {
    const Tensor& x = corpus_.at(index).x;
    const std::size_t n = x.size() / 3, b = config_.micro_batch;
    Shape s{b};
    s.insert(s.end(), x.shape().begin(), x.shape().end());
    Tensor out(s);
    for (std::size_t v = 0; v < b; ++v) {
        double* dst = out.ptr() + v * x.size();
        if (!config_.augment_rotations) {
            std::copy(x.data().begin(), x.data().end(), dst);
            continue;
        }
        const Eigen::Matrix3d r = geo::sample_rotation(rng_);
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::Vector3d p(x[i * 3], x[i * 3 + 1], x[i * 3 + 2]);
            const Eigen::Vector3d q = r * p;
            for (int k = 0; k < 3; ++k) dst[i * 3 + k] = q[k];
        }
    }
    return out;
}

StepMetrics TokenizerTrainer::step() {
    auto& store = model_.store();
    StepMetrics m;
    m.step = store.step();
    m.lr = lr_at(store.step(), config_);
    const double inv = 1.0 / static_cast<double>(config_.accum_steps);
    const bool regularize = config_.gpt_reg_weight > 0.0;
    std::set<std::int64_t> step_codes;
    std::size_t nulls = 0, samples = 0;
    const nn::Context ctx{true, 0.0, &rng_};

    for (std::size_t micro = 0; micro < config_.accum_steps; ++micro) {
        const std::size_t idx = next_index();
        const Tensor x1 = augmented_views(idx);
        const FlowState state = make_training_pair(x1, model_.config().atoms, rng_);
        const std::vector<std::uint8_t> mask = draw_null_mask(x1.dim(0), config_.cond_mask_prob, rng_);
        for (auto v : mask) nulls += v;
        samples += mask.size();

        const tok::Quantized q = model_.quantize(model_.encode(x1, ctx), ctx);
        step_codes.insert(q.codes.begin(), q.codes.end());

        Tensor estimate;
        const Tensor* self_cond = nullptr;
        if (model_.config().self_conditioning && rng_.uniform() < config_.self_cond_prob) {
            num::NoGradGuard ng;
            const Tensor v0 = model_.decode(num::constant(state.xt), state.t, q.c_hat, mask, nullptr, ctx).value();
            estimate = state.xt;
            const std::size_t per = estimate.size() / state.t.size();
            for (std::size_t i = 0; i < estimate.size(); ++i) estimate[i] += (1.0 - state.t[i / per]) * v0[i];
            self_cond = &estimate;
        }

        const Var v = model_.decode(num::constant(state.xt), state.t, q.c_hat, mask, self_cond, ctx);
        Var loss;
        try {
            loss = flow_loss(v, state);
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " at step " + std::to_string(m.step) + ", example '" +
                               corpus_[idx].id + "'");
        }
        m.flow_loss += loss.value().item() * inv;
        if (regularize) {
            const Var normalized = num::mul(q.c_hat, num::constant(model_.fsq().normalizer()));
            const Var reg = regularizer_->continuous_loss(normalized, q.codes, ctx);
            m.reg_loss += reg.value().item() * inv;
            loss = num::add(loss, num::scale(reg, config_.gpt_reg_weight));
        }
        num::backward(num::scale(loss, inv));
    }
    m.loss = m.flow_loss + config_.gpt_reg_weight * m.reg_loss;
    num::AdamWConfig opt{m.lr, config_.beta1, config_.beta2, 1e-8, config_.weight_decay, config_.clip};
    m.grad_norm = num::adamw_step(store, opt).grad_norm;
    if (regularize) num::adamw_step(regularizer_->store(), opt);
    seen_.insert(step_codes.begin(), step_codes.end());
    m.codebook_usage = static_cast<double>(step_codes.size()) / static_cast<double>(model_.fsq().codebook_size());
    m.codes_seen = seen_.size();
    m.null_fraction = static_cast<double>(nulls) / static_cast<double>(samples);
    return m;
}

std::vector<std::vector<std::int64_t>> tokenize(const tok::TokenizerModel& model, const std::vector<Example>& corpus) {
    num::NoGradGuard ng;
    std::vector<std::vector<std::int64_t>> out;
    out.reserve(corpus.size());
    for (const auto& e : corpus) {
        Shape s{1};
        s.insert(s.end(), e.x.shape().begin(), e.x.shape().end());
        out.push_back(model.quantize(model.encode(e.x.reshaped(s), {}), {}).codes);
    }
    return out;
}

std::vector<std::size_t> codebook_scan(const std::vector<std::vector<std::int64_t>>& codes) {
    std::set<std::int64_t> seen;
    std::vector<std::size_t> counts;
    counts.reserve(codes.size());
    for (const auto& c : codes) {
        seen.insert(c.begin(), c.end());
        counts.push_back(seen.size());
    }
    return counts;
}

}  // namespace flowtok::flow
