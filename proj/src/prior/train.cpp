// SPDX-License-Identifier: Apache-2.0
#include "flowtok/prior/train.hpp"

#include <cmath>
#include <numeric>

#include "flowtok/error.hpp"

namespace flowtok::prior {

using nlohmann::json;

void PriorTrainConfig::validate() const {
    schedule.validate();
    if (batch_size == 0) throw UserError("prior training: batch_size must be positive");
    if (clip && !(*clip > 0.0)) throw UserError("prior training: clip must be positive");
}

json to_json(const PriorTrainConfig& c) {
    return {{"lr", c.schedule.lr},
            {"warmup", c.schedule.warmup},
            {"decay_iters", c.schedule.decay_iters},
            {"min_lr", c.schedule.min_lr},
            {"steps", c.steps},
            {"batch_size", c.batch_size},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"weight_decay", c.weight_decay},
            {"clip", c.clip ? json(*c.clip) : json(nullptr)},
            {"seed", c.seed}};
}

PriorTrainConfig prior_train_config_from_json(const json& j, PriorTrainConfig c) {
    if (!j.is_object()) throw UserError("prior training config must be a JSON object");
    const json defaults = to_json(PriorTrainConfig{});
    for (auto& [key, _] : j.items()) {
        if (!defaults.contains(key)) throw UserError("prior training config: unknown key '" + key + "'");
    }
    try {
        c.schedule.lr = j.value("lr", c.schedule.lr);
        c.schedule.warmup = j.value("warmup", c.schedule.warmup);
        c.schedule.decay_iters = j.value("decay_iters", c.schedule.decay_iters);
        c.schedule.min_lr = j.value("min_lr", c.schedule.min_lr);
        c.steps = j.value("steps", c.steps);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        if (j.contains("clip")) c.clip = j["clip"].is_null() ? std::nullopt : std::optional<double>(j["clip"].get<double>());
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw UserError(std::string("prior training config: ") + e.what());
    }
    c.validate();
    return c;
}

PriorTrainer::PriorTrainer(PriorModel& model, PriorTrainConfig config, std::vector<std::vector<std::int64_t>> corpus)
    : model_(model), config_(std::move(config)), corpus_(std::move(corpus)), rng_(config_.seed) {
    config_.validate();
    if (corpus_.empty()) throw UserError("prior training: empty token corpus");
    order_.resize(corpus_.size());
}

PriorStepMetrics PriorTrainer::step() {
    std::vector<std::vector<std::int64_t>> batch;
    while (batch.size() < config_.batch_size) {
        if (cursor_ == 0) {
            std::iota(order_.begin(), order_.end(), std::size_t{0});
            for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
        }
        batch.push_back(corpus_[order_[cursor_]]);
        cursor_ = (cursor_ + 1) % order_.size();
    }
    auto& store = model_.store();
    PriorStepMetrics m;
    m.step = store.step();
    m.lr = config_.schedule.at(store.step());
    nn::Context ctx{true, 0.0, &rng_};
    num::Var loss = model_.sequence_loss(batch, ctx);
    m.loss = loss.value().item();
    if (!std::isfinite(m.loss)) throw NumericError("prior training: non-finite loss at step " + std::to_string(m.step));
    num::backward(loss);
    num::AdamWConfig opt{m.lr, config_.beta1, config_.beta2, 1e-8, config_.weight_decay, config_.clip};
    m.grad_norm = num::adamw_step(store, opt).grad_norm;
    return m;
}

}  // namespace flowtok::prior
