// SPDX-License-Identifier: Apache-2.0
#include "flowtok/numerics/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "flowtok/error.hpp"

namespace flowtok::num {

double LrSchedule::at(std::uint64_t step) const {
    if (step < warmup) return lr * static_cast<double>(step) / static_cast<double>(warmup);
    if (step >= decay_iters) return min_lr;
    const double ratio = static_cast<double>(step - warmup) / static_cast<double>(decay_iters - warmup);
    return min_lr + 0.5 * (1.0 + std::cos(M_PI * ratio)) * (lr - min_lr);
}

void LrSchedule::validate() const {
    if (!(lr > 0.0) || min_lr < 0.0 || min_lr > lr) throw UserError("lr schedule: need 0 <= min_lr <= lr, lr > 0");
    if (warmup >= decay_iters) throw UserError("lr schedule: warmup must be below decay_iters");
}

Var ParameterStore::add(const std::string& name, Tensor init) {
    if (contains(name)) throw std::invalid_argument("ParameterStore: duplicate parameter '" + name + "'");
    const Shape shape = init.shape();
    Var param(std::move(init), true);
    param.grad_buffer();
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{name, param, Tensor(shape, 0.0), Tensor(shape, 0.0)});
    return param;
}

Var& ParameterStore::get(const std::string& name) { return entry(name).param; }

const Var& ParameterStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParameterStore: no parameter '" + name + "'");
    return entries_[it->second].param;
}

ParameterStore::Entry& ParameterStore::entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParameterStore: no parameter '" + name + "'");
    return entries_[it->second];
}

std::vector<std::string> ParameterStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
}

std::size_t ParameterStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.param.size();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& e : entries_) e.param.grad_buffer().fill(0.0);
}

double ParameterStore::grad_norm() const {
    double sq = 0.0;
    for (const auto& e : entries_) {
        if (!e.param.has_grad()) continue;
        for (double g : e.param.grad().data()) sq += g * g;
    }
    return std::sqrt(sq);
}

void ParameterStore::set_step(std::uint64_t step) {
    if (step < step_) throw std::invalid_argument("ParameterStore: step counter cannot decrease");
    step_ = step;
}

AdamWStats adamw_step(ParameterStore& store, const AdamWConfig& config) {
    for (auto& e : store.entries()) {
        if (!e.param.grad_buffer().all_finite()) {
            throw NumericError("adamw_step: non-finite gradient in parameter '" + e.name + "'");
        }
    }
    AdamWStats stats;
    stats.grad_norm = store.grad_norm();
    if (config.clip && stats.grad_norm > *config.clip && stats.grad_norm > 0.0) {
        stats.clip_scale = *config.clip / stats.grad_norm;
    }

    store.advance();
    const double t = static_cast<double>(store.step());
    const double bias1 = 1.0 - std::pow(config.beta1, t);
    const double bias2 = 1.0 - std::pow(config.beta2, t);
    for (auto& e : store.entries()) {
        Tensor& p = e.param.mutable_value();
        Tensor& g = e.param.grad_buffer();
        Tensor& m = e.first_moment;
        Tensor& v = e.second_moment;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i] * stats.clip_scale;
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
            const double mhat = m[i] / bias1;
            const double vhat = v[i] / bias2;
            p[i] -= config.lr * (mhat / (std::sqrt(vhat) + config.eps) + config.weight_decay * p[i]);
        }
        g.fill(0.0);
    }
    return stats;
}

}  // namespace flowtok::num
