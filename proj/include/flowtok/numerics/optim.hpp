// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flowtok/numerics/autograd.hpp"

namespace flowtok::num {

/// Named trainable tensors plus their AdamW moment buffers and step counter.
/// Iteration order is insertion order, which keeps updates and checkpoints
/// deterministic.
class ParameterStore {
public:
    struct Entry {
        std::string name;
        Var param;
        Tensor first_moment;
        Tensor second_moment;
    };

    // Registers a parameter; the name must be unique.
    Var add(const std::string& name, Tensor init);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    Var& get(const std::string& name);
    const Var& get(const std::string& name) const;
    Entry& entry(const std::string& name);

    std::vector<Entry>& entries() noexcept { return entries_; }
    const std::vector<Entry>& entries() const noexcept { return entries_; }
    std::vector<std::string> names() const;

    std::size_t parameter_count() const;  // total scalar count
    void zero_grad();
    double grad_norm() const;             // global L2 norm over all gradient slots

    std::uint64_t step() const noexcept { return step_; }
    void set_step(std::uint64_t step);    // may only move forward
    void advance() { ++step_; }

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
    std::uint64_t step_ = 0;
};

struct AdamWConfig {
    double lr = 1.7e-4;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::optional<double> clip;  // global-norm clip, none when empty
};

struct AdamWStats {
    double grad_norm = 0.0;  // before clipping
    double clip_scale = 1.0;
};

/// Linear warmup from 0 to `lr`, cosine decay to `min_lr` at `decay_iters`,
/// constant `min_lr` afterwards.
struct LrSchedule {
    double lr = 1.7e-4;
    std::uint64_t warmup = 1000;
    std::uint64_t decay_iters = 100000;
    double min_lr = 1e-4;

    double at(std::uint64_t step) const;
    void validate() const;  // throws UserError
};

// One decoupled-weight-decay AdamW update over every parameter, then zeroes
// the gradients. Throws NumericError naming the parameter if any gradient is
// non-finite; the store is left untouched in that case.
AdamWStats adamw_step(ParameterStore& store, const AdamWConfig& config);

}  // namespace flowtok::num
