// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowtok/flowtrain/flow.hpp"
#include "flowtok/numerics/optim.hpp"
#include "flowtok/prior/model.hpp"
#include "flowtok/tokenizer/model.hpp"

namespace flowtok::flow {

struct TrainConfig {
    num::LrSchedule schedule;  // 1.7e-4, warmup 1000, decay 100000, floor 1e-4
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.01;
    std::optional<double> clip = 1.0;
    std::size_t micro_batch = 32;  // augmented views of one protein
    std::size_t accum_steps = 8;
    double cond_mask_prob = 0.1;
    double gpt_reg_weight = 0.0;
    double self_cond_prob = 0.5;   // only with a self-conditioning model
    bool augment_rotations = true;
    std::uint64_t steps = 2000;
    std::uint64_t seed = 0;

    void validate() const;  // throws UserError
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

// Learning rate of the schedule at `step`.
double lr_at(std::uint64_t step, const TrainConfig& c);

struct StepMetrics {
    std::uint64_t step = 0;     // optimizer steps completed before this one
    double loss = 0.0;          // total, averaged over micro-steps
    double flow_loss = 0.0;
    double reg_loss = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;     // tokenizer parameters, before clipping
    double codebook_usage = 0.0;  // distinct codes in this step / codebook size
    std::size_t codes_seen = 0;   // distinct codes since training began
    double null_fraction = 0.0;
};

nlohmann::json to_json(const StepMetrics& m);

// Training example: CA-centred coordinates in model units, [L, A, 3].
struct Example {
    std::string id;
    Tensor x;
};

/// One optimizer step = accum_steps micro-steps; each micro-step takes the
/// next protein of a per-epoch shuffle and builds micro_batch independently
/// rotated views of it.
class TokenizerTrainer {
public:
    TokenizerTrainer(tok::TokenizerModel& model, TrainConfig config, std::vector<Example> corpus,
                     prior::PriorModel* regularizer = nullptr);

    StepMetrics step();
    const TrainConfig& config() const noexcept { return config_; }
    const std::set<std::int64_t>& codes_seen() const noexcept { return seen_; }

    // [micro_batch, L, A, 3] randomly rotated copies of corpus[index].
    Tensor augmented_views(std::size_t index);

private:
    std::size_t next_index();

    tok::TokenizerModel& model_;
    TrainConfig config_;
    std::vector<Example> corpus_;
    prior::PriorModel* regularizer_;
    num::Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::set<std::int64_t> seen_;
};

// Codes of every residue, corpus in order, without noise or dropout.
std::vector<std::vector<std::int64_t>> tokenize(const tok::TokenizerModel& model, const std::vector<Example>& corpus);

// Cumulative count of distinct codes after each structure of a scan.
std::vector<std::size_t> codebook_scan(const std::vector<std::vector<std::int64_t>>& codes);

// Prior sized as the optional regularizer for `model`.
prior::PriorConfig regularizer_config(const tok::TokenizerConfig& model, std::uint64_t seed);

}  // namespace flowtok::flow
