// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "flowtok/numerics/rng.hpp"
#include "flowtok/prior/model.hpp"

namespace flowtok::prior {

struct SamplingConfig {
    double top_p = 0.9;
    std::optional<double> min_p;  // keep tokens with p >= min_p * max p
    bool greedy = false;
    std::size_t best_of = 2;
    std::optional<std::size_t> max_codes;  // defaults to the model's limit

    void validate() const;  // throws UserError
};

nlohmann::json to_json(const SamplingConfig& c);
SamplingConfig sampling_config_from_json(const nlohmann::json& j, SamplingConfig base = {});

struct Generated {
    std::vector<std::int64_t> codes;
    // Sum of model log-probabilities (full softmax) of every emitted token,
    // the closing EOS included.
    double log_likelihood = 0.0;
};

// Indices kept by min-p then nucleus truncation of `probs`, in descending
// probability order (ties: lower index first). Always at least one.
std::vector<std::size_t> truncation_set(std::span<const double> probs, double top_p, std::optional<double> min_p);

// One sequence: BOS is never emitted, EOS is suppressed before the first code
// and forced once max_codes codes exist.
Generated generate(NextTokenModel& model, const SamplingConfig& cfg, num::Rng& rng);

// Highest log-likelihood of n draws; ties keep the earliest.
Generated best_of_n(const std::function<Generated()>& draw, std::size_t n);

// best_of_n over generate() with cfg.best_of draws.
Generated sample(NextTokenModel& model, const SamplingConfig& cfg, num::Rng& rng);

}  // namespace flowtok::prior
