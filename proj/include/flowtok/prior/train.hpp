// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "flowtok/numerics/optim.hpp"
#include "flowtok/numerics/rng.hpp"
#include "flowtok/prior/model.hpp"

namespace flowtok::prior {

struct PriorTrainConfig {
    num::LrSchedule schedule{1e-3, 100, 2000, 1e-4};
    std::uint64_t steps = 2000;
    std::size_t batch_size = 16;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.01;
    std::optional<double> clip = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const PriorTrainConfig& c);
PriorTrainConfig prior_train_config_from_json(const nlohmann::json& j, PriorTrainConfig base = {});

struct PriorStepMetrics {
    std::uint64_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;
};

/// Mini-batches drawn by reshuffling the corpus every epoch.
class PriorTrainer {
public:
    PriorTrainer(PriorModel& model, PriorTrainConfig config, std::vector<std::vector<std::int64_t>> corpus);
    PriorStepMetrics step();

private:
    PriorModel& model_;
    PriorTrainConfig config_;
    std::vector<std::vector<std::int64_t>> corpus_;
    num::Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

}  // namespace flowtok::prior
