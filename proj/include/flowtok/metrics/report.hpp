// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowtok/geometry/structure.hpp"
#include "flowtok/metrics/features.hpp"
#include "flowtok/metrics/metrics.hpp"

namespace flowtok::metrics {

struct MetricsRow {
    std::string id;
    std::size_t length = 0;
    std::optional<double> rmsd;  // reconstruction only
    std::optional<double> tm;
    std::optional<SsLabel> ss_class;  // dominant class (> 60 %) of the reference
};

// Aggregates recomputable from rows alone.
struct RowAggregates {
    std::size_t count = 0;
    std::optional<double> rmsd_mean, rmsd_std, tm_mean, tm_std;  // std uses n - 1; 0 for one row
    SsRmsd ss;
};
RowAggregates aggregate_rows(const std::vector<MetricsRow>& rows);

/// Per-structure rows plus set-level metrics and provenance. Designability
/// needs external models and is always reported as unavailable.
struct MetricsReport {
    std::string task;  // "reconstruction" or "generation"
    std::vector<MetricsRow> rows;  // sorted by id
    RowAggregates aggregates;
    std::optional<double> rfpsd;
    std::optional<double> diversity;
    std::size_t diversity_pairs = 0;
    std::optional<double> novelty;
    std::string extractor;
    nlohmann::json sampler;  // settings used to produce the compared set, or null
    std::vector<std::string> warnings;
};

// Pairs truth and pred by id (both must hold the same ids and lengths;
// UserError otherwise) and fills rows, aggregates, rFPSD and diversity of
// the predictions.
MetricsReport evaluate_reconstruction(const std::vector<BackboneStructure>& truth,
                                      const std::vector<BackboneStructure>& pred, const FeatureExtractor& extractor,
                                      const nlohmann::json& sampler = nullptr);

// Rows carry length and class only; diversity of `generated`, novelty
// against `reference` when it is non-empty.
MetricsReport evaluate_generation(const std::vector<BackboneStructure>& generated,
                                  const std::vector<BackboneStructure>& reference, const FeatureExtractor& extractor,
                                  const nlohmann::json& sampler = nullptr);

nlohmann::json to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);  // throws UserError
std::string to_csv(const MetricsReport& r);

// Published schema for report documents.
const nlohmann::json& report_schema();

}  // namespace flowtok::metrics
