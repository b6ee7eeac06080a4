// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowtok/geometry/structure.hpp"
#include "flowtok/metrics/features.hpp"

namespace flowtok::metrics {

// Class holding more than `threshold` of the residues, if any.
std::optional<SsLabel> dominant_class(const std::vector<SsLabel>& labels, double threshold = 0.6);

// Mean RMSD per dominant class; classes without structures stay empty.
struct SsRmsd {
    std::optional<double> helix, strand, coil;
};
SsRmsd ss_rmsd(std::span<const double> rmsd, std::span<const std::vector<SsLabel>> labels);
SsRmsd ss_rmsd_by_class(std::span<const double> rmsd, std::span<const std::optional<SsLabel>> classes);

// TM-score of the first min(L_a, L_b) CA positions of each chain.
double truncated_tm(const BackboneStructure& a, const BackboneStructure& b);

// Mean truncated TM over pairs i < j with |L_i - L_j| <= max_length_gap.
// Empty when no pair qualifies.
struct Diversity {
    std::optional<double> value;
    std::size_t pairs = 0;
};
Diversity diversity(const std::vector<BackboneStructure>& xs, std::size_t max_length_gap = 10);

// Mean over `generated` of the best truncated TM against `reference`.
// Throws UserError for an empty reference.
double novelty(const std::vector<BackboneStructure>& generated, const std::vector<BackboneStructure>& reference);

inline constexpr std::size_t kRfpsdConvergedSamples = 5000;

struct Rfpsd {
    double value = 0.0;
    std::string extractor;
    std::optional<std::string> warning;  // set when either set has < 5000 samples
};
// Frechet distance between Gaussians fitted to the two feature sets.
Rfpsd rfpsd(const std::vector<BackboneStructure>& reference, const std::vector<BackboneStructure>& reconstructed,
            const FeatureExtractor& extractor);

}  // namespace flowtok::metrics
