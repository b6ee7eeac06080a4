// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <vector>

#include "flowtok/geometry/structure.hpp"

namespace flowtok::metrics {

/// Deterministic fixed-length descriptor of a structure, used for rFPSD.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::string id() const = 0;
    virtual std::size_t dims() const = 0;
    virtual Eigen::VectorXd features(const BackboneStructure& x) const = 0;
};

/// "geo-v1": rigid-invariant geometric descriptor.
///   [0, 16)  CA pair-distance histogram over log-spaced centres 3.5..80 A,
///            linear weights between neighbouring centres, normalised by
///            the pair count
///   16       radius of gyration / 10 A
///   17..19   helix / strand / coil fractions
class GeoV1Extractor : public FeatureExtractor {
public:
    static constexpr std::size_t kBins = 16;
    std::string id() const override { return "geo-v1"; }
    std::size_t dims() const override { return kBins + 4; }
    Eigen::VectorXd features(const BackboneStructure& x) const override;  // throws UserError for L < 2
};

// Extractor by id; throws UserError for unknown ids.
std::unique_ptr<FeatureExtractor> make_extractor(const std::string& id);

// n x d feature matrix, one row per structure.
Eigen::MatrixXd feature_matrix(const FeatureExtractor& f, const std::vector<BackboneStructure>& xs);

}  // namespace flowtok::metrics
