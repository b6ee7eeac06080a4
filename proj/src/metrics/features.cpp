// SPDX-License-Identifier: Apache-2.0
#include "flowtok/metrics/features.hpp"

#include <cmath>

#include "flowtok/error.hpp"
#include "flowtok/geometry/geometry.hpp"

namespace flowtok::metrics {

Eigen::VectorXd GeoV1Extractor::features(const BackboneStructure& x) const {
    const std::size_t n = x.length();
    if (n < 2) throw UserError("geo-v1: structure " + x.id + " has fewer than 2 residues");
    const Coords ca = x.ca_trace();
    Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dims()));
    const double lo = std::log(3.5), hi = std::log(80.0);
    const double step = (hi - lo) / static_cast<double>(kBins - 1);
    for (Eigen::Index i = 0; i < ca.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < ca.rows(); ++j) {
            const double d = std::max((ca.row(i) - ca.row(j)).norm(), 1e-6);
            const double u = std::clamp((std::log(d) - lo) / step, 0.0, static_cast<double>(kBins - 1));
            const auto k = std::min(static_cast<std::size_t>(u), kBins - 2);
            const double w = u - static_cast<double>(k);
            f[static_cast<Eigen::Index>(k)] += 1.0 - w;
            f[static_cast<Eigen::Index>(k + 1)] += w;
        }
    }
    f.head(kBins) /= static_cast<double>(n * (n - 1) / 2);
    f[kBins] = geo::radius_of_gyration(ca) / 10.0;
    const auto ss = geo::ss_fractions(geo::secondary_structure(x).labels);
    f[kBins + 1] = ss.helix;
    f[kBins + 2] = ss.strand;
    f[kBins + 3] = ss.coil;
    return f;
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& id) {
    if (id == "geo-v1") return std::make_unique<GeoV1Extractor>();
    throw UserError("unknown feature extractor '" + id + "' (available: geo-v1)");
}

Eigen::MatrixXd feature_matrix(const FeatureExtractor& f, const std::vector<BackboneStructure>& xs) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(f.dims()));
    for (std::size_t i = 0; i < xs.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = f.features(xs[i]).transpose();
    return m;
}

}  // namespace flowtok::metrics
