// SPDX-License-Identifier: Apache-2.0
#include "flowtok/metrics/metrics.hpp"

#include <algorithm>
#include <cstdlib>

#include "flowtok/error.hpp"
#include "flowtok/geometry/geometry.hpp"
#include "flowtok/metrics/stats.hpp"

namespace flowtok::metrics {

std::optional<SsLabel> dominant_class(const std::vector<SsLabel>& labels, double threshold) {
    if (labels.empty()) return std::nullopt;
    const auto f = geo::ss_fractions(labels);
    if (f.helix > threshold) return SsLabel::helix;
    if (f.strand > threshold) return SsLabel::strand;
    if (f.coil > threshold) return SsLabel::coil;
    return std::nullopt;
}

SsRmsd ss_rmsd_by_class(std::span<const double> rmsd, std::span<const std::optional<SsLabel>> classes) {
    if (rmsd.size() != classes.size()) throw UserError("ss_rmsd: rmsd and label counts differ");
    double sum[3] = {0, 0, 0};
    std::size_t count[3] = {0, 0, 0};
    for (std::size_t i = 0; i < rmsd.size(); ++i) {
        if (!classes[i]) continue;
        const int k = *classes[i] == SsLabel::helix ? 0 : *classes[i] == SsLabel::strand ? 1 : 2;
        sum[k] += rmsd[i];
        ++count[k];
    }
    auto mean = [&](int k) { return count[k] ? std::optional<double>(sum[k] / static_cast<double>(count[k])) : std::nullopt; };
    return {mean(0), mean(1), mean(2)};
}

SsRmsd ss_rmsd(std::span<const double> rmsd, std::span<const std::vector<SsLabel>> labels) {
    std::vector<std::optional<SsLabel>> classes;
    for (const auto& l : labels) classes.push_back(dominant_class(l));
    return ss_rmsd_by_class(rmsd, classes);
}

double truncated_tm(const BackboneStructure& a, const BackboneStructure& b) {
    const auto n = static_cast<Eigen::Index>(std::min(a.length(), b.length()));
    const Coords ca = a.ca_trace(), cb = b.ca_trace();
    return geo::tm_score(ca.topRows(n), cb.topRows(n));
}

Diversity diversity(const std::vector<BackboneStructure>& xs, std::size_t max_length_gap) {
    Diversity d;
    double sum = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t j = i + 1; j < xs.size(); ++j) {
            const auto li = xs[i].length(), lj = xs[j].length();
            if ((li > lj ? li - lj : lj - li) > max_length_gap) continue;
            sum += truncated_tm(xs[i], xs[j]);
            ++d.pairs;
        }
    }
    if (d.pairs) d.value = sum / static_cast<double>(d.pairs);
    return d;
}

double novelty(const std::vector<BackboneStructure>& generated, const std::vector<BackboneStructure>& reference) {
    if (reference.empty()) throw UserError("novelty: empty reference set");
    if (generated.empty()) throw UserError("novelty: empty generated set");
    double sum = 0.0;
    for (const auto& g : generated) {
        double best = 0.0;
        for (const auto& r : reference) best = std::max(best, truncated_tm(g, r));
        sum += best;
    }
    return sum / static_cast<double>(generated.size());
}

Rfpsd rfpsd(const std::vector<BackboneStructure>& reference, const std::vector<BackboneStructure>& reconstructed,
            const FeatureExtractor& extractor) {
    Rfpsd r;
    r.extractor = extractor.id();
    r.value = frechet_distance(fit_gaussian(feature_matrix(extractor, reference)),
                               fit_gaussian(feature_matrix(extractor, reconstructed)));
    const std::size_t n = std::min(reference.size(), reconstructed.size());
    if (n < kRfpsdConvergedSamples) {
        r.warning = "rfpsd computed from " + std::to_string(n) + " samples; the estimate needs about " +
                    std::to_string(kRfpsdConvergedSamples) + " to converge";
    }
    return r;
}

}  // namespace flowtok::metrics
