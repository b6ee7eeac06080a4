// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <Eigen/QR>
#include <cmath>

#include "flowtok/error.hpp"
#include "flowtok/geometry/geometry.hpp"
#include "flowtok/geometry/synth.hpp"
#include "flowtok/metrics/features.hpp"
#include "flowtok/metrics/metrics.hpp"
#include "flowtok/metrics/report.hpp"
#include "flowtok/metrics/schema.hpp"
#include "flowtok/metrics/stats.hpp"

namespace flowtok::metrics {
namespace {

std::vector<SsLabel> labels(std::size_t h, std::size_t e, std::size_t c) {
    std::vector<SsLabel> out(h, SsLabel::helix);
    out.insert(out.end(), e, SsLabel::strand);
    out.insert(out.end(), c, SsLabel::coil);
    return out;
}

std::vector<BackboneStructure> family(geo::SynthKind kind, std::size_t n, std::size_t length, std::uint64_t seed,
                                      const std::string& prefix) {
    num::Rng rng(seed);
    std::vector<BackboneStructure> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(geo::synth_backbone(kind, length + i % 5, rng, prefix + std::to_string(i)));
    }
    return out;
}

BackboneStructure rigid(const BackboneStructure& x, num::Rng& rng) {
    return geo::transform(x, geo::sample_rotation(rng), Eigen::Vector3d(rng.normal() * 10, rng.normal() * 10, rng.normal()));
}

GaussianStats random_stats(num::Rng& rng, int d, std::size_t n = 40) {
    Eigen::MatrixXd f(static_cast<Eigen::Index>(n), d);
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
        for (int j = 0; j < d; ++j) f(i, j) = rng.normal() * (1.0 + j) + j;
    }
    return fit_gaussian(f);
}

// --- secondary-structure RMSD ---------------------------------------------------------

TEST(SsRmsd, DominantClassThreshold) {
    EXPECT_EQ(dominant_class(labels(10, 0, 0)), SsLabel::helix);
    EXPECT_EQ(dominant_class(labels(0, 59, 41)), std::nullopt);
    EXPECT_EQ(dominant_class(labels(0, 61, 39)), SsLabel::strand);
    EXPECT_EQ(dominant_class(labels(6, 4, 0)), std::nullopt);  // exactly 60 % is not more than 60 %
    EXPECT_EQ(dominant_class(labels(0, 3, 7)), SsLabel::coil);
    EXPECT_EQ(dominant_class({}), std::nullopt);
}

TEST(SsRmsd, ConstructedMixedCorpus) {
    const std::vector<std::vector<SsLabel>> l{labels(7, 0, 3), labels(0, 7, 3), labels(5, 5, 0)};
    const std::vector<double> r{1.0, 2.0, 4.0};
    const SsRmsd s = ss_rmsd(r, l);
    EXPECT_EQ(s.helix, 1.0);
    EXPECT_EQ(s.strand, 2.0);
    EXPECT_EQ(s.coil, std::nullopt);
    const std::vector<std::vector<SsLabel>> all_helix{labels(9, 1, 0), labels(8, 0, 2)};
    const SsRmsd h = ss_rmsd(std::vector<double>{1.0, 3.0}, all_helix);
    EXPECT_EQ(h.helix, 2.0);
    EXPECT_FALSE(h.strand.has_value());
    EXPECT_FALSE(h.coil.has_value());
}

// --- Gaussian fit ---------------------------------------------------------------------

TEST(Gaussian, HandComputedCases) {
    Eigen::MatrixXd two(2, 1);
    two << 0, 2;
    const GaussianStats g = fit_gaussian(two);
    EXPECT_EQ(g.mean[0], 1.0);
    EXPECT_EQ(g.cov(0, 0), 2.0);
    EXPECT_EQ(g.n, 2u);
    Eigen::MatrixXd same(5, 3);
    same.rowwise() = Eigen::RowVector3d(1.5, -2.0, 7.0);
    EXPECT_EQ(fit_gaussian(same).cov, Eigen::MatrixXd::Zero(3, 3));
    EXPECT_THROW(fit_gaussian(Eigen::MatrixXd(1, 3)), UserError);
}

TEST(Gaussian, MatchesStreamingOracle) {
    num::Rng rng(3);
    Eigen::MatrixXd f(200, 4);
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
        for (int j = 0; j < 4; ++j) f(i, j) = 100.0 + rng.normal() * (j + 1);
    }
    // Welford's streaming update.
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
    Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(4, 4);
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
        const Eigen::VectorXd x = f.row(i).transpose();
        const Eigen::VectorXd d = x - mean;
        mean += d / static_cast<double>(i + 1);
        m2 += d * (x - mean).transpose();
    }
    const GaussianStats g = fit_gaussian(f);
    EXPECT_LT((g.mean - mean).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((g.cov - m2 / 199.0).cwiseAbs().maxCoeff(), 1e-10);
}

// --- Frechet distance -------------------------------------------------------------------

TEST(Frechet, OracleCases) {
    num::Rng rng(4);
    const GaussianStats a = random_stats(rng, 5);
    EXPECT_NEAR(frechet_distance(a, a), 0.0, 1e-8);
    GaussianStats shifted = a;
    Eigen::VectorXd v(5);
    v << 1.0, -2.0, 0.5, 3.0, 0.25;
    shifted.mean += v;
    EXPECT_NEAR(frechet_distance(a, shifted), v.squaredNorm(), 1e-10);
    GaussianStats x{Eigen::VectorXd::Constant(1, 0.0), Eigen::MatrixXd::Constant(1, 1, 1.0), 2};
    GaussianStats y{Eigen::VectorXd::Constant(1, 3.0), Eigen::MatrixXd::Constant(1, 1, 4.0), 2};
    EXPECT_EQ(frechet_distance(x, y), 10.0);
}

TEST(Frechet, SymmetryAndBasisInvariance) {
    num::Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const GaussianStats a = random_stats(rng, 6), b = random_stats(rng, 6);
        const double d = frechet_distance(a, b);
        EXPECT_GT(d, 0.0);
        EXPECT_NEAR(d, frechet_distance(b, a), 1e-8);
        Eigen::MatrixXd m(6, 6);
        for (int i = 0; i < 36; ++i) m.data()[i] = rng.normal();
        const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();
        GaussianStats qa = a, qb = b;
        qa.mean = q * a.mean;
        qa.cov = q * a.cov * q.transpose();
        qb.mean = q * b.mean;
        qb.cov = q * b.cov * q.transpose();
        EXPECT_NEAR(frechet_distance(qa, qb), d, 1e-8);
    }
}

TEST(Frechet, SingularAndInvalidCovariances) {
    // Rank-deficient covariances still give a clean zero.
    Eigen::MatrixXd f(3, 4);
    f << 1, 2, 3, 4, 2, 4, 6, 8, 0, 1, 0, 1;
    const GaussianStats s = fit_gaussian(f);
    EXPECT_NEAR(frechet_distance(s, s), 0.0, 1e-8);
    GaussianStats bad = s;
    bad.cov(0, 0) = -1.0;
    EXPECT_THROW(frechet_distance(bad, s), NumericError);
    num::Rng rng(6);
    EXPECT_THROW(frechet_distance(random_stats(rng, 2), random_stats(rng, 3)), UserError);
    const Eigen::MatrixXd r = psd_sqrt(s.cov);
    EXPECT_LT((r * r - s.cov).cwiseAbs().maxCoeff(), 1e-10);
}

// --- features and rFPSD -------------------------------------------------------------------

TEST(Features, GeoV1IsRigidInvariant) {
    const GeoV1Extractor f;
    EXPECT_EQ(f.id(), "geo-v1");
    EXPECT_EQ(f.dims(), 20u);
    num::Rng rng(7);
    for (auto kind : {geo::SynthKind::helix, geo::SynthKind::sheet, geo::SynthKind::mixed}) {
        auto x = geo::synth_backbone(kind, 40, rng, "x");
        x.ss_labels.reset();  // exercise the computed assignment
        const Eigen::VectorXd a = f.features(x);
        EXPECT_NEAR(a.head(GeoV1Extractor::kBins).sum(), 1.0, 1e-12);
        EXPECT_NEAR(a.tail(3).sum(), 1.0, 1e-12);
        for (int t = 0; t < 20; ++t) EXPECT_LT((f.features(rigid(x, rng)) - a).cwiseAbs().maxCoeff(), 1e-9);
    }
    EXPECT_GT(f.features(geo::synth_backbone(geo::SynthKind::helix, 40, rng, "h"))[17], 0.9);
    EXPECT_THROW(f.features(make_ca_structure("one", Coords::Zero(1, 3))), UserError);
    EXPECT_THROW(make_extractor("gearnet"), UserError);
    EXPECT_EQ(make_extractor("geo-v1")->id(), "geo-v1");
}

TEST(Rfpsd, IdentityRigidAndSeparation) {
    const GeoV1Extractor f;
    const auto helices = family(geo::SynthKind::helix, 12, 30, 8, "h");
    const Rfpsd same = rfpsd(helices, helices, f);
    EXPECT_NEAR(same.value, 0.0, 1e-8);
    EXPECT_EQ(same.extractor, "geo-v1");
    ASSERT_TRUE(same.warning.has_value());
    num::Rng rng(9);
    std::vector<BackboneStructure> moved;
    for (const auto& x : helices) moved.push_back(rigid(x, rng));
    EXPECT_LT(rfpsd(helices, moved, f).value, 1e-6);
    const auto helices2 = family(geo::SynthKind::helix, 12, 30, 10, "g");
    const auto sheets = family(geo::SynthKind::sheet, 12, 30, 11, "s");
    const double within = rfpsd(helices, helices2, f).value;
    const double across = rfpsd(helices, sheets, f).value;
    EXPECT_GT(across, 0.0);
    EXPECT_GT(across, within);
    EXPECT_THROW(rfpsd({helices[0]}, helices, f), UserError);
}

// --- diversity and novelty ------------------------------------------------------------------

TEST(Diversity, OracleCases) {
    num::Rng rng(12);
    const auto x = geo::synth_backbone(geo::SynthKind::mixed, 30, rng, "a");
    std::vector<BackboneStructure> same(4, x);
    const Diversity d = diversity(same);
    EXPECT_NEAR(*d.value, 1.0, 1e-12);
    EXPECT_EQ(d.pairs, 6u);
    const std::vector<BackboneStructure> gap{geo::synth_backbone(geo::SynthKind::helix, 20, rng, "p"),
                                             geo::synth_backbone(geo::SynthKind::helix, 31, rng, "q")};
    EXPECT_FALSE(diversity(gap).value.has_value());
    const std::vector<BackboneStructure> three{geo::synth_backbone(geo::SynthKind::helix, 50, rng, "a"),
                                               geo::synth_backbone(geo::SynthKind::helix, 55, rng, "b"),
                                               geo::synth_backbone(geo::SynthKind::helix, 70, rng, "c")};
    const Diversity d3 = diversity(three);
    EXPECT_EQ(d3.pairs, 1u);
    EXPECT_NEAR(*d3.value, truncated_tm(three[0], three[1]), 1e-15);
}

TEST(Diversity, PairCountMatchesBruteForce) {
    num::Rng rng(13);
    std::vector<BackboneStructure> xs;
    for (int i = 0; i < 9; ++i) {
        xs.push_back(geo::synth_backbone(geo::SynthKind::mixed, 10 + rng.below(25), rng, std::to_string(i)));
    }
    std::size_t pairs = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t j = 0; j < xs.size(); ++j) {
            if (i < j && std::abs(static_cast<long>(xs[i].length()) - static_cast<long>(xs[j].length())) <= 10) {
                ++pairs;
                sum += truncated_tm(xs[i], xs[j]);
            }
        }
    }
    const Diversity d = diversity(xs);
    EXPECT_EQ(d.pairs, pairs);
    EXPECT_EQ(*d.value, sum / static_cast<double>(pairs));
}

TEST(Novelty, OracleCases) {
    const auto ref = family(geo::SynthKind::mixed, 6, 24, 14, "r");
    const std::vector<BackboneStructure> subset(ref.begin(), ref.begin() + 3);
    EXPECT_NEAR(novelty(subset, ref), 1.0, 1e-12);
    const auto gen = family(geo::SynthKind::helix, 4, 26, 15, "g");
    double single = 0.0;
    for (const auto& g : gen) single += truncated_tm(g, ref[2]);
    EXPECT_EQ(novelty(gen, {ref[2]}), single / 4.0);
    double brute = 0.0;
    for (const auto& g : gen) {
        double best = 0.0;
        for (const auto& r : ref) best = std::max(best, truncated_tm(g, r));
        brute += best;
    }
    EXPECT_EQ(novelty(gen, ref), brute / 4.0);
    EXPECT_THROW(novelty(gen, {}), UserError);
}

// --- reports --------------------------------------------------------------------------------

TEST(Report, ReconstructionReportIsConsistent) {
    const auto truth = family(geo::SynthKind::mixed, 6, 24, 16, "t");
    std::vector<BackboneStructure> pred;
    num::Rng rng(17);
    for (auto x : truth) {
        for (Eigen::Index i = 0; i < x.coords.size(); ++i) x.coords.data()[i] += 0.3 * rng.normal();
        pred.push_back(rigid(x, rng));
    }
    std::reverse(pred.begin(), pred.end());
    const auto ex = make_extractor("geo-v1");
    const MetricsReport r = evaluate_reconstruction(truth, pred, *ex, nlohmann::json{{"steps", 100}});
    ASSERT_EQ(r.rows.size(), 6u);
    for (std::size_t i = 1; i < r.rows.size(); ++i) EXPECT_LT(r.rows[i - 1].id, r.rows[i].id);
    for (const auto& row : r.rows) {
        EXPECT_GT(*row.rmsd, 0.1);
        EXPECT_LT(*row.rmsd, 1.0);
        EXPECT_GT(*row.tm, 0.5);
    }
    ASSERT_TRUE(r.rfpsd.has_value());
    EXPECT_FALSE(r.warnings.empty());
    const auto j = to_json(r);
    EXPECT_TRUE(validate_schema(j, report_schema()).empty());
    EXPECT_EQ(j["provenance"]["extractor"], "geo-v1");
    EXPECT_EQ(j["unavailable"][0], "designability");
    EXPECT_TRUE(j["aggregates"]["designability"].is_null());
    // Aggregates are recomputed from the persisted rows.
    const MetricsReport back = report_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(to_json(back), j);
    const std::string csv = to_csv(r);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
    EXPECT_NE(csv.find("geo-v1"), std::string::npos);
}

TEST(Report, RejectsMismatchedSets) {
    const auto truth = family(geo::SynthKind::helix, 3, 20, 18, "t");
    const auto ex = make_extractor("geo-v1");
    auto other = truth;
    other[1].id = "zz";
    EXPECT_THROW(evaluate_reconstruction(truth, other, *ex), UserError);
    auto shorter = truth;
    shorter.pop_back();
    EXPECT_THROW(evaluate_reconstruction(truth, shorter, *ex), UserError);
    auto dup = truth;
    dup[1].id = dup[0].id;
    EXPECT_THROW(evaluate_reconstruction(dup, dup, *ex), UserError);
    auto longer = truth;
    longer[0] = family(geo::SynthKind::helix, 1, 40, 19, "t")[0];
    longer[0].id = truth[0].id;
    EXPECT_THROW(evaluate_reconstruction(truth, longer, *ex), UserError);
}

TEST(Report, GenerationReport) {
    const auto gen = family(geo::SynthKind::helix, 5, 30, 20, "g");
    const auto ref = family(geo::SynthKind::mixed, 4, 30, 21, "r");
    const auto ex = make_extractor("geo-v1");
    const MetricsReport r = evaluate_generation(gen, ref, *ex);
    EXPECT_EQ(r.task, "generation");
    EXPECT_TRUE(r.novelty.has_value());
    EXPECT_EQ(r.diversity_pairs, 10u);
    EXPECT_FALSE(r.aggregates.rmsd_mean.has_value());
    EXPECT_TRUE(validate_schema(to_json(r), report_schema()).empty());
    EXPECT_FALSE(evaluate_generation(gen, {}, *ex).novelty.has_value());
}

TEST(Schema, ValidatorReportsViolations) {
    const auto gen = family(geo::SynthKind::helix, 3, 30, 22, "g");
    auto j = to_json(evaluate_generation(gen, {}, *make_extractor("geo-v1")));
    auto missing = j;
    missing["aggregates"].erase("rfpsd");
    EXPECT_FALSE(validate_schema(missing, report_schema()).empty());
    auto wrong = j;
    wrong["rows"][0]["length"] = "thirty";
    const auto errs = validate_schema(wrong, report_schema());
    ASSERT_FALSE(errs.empty());
    EXPECT_NE(errs[0].find("/rows/0/length"), std::string::npos) << errs[0];
    auto extra = j;
    extra["score"] = 1;
    EXPECT_FALSE(validate_schema(extra, report_schema()).empty());
    auto bad_enum = j;
    bad_enum["task"] = "design";
    EXPECT_FALSE(validate_schema(bad_enum, report_schema()).empty());
    auto range = j;
    range["aggregates"]["diversity"] = 1.5;
    EXPECT_FALSE(validate_schema(range, report_schema()).empty());
    EXPECT_THROW(report_from_json(bad_enum), UserError);
    EXPECT_TRUE(validate_schema(3, nlohmann::json{{"anyOf", {{{"type", "string"}}, {{"type", "integer"}}}}}).empty());
}

}  // namespace
}  // namespace flowtok::metrics
