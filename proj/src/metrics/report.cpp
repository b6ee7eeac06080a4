// SPDX-License-Identifier: Apache-2.0
#include "flowtok/metrics/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "flowtok/error.hpp"
#include "flowtok/geometry/geometry.hpp"
#include "flowtok/metrics/schema.hpp"

namespace flowtok::metrics {
namespace detail {
extern const char* const kReportSchemaText;
}

namespace {

using nlohmann::json;

const char* class_name(SsLabel l) {
    switch (l) {
        case SsLabel::helix: return "alpha";
        case SsLabel::strand: return "beta";
        case SsLabel::coil: return "coil";
    }
    return "coil";
}

std::optional<SsLabel> parse_class(const json& j) {
    if (j.is_null()) return std::nullopt;
    const auto s = j.get<std::string>();
    if (s == "alpha") return SsLabel::helix;
    if (s == "beta") return SsLabel::strand;
    if (s == "coil") return SsLabel::coil;
    throw UserError("report: unknown ss_class '" + s + "'");
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt_from(const json& j) {
    return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}

std::pair<std::optional<double>, std::optional<double>> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    return {m, sd};
}

std::vector<const BackboneStructure*> sorted_by_id(const std::vector<BackboneStructure>& xs) {
    std::vector<const BackboneStructure*> out;
    for (const auto& x : xs) out.push_back(&x);
    std::stable_sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->id < b->id; });
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i]->id == out[i - 1]->id) throw UserError("metrics: duplicate structure id '" + out[i]->id + "'");
    }
    return out;
}

std::vector<BackboneStructure> copies(const std::vector<const BackboneStructure*>& xs) {
    std::vector<BackboneStructure> out;
    for (auto* x : xs) out.push_back(*x);
    return out;
}

void finish_set_level(MetricsReport& r, const std::vector<BackboneStructure>& compared) {
    const Diversity d = diversity(compared);
    r.diversity = d.value;
    r.diversity_pairs = d.pairs;
    if (!d.value) r.warnings.push_back("diversity: no pair of structures within 10 residues in length");
}

}  // namespace

RowAggregates aggregate_rows(const std::vector<MetricsRow>& rows) {
    RowAggregates a;
    a.count = rows.size();
    std::vector<double> rmsd, tm;
    std::vector<std::optional<SsLabel>> classes;
    for (const auto& r : rows) {
        if (r.rmsd) {
            rmsd.push_back(*r.rmsd);
            classes.push_back(r.ss_class);
        }
        if (r.tm) tm.push_back(*r.tm);
    }
    std::tie(a.rmsd_mean, a.rmsd_std) = mean_std(rmsd);
    std::tie(a.tm_mean, a.tm_std) = mean_std(tm);
    a.ss = ss_rmsd_by_class(rmsd, classes);
    return a;
}

MetricsReport evaluate_reconstruction(const std::vector<BackboneStructure>& truth,
                                      const std::vector<BackboneStructure>& pred, const FeatureExtractor& extractor,
                                      const json& sampler) {
    const auto t = sorted_by_id(truth), p = sorted_by_id(pred);
    if (t.empty()) throw UserError("evaluate: no structures");
    if (t.size() != p.size()) {
        throw UserError("evaluate: " + std::to_string(t.size()) + " reference vs " + std::to_string(p.size()) +
                        " predicted structures");
    }
    MetricsReport r;
    r.task = "reconstruction";
    r.extractor = extractor.id();
    r.sampler = sampler;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i]->id != p[i]->id) throw UserError("evaluate: no prediction for '" + t[i]->id + "'");
        if (t[i]->length() != p[i]->length()) {
            throw UserError("evaluate: length mismatch for '" + t[i]->id + "' (" + std::to_string(t[i]->length()) +
                            " vs " + std::to_string(p[i]->length()) + ")");
        }
        const Coords ct = t[i]->ca_trace(), cp = p[i]->ca_trace();
        MetricsRow row;
        row.id = t[i]->id;
        row.length = t[i]->length();
        row.rmsd = geo::rmsd(cp, ct);
        row.tm = geo::tm_score(cp, ct);
        row.ss_class = dominant_class(geo::secondary_structure(*t[i]).labels);
        r.rows.push_back(row);
    }
    r.aggregates = aggregate_rows(r.rows);
    const auto tc = copies(t), pc = copies(p);
    if (t.size() >= 2) {
        const Rfpsd f = rfpsd(tc, pc, extractor);
        r.rfpsd = f.value;
        if (f.warning) r.warnings.push_back(*f.warning);
    } else {
        r.warnings.push_back("rfpsd: needs at least 2 structures per set");
    }
    finish_set_level(r, pc);
    return r;
}

MetricsReport evaluate_generation(const std::vector<BackboneStructure>& generated,
                                  const std::vector<BackboneStructure>& reference, const FeatureExtractor& extractor,
                                  const json& sampler) {
    const auto g = sorted_by_id(generated);
    if (g.empty()) throw UserError("evaluate: no generated structures");
    MetricsReport r;
    r.task = "generation";
    r.extractor = extractor.id();
    r.sampler = sampler;
    for (auto* x : g) {
        MetricsRow row;
        row.id = x->id;
        row.length = x->length();
        row.ss_class = dominant_class(geo::secondary_structure(*x).labels);
        r.rows.push_back(row);
    }
    r.aggregates = aggregate_rows(r.rows);
    const auto gc = copies(g);
    finish_set_level(r, gc);
    if (!reference.empty()) {
        r.novelty = novelty(gc, copies(sorted_by_id(reference)));
    } else {
        r.warnings.push_back("novelty: no reference set given");
    }
    return r;
}

json to_json(const MetricsReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"id", row.id},
                        {"length", row.length},
                        {"rmsd", opt(row.rmsd)},
                        {"tm", opt(row.tm)},
                        {"ss_class", row.ss_class ? json(class_name(*row.ss_class)) : json(nullptr)},
                        {"designability", nullptr}});
    }
    json ss = json::object();
    if (r.aggregates.ss.helix) ss["alpha"] = *r.aggregates.ss.helix;
    if (r.aggregates.ss.strand) ss["beta"] = *r.aggregates.ss.strand;
    if (r.aggregates.ss.coil) ss["coil"] = *r.aggregates.ss.coil;
    const auto& a = r.aggregates;
    return {{"kind", "flowtok-metrics-report"},
            {"version", 1},
            {"task", r.task},
            {"rows", rows},
            {"aggregates",
             {{"count", a.count},
              {"rmsd_mean", opt(a.rmsd_mean)},
              {"rmsd_std", opt(a.rmsd_std)},
              {"tm_mean", opt(a.tm_mean)},
              {"tm_std", opt(a.tm_std)},
              {"ss_rmsd", ss},
              {"rfpsd", opt(r.rfpsd)},
              {"diversity", opt(r.diversity)},
              {"diversity_pairs", r.diversity_pairs},
              {"novelty", opt(r.novelty)},
              {"designability", nullptr}}},
            {"provenance", {{"extractor", r.extractor}, {"sampler", r.sampler}}},
            {"warnings", r.warnings},
            {"unavailable", json::array({"designability"})}};
}

MetricsReport report_from_json(const json& j) {
    const auto errors = validate_schema(j, report_schema());
    if (!errors.empty()) throw UserError("report: " + errors.front());
    MetricsReport r;
    r.task = j["task"].get<std::string>();
    for (const auto& row : j["rows"]) {
        r.rows.push_back({row["id"].get<std::string>(), row["length"].get<std::size_t>(), opt_from(row["rmsd"]),
                          opt_from(row["tm"]), parse_class(row["ss_class"])});
    }
    r.aggregates = aggregate_rows(r.rows);
    const json& a = j["aggregates"];
    r.rfpsd = opt_from(a["rfpsd"]);
    r.diversity = opt_from(a["diversity"]);
    r.diversity_pairs = a["diversity_pairs"].get<std::size_t>();
    r.novelty = opt_from(a["novelty"]);
    r.extractor = j["provenance"]["extractor"].get<std::string>();
    r.sampler = j["provenance"]["sampler"];
    r.warnings = j["warnings"].get<std::vector<std::string>>();
    return r;
}

std::string to_csv(const MetricsReport& r) {
    std::ostringstream os;
    os << "id,length,rmsd,tm,ss_class,designability,extractor\n";
    auto num = [](const std::optional<double>& v) {
        if (!v) return std::string();
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", *v);
        return std::string(buf);
    };
    for (const auto& row : r.rows) {
        os << row.id << ',' << row.length << ',' << num(row.rmsd) << ',' << num(row.tm) << ','
           << (row.ss_class ? class_name(*row.ss_class) : "") << ",," << r.extractor << '\n';
    }
    return os.str();
}

const json& report_schema() {
    static const json schema = json::parse(detail::kReportSchemaText);
    return schema;
}

}  // namespace flowtok::metrics
