// SPDX-License-Identifier: Apache-2.0
#include "flowtok/structio/ingest.hpp"

#include <algorithm>
#include <fstream>

#include "flowtok/error.hpp"
#include "flowtok/geometry/geometry.hpp"
#include "flowtok/structio/pdb.hpp"

namespace flowtok::io {

using nlohmann::json;

json to_json(const IngestConfig& c) {
    return {{"max_length", c.max_length},
            {"atoms", c.atoms},
            {"coil_filter", c.coil_filter},
            {"max_coil_fraction", c.max_coil_fraction},
            {"plddt_filter", c.plddt_filter},
            {"min_mean_plddt", c.min_mean_plddt},
            {"confident_plddt", c.confident_plddt},
            {"min_confident_fraction", c.min_confident_fraction},
            {"split", c.split}};
}

IngestConfig ingest_config_from_json(const json& j) {
    IngestConfig c;
    c.max_length = j.value("max_length", c.max_length);
    c.atoms = j.value("atoms", c.atoms);
    c.coil_filter = j.value("coil_filter", c.coil_filter);
    c.max_coil_fraction = j.value("max_coil_fraction", c.max_coil_fraction);
    c.plddt_filter = j.value("plddt_filter", c.plddt_filter);
    c.min_mean_plddt = j.value("min_mean_plddt", c.min_mean_plddt);
    c.confident_plddt = j.value("confident_plddt", c.confident_plddt);
    c.min_confident_fraction = j.value("min_confident_fraction", c.min_confident_fraction);
    c.split = j.value("split", c.split);
    return c;
}

std::size_t DatasetManifest::retained_count() const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](auto& e) { return e.retained; }));
}

json DatasetManifest::to_json() const {
    json entries_json = json::array();
    for (const auto& e : entries) {
        entries_json.push_back({{"id", e.id},
                                {"path", e.path},
                                {"chain", e.chain},
                                {"length", e.length},
                                {"retained", e.retained},
                                {"reasons", e.reasons},
                                {"warnings", e.warnings},
                                {"metrics", e.metrics}});
    }
    return {{"format", "flowtok-manifest"},
            {"version", 1},
            {"split", config.split},
            {"config", io::to_json(config)},
            {"source_dir", source_dir},
            {"notes", notes},
            {"retained", retained_count()},
            {"entries", entries_json}};
}

DatasetManifest DatasetManifest::from_json(const json& j) {
    if (j.value("format", "") != "flowtok-manifest") throw UserError("not a dataset manifest");
    DatasetManifest m;
    m.config = ingest_config_from_json(j.at("config"));
    m.notes = j.value("notes", std::vector<std::string>{});
    m.source_dir = j.value("source_dir", "");
    for (const auto& e : j.at("entries")) {
        ManifestEntry me;
        me.id = e.at("id");
        me.path = e.value("path", "");
        me.chain = e.value("chain", "");
        me.length = e.value("length", std::size_t{0});
        me.retained = e.at("retained");
        me.reasons = e.value("reasons", std::vector<std::string>{});
        me.warnings = e.value("warnings", std::vector<std::string>{});
        me.metrics = e.value("metrics", json::object());
        m.entries.push_back(std::move(me));
    }
    return m;
}

ManifestEntry evaluate_chain(const BackboneStructure& x, const IngestConfig& config, const std::string& path) {
    ManifestEntry e;
    e.id = x.id;
    e.path = path;
    e.chain = x.chain_id;
    e.length = x.length();
    if (e.length > config.max_length) e.reasons.push_back("length");

    if (config.coil_filter) {
        const auto ss = geo::secondary_structure(x);
        const double coil = geo::ss_fractions(ss.labels).coil;
        e.metrics["coil_fraction"] = coil;
        e.metrics["ss_source"] = ss.source == geo::SsSource::file ? "file" : "computed";
        if (coil > config.max_coil_fraction) e.reasons.push_back("coil_fraction");
    }
    if (config.plddt_filter) {
        if (!x.plddt) {
            e.warnings.push_back("plddt_absent: pLDDT filters skipped");
        } else {
            const auto& p = *x.plddt;
            double sum = 0.0;
            std::size_t confident = 0;
            for (double v : p) {
                sum += v;
                confident += v > config.confident_plddt;
            }
            const double mean = sum / static_cast<double>(p.size());
            const double frac = static_cast<double>(confident) / static_cast<double>(p.size());
            e.metrics["mean_plddt"] = mean;
            e.metrics["confident_fraction"] = frac;
            if (mean < config.min_mean_plddt) e.reasons.push_back("mean_plddt");
            if (frac < config.min_confident_fraction) e.reasons.push_back("plddt_fraction");
        }
    }
    e.retained = e.reasons.empty();
    return e;
}

namespace {

void sort_entries(std::vector<ManifestEntry>& entries) {
    std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
}

std::vector<std::filesystem::path> pdb_files(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw UserError("not a directory: '" + dir.string() + "'");
    std::vector<std::filesystem::path> files;
    for (const auto& f : std::filesystem::directory_iterator(dir)) {
        if (f.is_regular_file() && f.path().extension() == ".pdb") files.push_back(f.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace

DatasetManifest ingest_filter(const std::vector<BackboneStructure>& structures, const IngestConfig& config) {
    DatasetManifest m;
    m.config = config;
    for (const auto& s : structures) m.entries.push_back(evaluate_chain(s, config));
    sort_entries(m.entries);
    return m;
}

DatasetManifest ingest_directory(const std::filesystem::path& dir, const IngestConfig& config) {
    DatasetManifest m;
    m.config = config;
    m.source_dir = std::filesystem::absolute(dir).lexically_normal().string();
    m.notes.push_back("coil fraction uses file HELIX/SHEET labels when present, else the CA-geometry assigner");
    for (const auto& file : pdb_files(dir)) {
        const std::string rel = file.filename().string();
        PdbReadOptions opt;
        opt.atoms = config.atoms;
        opt.read_plddt = config.plddt_filter;
        PdbReadResult r;
        try {
            r = read_pdb_file(file, opt);
        } catch (const UserError& err) {
            ManifestEntry e;
            e.id = file.stem().string();
            e.path = rel;
            e.reasons = {"parse_error"};
            // Name the file relative to the source directory so manifests are location independent.
            std::string msg = err.what();
            if (msg.rfind(file.string(), 0) == 0) msg = rel + msg.substr(file.string().size());
            e.warnings = {msg};
            m.entries.push_back(std::move(e));
            continue;
        }
        for (const auto& s : r.chains) {
            ManifestEntry e = evaluate_chain(s, config, rel);
            for (const auto& issue : r.issues) {
                if (issue.id == s.id) e.warnings.push_back(issue.kind + ": " + issue.detail);
            }
            m.entries.push_back(std::move(e));
        }
        for (const auto& id : r.rejected_chains) {
            ManifestEntry e;
            e.id = id;
            e.path = rel;
            for (const auto& issue : r.issues) {
                if (issue.id != id) continue;
                e.chain = issue.chain;
                if (std::find(e.reasons.begin(), e.reasons.end(), issue.kind) == e.reasons.end())
                    e.reasons.push_back(issue.kind);
                e.warnings.push_back(issue.kind + ": " + issue.detail);
            }
            if (e.reasons.empty()) e.reasons.push_back("parse_error");
            m.entries.push_back(std::move(e));
        }
    }
    sort_entries(m.entries);
    return m;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UserError("cannot write manifest '" + path.string() + "'");
    // Store the source directory relative to the manifest so the pair can move together.
    json j = m.to_json();
    if (!m.source_dir.empty()) {
        const auto base = std::filesystem::absolute(path).parent_path();
        const auto rel = std::filesystem::absolute(m.source_dir).lexically_normal().lexically_relative(base);
        if (!rel.empty()) j["source_dir"] = rel.generic_string();
    }
    out << j.dump(2) << '\n';
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UserError("cannot open manifest '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw UserError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
    }
    DatasetManifest m = DatasetManifest::from_json(j);
    if (!m.source_dir.empty() && std::filesystem::path(m.source_dir).is_relative()) {
        auto dir = (std::filesystem::absolute(path).parent_path() / m.source_dir).lexically_normal();
        if (!dir.has_filename()) dir = dir.parent_path();  // "." normalises to a trailing separator
        m.source_dir = dir.string();
    }
    return m;
}

std::vector<BackboneStructure> load_retained(const DatasetManifest& m) {
    std::vector<BackboneStructure> out;
    const std::filesystem::path base = m.source_dir;
    for (const auto& e : m.entries) {
        if (!e.retained) continue;
        PdbReadOptions opt;
        opt.atoms = m.config.atoms;
        opt.read_plddt = m.config.plddt_filter;
        const auto r = read_pdb_file(base / e.path, opt);
        auto it = std::find_if(r.chains.begin(), r.chains.end(), [&](auto& s) { return s.id == e.id; });
        if (it == r.chains.end()) throw UserError("manifest entry '" + e.id + "' not found in " + e.path);
        out.push_back(*it);
    }
    return out;
}

std::vector<BackboneStructure> load_directory(const std::filesystem::path& dir, int atoms, bool read_plddt) {
    std::vector<BackboneStructure> out;
    for (const auto& file : pdb_files(dir)) {
        PdbReadOptions opt;
        opt.atoms = atoms;
        opt.read_plddt = read_plddt;
        auto r = read_pdb_file(file, opt);
        for (auto& s : r.chains) out.push_back(std::move(s));
    }
    std::stable_sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.id < b.id; });
    return out;
}

}  // namespace flowtok::io
