// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowtok/geometry/structure.hpp"

namespace flowtok::io {

struct IngestConfig {
    std::size_t max_length = 256;
    int atoms = 1;
    bool coil_filter = true;
    double max_coil_fraction = 0.70;     // reject when coil fraction > this
    bool plddt_filter = true;
    double min_mean_plddt = 80.0;        // reject when mean pLDDT < this
    double confident_plddt = 70.0;       // residue counts as confident when pLDDT > this
    double min_confident_fraction = 0.8; // reject when confident fraction < this
    std::string split = "train";
};

nlohmann::json to_json(const IngestConfig& c);
IngestConfig ingest_config_from_json(const nlohmann::json& j);

struct ManifestEntry {
    std::string id;
    std::string path;
    std::string chain;
    std::size_t length = 0;
    bool retained = false;
    std::vector<std::string> reasons;  // empty iff retained
    std::vector<std::string> warnings;
    nlohmann::json metrics = nlohmann::json::object();
};

struct DatasetManifest {
    IngestConfig config;
    std::string source_dir;              // entry paths are relative to this
    std::vector<ManifestEntry> entries;  // sorted by id
    std::vector<std::string> notes;

    std::size_t retained_count() const;
    nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& j);
};

// Filter outcome for one chain; never throws for data-dependent reasons.
ManifestEntry evaluate_chain(const BackboneStructure& x, const IngestConfig& config, const std::string& path = {});

// Evaluates every chain; entries sorted by id.
DatasetManifest ingest_filter(const std::vector<BackboneStructure>& structures, const IngestConfig& config);

// Parses every *.pdb under `dir` (sorted), filters, and records parse-level
// rejections (gaps, unreadable files) alongside filter outcomes.
DatasetManifest ingest_directory(const std::filesystem::path& dir, const IngestConfig& config);

// On disk, source_dir is relative to the manifest's directory; in memory it is absolute.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Re-reads the retained chains listed in a manifest, in manifest order.
std::vector<BackboneStructure> load_retained(const DatasetManifest& m);

// Every chain of every *.pdb under `dir`, sorted by id (no filtering).
std::vector<BackboneStructure> load_directory(const std::filesystem::path& dir, int atoms = 1, bool read_plddt = false);

}  // namespace flowtok::io
