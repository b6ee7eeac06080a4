// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowtok/flowtrain/trainer.hpp"
#include "flowtok/geometry/structure.hpp"
#include "flowtok/geometry/synth.hpp"
#include "flowtok/metrics/report.hpp"
#include "flowtok/prior/model.hpp"
#include "flowtok/prior/sampling.hpp"
#include "flowtok/prior/tokens.hpp"
#include "flowtok/prior/train.hpp"
#include "flowtok/sampler/sampler.hpp"
#include "flowtok/structio/ingest.hpp"
#include "flowtok/tokenizer/model.hpp"

// Pipeline stages shared by the command-line tool and the acceptance tests.
namespace flowtok::cli {

namespace fs = std::filesystem;

struct SynthOptions {
    geo::SynthKind kind = geo::SynthKind::mixed;
    std::size_t n = 5;
    std::size_t min_length = 16;
    std::size_t max_length = 24;
    int atoms = 1;
    std::uint64_t seed = 0;
};

struct GenerateOptions {
    std::size_t n = 5;
    std::uint64_t seed = 0;
};

struct LogOptions {
    std::uint64_t every = 100;  // progress line interval; the JSONL log has every step
};

/// Fully resolved configuration of every stage. Sections mirror the JSON
/// layout: synth, ingest, tokenizer, train, prior, prior_train, sampling,
/// generate, sampler, eval, log.
struct PipelineConfig {
    std::string profile = "default";
    std::uint64_t seed = 0;
    int threads = 1;
    SynthOptions synth;
    io::IngestConfig ingest;
    tok::TokenizerConfig tokenizer;
    flow::TrainConfig train;
    prior::PriorConfig prior;
    prior::PriorTrainConfig prior_train;
    prior::SamplingConfig sampling;
    GenerateOptions generate;
    sample::SamplerConfig sampler;
    std::string extractor = "geo-v1";
    LogOptions log;
};

// Profiles: "default" (full-size model, reference schedule), "small"
// (desk-scale model, same schedule, no accumulation), "smoke" (small
// model, 5 structures, 2000 steps with a faster schedule). Section seeds are
// derived from `seed` with fixed offsets.
nlohmann::json profile_defaults(const std::string& profile, std::uint64_t seed);

// defaults(profile) < file < flags. `profile` and `seed` are read from flags,
// then the file, then default to "default" and 0. Every section rejects
// unknown keys and inconsistent settings with UserError.
PipelineConfig resolve_config(const nlohmann::json& file, const nlohmann::json& flags);
nlohmann::json to_json(const PipelineConfig& c);

nlohmann::json read_json(const fs::path& path);  // UserError naming the file
void write_json(const fs::path& path, const nlohmann::json& j);
void write_text(const fs::path& path, const std::string& text);

std::vector<BackboneStructure> synth_structures(const SynthOptions& o);
// <dir>/<id>.pdb for each structure.
void write_structures(const fs::path& dir, const std::vector<BackboneStructure>& xs);
// A directory of PDB files or a dataset manifest (.json, retained chains).
std::vector<BackboneStructure> load_structures(const fs::path& input, int atoms);

std::vector<flow::Example> to_examples(const std::vector<BackboneStructure>& xs, double coord_scale);

// Trains from scratch; writes <dir>/tokenizer.ckpt and <dir>/train_log.jsonl.
std::unique_ptr<tok::TokenizerModel> train_tokenizer(const PipelineConfig& c, const std::vector<BackboneStructure>& xs,
                                                     const fs::path& dir, std::ostream* progress);

std::vector<prior::TokenRecord> tokenize_structures(const tok::TokenizerModel& m,
                                                    const std::vector<BackboneStructure>& xs);

// Writes <dir>/prior.ckpt and <dir>/train_log.jsonl.
std::unique_ptr<prior::PriorModel> train_prior(const PipelineConfig& c, const std::vector<prior::TokenRecord>& tokens,
                                               const fs::path& dir, std::ostream* progress);

// Structure i uses sampler seed cfg.seed + i.
std::vector<BackboneStructure> reconstruct_structures(const tok::TokenizerModel& m,
                                                      const std::vector<BackboneStructure>& xs,
                                                      const sample::SamplerConfig& cfg);

struct GeneratedSet {
    std::vector<prior::TokenRecord> tokens;
    std::vector<double> log_likelihood;
    std::vector<BackboneStructure> structures;
};
// Sample i draws codes with Rng(generate.seed).fork(i) and decodes with
// sampler seed sampler.seed + i. Ids are sample_000, sample_001, ...
GeneratedSet generate_structures(const prior::PriorModel& p, const tok::TokenizerModel& m, const PipelineConfig& c);

// Sidecar describing how a structure set was sampled.
void write_sampler_sidecar(const fs::path& dir, const sample::SamplerConfig& cfg, nlohmann::json extra = {});
nlohmann::json read_sampler_sidecar(const fs::path& dir);  // null when absent

// report.json plus report.csv next to it.
void write_report(const fs::path& path, const metrics::MetricsReport& r);

// synth -> ingest -> train-tokenizer -> tokenize -> train-prior ->
// reconstruct -> eval -> sample -> eval, all under `dir`. A failing stage is
// rethrown with its name; files written so far stay in place.
void run_end_to_end(const PipelineConfig& c, const fs::path& dir, std::ostream* progress);

}  // namespace flowtok::cli
