// SPDX-License-Identifier: Apache-2.0
#include "flowtok/cli/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "flowtok/error.hpp"
#include "flowtok/metrics/features.hpp"
#include "flowtok/metrics/schema.hpp"
#include "flowtok/sampler/reconstruct.hpp"
#include "flowtok/structio/pdb.hpp"
#include "flowtok/tokenizer/coords.hpp"

namespace flowtok::cli {

using nlohmann::json;

namespace {

json synth_json(const SynthOptions& o) {
    return {{"kind", geo::to_string(o.kind)}, {"n", o.n},         {"min_length", o.min_length},
            {"max_length", o.max_length},     {"atoms", o.atoms}, {"seed", o.seed}};
}

const json& section(const json& j, const char* name) {
    if (!j.contains(name) || !j[name].is_object()) throw UserError(std::string("config: section '") + name + "' must be an object");
    return j[name];
}

// Keys of `given` must all appear in the canonical form of the parsed section.
void reject_unknown(const json& given, const json& canonical, const std::string& name) {
    for (const auto& [k, v] : given.items()) {
        if (!canonical.contains(k)) throw UserError("config: unknown key '" + name + "." + k + "'");
    }
}

template <class T, class Parse, class Dump>
T parse_section(const json& j, const char* name, Parse parse, Dump dump) {
    const json& s = section(j, name);
    try {
        T v = parse(s);
        reject_unknown(s, dump(v), name);
        return v;
    } catch (const json::exception& e) {
        throw UserError(std::string("config: section '") + name + "': " + e.what());
    }
}

std::string elapsed(std::chrono::steady_clock::time_point t0) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1fs", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return buf;
}

void require_lengths(const tok::TokenizerModel& m, const std::vector<BackboneStructure>& xs) {
    for (const auto& x : xs) {
        if (x.atoms != m.config().atoms) {
            throw UserError("structure '" + x.id + "' has " + std::to_string(x.atoms) + " atoms per residue; tokenizer config expects " +
                            std::to_string(m.config().atoms));
        }
        if (x.length() > m.config().max_length) {
            throw UserError("structure '" + x.id + "' has length " + std::to_string(x.length()) +
                            "; tokenizer config max_length is " + std::to_string(m.config().max_length));
        }
    }
}

}  // namespace

json profile_defaults(const std::string& profile, std::uint64_t seed) {
    PipelineConfig c;
    c.profile = profile;
    c.seed = seed;
    if (profile == "small" || profile == "smoke") {
        c.tokenizer = tok::small_profile();
        c.train.accum_steps = 1;
        c.train.steps = 5000;
        c.ingest.plddt_filter = false;  // synthetic structures carry no confidences
        c.prior.layers = 2;
        c.prior.width = 64;
        c.prior.heads = 4;
        c.prior_train.steps = 500;
        c.prior_train.batch_size = 8;
    } else if (profile != "default") {
        throw UserError("unknown profile '" + profile + "' (default, small, smoke)");
    }
    if (profile == "smoke") {
        c.train.steps = 2000;
        c.train.micro_batch = 8;
        c.train.schedule = {1e-3, 100, 2000, 1e-4};
        c.prior_train.steps = 300;
        c.prior_train.batch_size = 5;
        c.prior_train.schedule = {3e-3, 20, 300, 3e-4};
    }
    c.prior.codebook = c.tokenizer.codebook_size();
    c.prior.max_length = c.tokenizer.max_length + 2;
    c.synth.seed = seed;
    c.tokenizer.init_seed = seed + 1;
    c.train.seed = seed + 2;
    c.prior.init_seed = seed + 3;
    c.prior_train.seed = seed + 4;
    c.generate.seed = seed + 5;
    c.sampler.seed = seed + 6;
    return to_json(c);
}

json to_json(const PipelineConfig& c) {
    return {{"profile", c.profile},
            {"seed", c.seed},
            {"threads", c.threads},
            {"synth", synth_json(c.synth)},
            {"ingest", io::to_json(c.ingest)},
            {"tokenizer", tok::to_json(c.tokenizer)},
            {"train", flow::to_json(c.train)},
            {"prior", prior::to_json(c.prior)},
            {"prior_train", prior::to_json(c.prior_train)},
            {"sampling", prior::to_json(c.sampling)},
            {"generate", {{"n", c.generate.n}, {"seed", c.generate.seed}}},
            {"sampler", sample::to_json(c.sampler)},
            {"eval", {{"extractor", c.extractor}}},
            {"log", {{"every", c.log.every}}}};
}

PipelineConfig resolve_config(const json& file, const json& flags) {
    if (!file.is_object() && !file.is_null()) throw UserError("config: file must hold a JSON object");
    auto pick = [&](const char* key) -> const json* {
        if (flags.contains(key)) return &flags[key];
        if (file.is_object() && file.contains(key)) return &file[key];
        return nullptr;
    };
    PipelineConfig c;
    try {
        if (auto* p = pick("profile")) c.profile = p->get<std::string>();
        if (auto* s = pick("seed")) c.seed = s->get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw UserError(std::string("config: profile/seed: ") + e.what());
    }
    json j = profile_defaults(c.profile, c.seed);
    if (file.is_object()) j.merge_patch(file);
    j.merge_patch(flags);
    reject_unknown(j, to_json(c), "config");

    try {
        c.threads = j.at("threads").get<int>();
        const json& s = section(j, "synth");
        c.synth.kind = geo::parse_synth_kind(s.value("kind", geo::to_string(c.synth.kind)));
        c.synth.n = s.value("n", c.synth.n);
        c.synth.min_length = s.value("min_length", c.synth.min_length);
        c.synth.max_length = s.value("max_length", c.synth.max_length);
        c.synth.atoms = s.value("atoms", c.synth.atoms);
        c.synth.seed = s.value("seed", c.synth.seed);
        reject_unknown(s, synth_json(c.synth), "synth");
        const json& g = section(j, "generate");
        c.generate.n = g.value("n", c.generate.n);
        c.generate.seed = g.value("seed", c.generate.seed);
        reject_unknown(g, json{{"n", 0}, {"seed", 0}}, "generate");
        c.extractor = section(j, "eval").value("extractor", c.extractor);
        reject_unknown(j["eval"], json{{"extractor", ""}}, "eval");
        c.log.every = section(j, "log").value("every", c.log.every);
        reject_unknown(j["log"], json{{"every", 0}}, "log");
    } catch (const json::exception& e) {
        throw UserError(std::string("config: ") + e.what());
    }
    c.ingest = parse_section<io::IngestConfig>(j, "ingest", [](const json& s) { return io::ingest_config_from_json(s); },
                                               [](const io::IngestConfig& v) { return io::to_json(v); });
    c.tokenizer = parse_section<tok::TokenizerConfig>(
        j, "tokenizer", [](const json& s) { return tok::tokenizer_config_from_json(s); },
        [](const tok::TokenizerConfig& v) { return tok::to_json(v); });
    c.train = parse_section<flow::TrainConfig>(j, "train", [](const json& s) { return flow::train_config_from_json(s); },
                                               [](const flow::TrainConfig& v) { return flow::to_json(v); });
    c.prior = parse_section<prior::PriorConfig>(j, "prior", [](const json& s) { return prior::prior_config_from_json(s); },
                                                [](const prior::PriorConfig& v) { return prior::to_json(v); });
    // Unless set explicitly, the prior follows the tokenizer's codebook and length.
    auto given = [&](const char* key) {
        auto has = [&](const json& src) { return src.is_object() && src.contains("prior") && src["prior"].contains(key); };
        return has(file) || has(flags);
    };
    if (!given("codebook")) c.prior.codebook = c.tokenizer.codebook_size();
    if (!given("max_length")) c.prior.max_length = c.tokenizer.max_length + 2;
    c.prior_train = parse_section<prior::PriorTrainConfig>(
        j, "prior_train", [](const json& s) { return prior::prior_train_config_from_json(s); },
        [](const prior::PriorTrainConfig& v) { return prior::to_json(v); });
    c.sampling = parse_section<prior::SamplingConfig>(
        j, "sampling", [](const json& s) { return prior::sampling_config_from_json(s); },
        [](const prior::SamplingConfig& v) { return prior::to_json(v); });
    c.sampler = parse_section<sample::SamplerConfig>(
        j, "sampler", [](const json& s) { return sample::sampler_config_from_json(s); },
        [](const sample::SamplerConfig& v) { return sample::to_json(v); });

    c.tokenizer.validate();
    c.train.validate();
    c.prior.validate();
    c.prior_train.validate();
    c.sampling.validate();
    c.sampler.validate();
    metrics::make_extractor(c.extractor);
    if (c.threads < 1) throw UserError("config: threads must be at least 1");
    if (c.synth.n < 1) throw UserError("config: synth.n must be at least 1");
    if (c.synth.min_length < 3 || c.synth.min_length > c.synth.max_length) {
        throw UserError("config: synth lengths must satisfy 3 <= min_length <= max_length");
    }
    if (c.prior.codebook != c.tokenizer.codebook_size()) {
        throw UserError("config: prior.codebook " + std::to_string(c.prior.codebook) + " differs from the tokenizer codebook " +
                        std::to_string(c.tokenizer.codebook_size()));
    }
    if (c.prior.max_codes() > c.tokenizer.max_length) {
        throw UserError("config: prior.max_length allows more codes than tokenizer.max_length");
    }
    if (c.log.every < 1) throw UserError("config: log.every must be at least 1");
    return c;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UserError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw UserError(path.string() + ": invalid JSON: " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UserError("cannot write " + path.string());
    out << text;
    if (!out) throw UserError("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::vector<BackboneStructure> synth_structures(const SynthOptions& o) {
    num::Rng rng(o.seed);
    std::vector<BackboneStructure> out;
    char id[64];
    for (std::size_t i = 0; i < o.n; ++i) {
        const std::size_t len = o.min_length + rng.below(o.max_length - o.min_length + 1);
        std::snprintf(id, sizeof id, "%s_%03zu", geo::to_string(o.kind).c_str(), i);
        out.push_back(geo::synth_backbone(o.kind, len, rng, id, o.atoms));
    }
    return out;
}

void write_structures(const fs::path& dir, const std::vector<BackboneStructure>& xs) {
    fs::create_directories(dir);
    for (const auto& x : xs) write_text(dir / (x.id + ".pdb"), io::write_pdb(x));
}

std::vector<BackboneStructure> load_structures(const fs::path& input, int atoms) {
    std::vector<BackboneStructure> xs;
    if (fs::is_directory(input)) {
        xs = io::load_directory(input, atoms);
    } else if (input.extension() == ".json") {
        const auto m = io::load_manifest(input);
        if (m.config.atoms != atoms) {
            throw UserError("manifest " + input.string() + " was built with atoms=" + std::to_string(m.config.atoms) +
                            "; expected atoms=" + std::to_string(atoms));
        }
        xs = io::load_retained(m);
    } else {
        throw UserError("input must be a directory of PDB files or a manifest .json: " + input.string());
    }
    if (xs.empty()) {
        throw UserError("no structures with atoms=" + std::to_string(atoms) + " found in " + input.string());
    }
    return xs;
}

std::vector<flow::Example> to_examples(const std::vector<BackboneStructure>& xs, double coord_scale) {
    std::vector<flow::Example> out;
    for (const auto& x : xs) out.push_back({x.id, tok::to_model_units(x, coord_scale)});
    return out;
}

std::unique_ptr<tok::TokenizerModel> train_tokenizer(const PipelineConfig& c, const std::vector<BackboneStructure>& xs,
                                                     const fs::path& dir, std::ostream* progress) {
    auto model = std::make_unique<tok::TokenizerModel>(c.tokenizer);
    require_lengths(*model, xs);
    std::unique_ptr<prior::PriorModel> reg;
    if (c.train.gpt_reg_weight > 0.0) reg = std::make_unique<prior::PriorModel>(flow::regularizer_config(c.tokenizer, c.train.seed));
    flow::TokenizerTrainer trainer(*model, c.train, to_examples(xs, c.tokenizer.coord_scale), reg.get());
    fs::create_directories(dir);
    std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
    if (!log) throw UserError("cannot write " + (dir / "train_log.jsonl").string());
    const auto t0 = std::chrono::steady_clock::now();
    for (std::uint64_t s = 0; s < c.train.steps; ++s) {
        const flow::StepMetrics m = trainer.step();
        log << flow::to_json(m).dump() << '\n';
        if (progress && ((s + 1) % c.log.every == 0 || s + 1 == c.train.steps)) {
            *progress << "train-tokenizer step " << s + 1 << "/" << c.train.steps << " loss " << m.loss << " lr " << m.lr
                      << " codes_seen " << m.codes_seen << " (" << elapsed(t0) << ")\n";
        }
    }
    log.flush();
    tok::save_tokenizer(dir / "tokenizer.ckpt", *model,
                        {{"train", flow::to_json(c.train)}, {"codes_seen", trainer.codes_seen().size()}});
    return model;
}

std::vector<prior::TokenRecord> tokenize_structures(const tok::TokenizerModel& m,
                                                    const std::vector<BackboneStructure>& xs) {
    require_lengths(m, xs);
    const auto codes = flow::tokenize(m, to_examples(xs, m.config().coord_scale));
    std::vector<prior::TokenRecord> out;
    for (std::size_t i = 0; i < xs.size(); ++i) out.push_back({xs[i].id, codes[i]});
    return out;
}

std::unique_ptr<prior::PriorModel> train_prior(const PipelineConfig& c, const std::vector<prior::TokenRecord>& tokens,
                                               const fs::path& dir, std::ostream* progress) {
    auto model = std::make_unique<prior::PriorModel>(c.prior);
    std::vector<std::vector<std::int64_t>> corpus;
    for (const auto& r : tokens) corpus.push_back(r.codes);
    prior::PriorTrainer trainer(*model, c.prior_train, corpus);
    fs::create_directories(dir);
    std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
    if (!log) throw UserError("cannot write " + (dir / "train_log.jsonl").string());
    const auto t0 = std::chrono::steady_clock::now();
    for (std::uint64_t s = 0; s < c.prior_train.steps; ++s) {
        const prior::PriorStepMetrics m = trainer.step();
        log << json{{"step", m.step}, {"loss", m.loss}, {"lr", m.lr}, {"grad_norm", m.grad_norm}}.dump() << '\n';
        if (progress && ((s + 1) % c.log.every == 0 || s + 1 == c.prior_train.steps)) {
            *progress << "train-prior step " << s + 1 << "/" << c.prior_train.steps << " loss " << m.loss << " ("
                      << elapsed(t0) << ")\n";
        }
    }
    log.flush();
    prior::save_prior(dir / "prior.ckpt", *model, {{"train", prior::to_json(c.prior_train)}});
    return model;
}

std::vector<BackboneStructure> reconstruct_structures(const tok::TokenizerModel& m,
                                                      const std::vector<BackboneStructure>& xs,
                                                      const sample::SamplerConfig& cfg) {
    require_lengths(m, xs);
    std::vector<BackboneStructure> out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sample::SamplerConfig ci = cfg;
        ci.seed = cfg.seed + i;
        BackboneStructure r = sample::reconstruct(m, xs[i], ci).structure;
        r.ss_labels.reset();  // labels belong to the input, not the sample
        out.push_back(std::move(r));
    }
    return out;
}

GeneratedSet generate_structures(const prior::PriorModel& p, const tok::TokenizerModel& m, const PipelineConfig& c) {
    if (p.config().codebook != m.fsq().codebook_size()) {
        throw UserError("prior codebook " + std::to_string(p.config().codebook) + " does not match tokenizer codebook " +
                        std::to_string(m.fsq().codebook_size()));
    }
    GeneratedSet out;
    prior::PriorSession session(p);
    const num::Rng root(c.generate.seed);
    char id[32];
    for (std::size_t i = 0; i < c.generate.n; ++i) {
        num::Rng rng = root.fork(i);
        const prior::Generated g = prior::sample(session, c.sampling, rng);
        std::snprintf(id, sizeof id, "sample_%03zu", i);
        if (g.codes.size() > m.config().max_length) {
            throw UserError("prior produced " + std::to_string(g.codes.size()) + " codes; tokenizer max_length is " +
                            std::to_string(m.config().max_length));
        }
        sample::SamplerConfig ci = c.sampler;
        ci.seed = c.sampler.seed + i;
        out.tokens.push_back({id, g.codes});
        out.log_likelihood.push_back(g.log_likelihood);
        out.structures.push_back(sample::decode_codes(m, g.codes, ci, id));
    }
    return out;
}

void write_sampler_sidecar(const fs::path& dir, const sample::SamplerConfig& cfg, json extra) {
    json j = {{"sampler", sample::to_json(cfg)}, {"per_structure_seed", "sampler.seed + index in id order"}};
    if (extra.is_object()) j.update(extra);
    write_json(dir / "sampler.json", j);
}

json read_sampler_sidecar(const fs::path& dir) {
    const fs::path p = dir / "sampler.json";
    if (!fs::exists(p)) return nullptr;
    return read_json(p);
}

void write_report(const fs::path& path, const metrics::MetricsReport& r) {
    const json j = metrics::to_json(r);
    const auto errors = metrics::validate_schema(j, metrics::report_schema());
    if (!errors.empty()) throw std::logic_error("report does not match its schema: " + errors.front());
    write_json(path, j);
    fs::path csv = path;
    write_text(csv.replace_extension(".csv"), metrics::to_csv(r));
}

void run_end_to_end(const PipelineConfig& c, const fs::path& dir, std::ostream* progress) {
    if (c.synth.atoms != c.tokenizer.atoms || c.ingest.atoms != c.tokenizer.atoms) {
        throw UserError("config: synth.atoms, ingest.atoms and tokenizer.atoms must agree");
    }
    fs::create_directories(dir);
    write_json(dir / "config.json", to_json(c));
    std::ofstream stages(dir / "pipeline_log.jsonl", std::ios::binary);
    const auto t0 = std::chrono::steady_clock::now();
    auto stage = [&](const char* name, auto&& fn) {
        if (progress) *progress << "[" << name << "] start (" << elapsed(t0) << ")\n";
        auto fail = [&](const std::string& what) {
            stages << json{{"stage", name}, {"status", "failed"}, {"error", what}}.dump() << '\n';
            stages.flush();
            return std::string("end-to-end: stage '") + name + "' failed: " + what;
        };
        try {
            fn();
        } catch (const UserError& e) {
            throw UserError(fail(e.what()));
        } catch (const NumericError& e) {
            throw NumericError(fail(e.what()));
        } catch (const std::exception& e) {
            throw std::runtime_error(fail(e.what()));
        }
        stages << json{{"stage", name}, {"status", "ok"}}.dump() << '\n';
        stages.flush();
    };

    std::vector<BackboneStructure> corpus, recon;
    std::unique_ptr<tok::TokenizerModel> tokenizer;
    std::unique_ptr<prior::PriorModel> prior_model;
    std::vector<prior::TokenRecord> tokens;
    GeneratedSet generated;
    const auto extractor = metrics::make_extractor(c.extractor);

    stage("synth", [&] { write_structures(dir / "data", synth_structures(c.synth)); });
    stage("ingest", [&] {
        const auto manifest = io::ingest_directory(dir / "data", c.ingest);
        io::save_manifest(dir / "manifest.json", manifest);
        corpus = io::load_retained(manifest);
        if (corpus.empty()) throw UserError("no structures passed the ingest filters");
    });
    stage("train-tokenizer", [&] { tokenizer = train_tokenizer(c, corpus, dir / "tokenizer", progress); });
    stage("tokenize", [&] {
        tokens = tokenize_structures(*tokenizer, corpus);
        prior::write_tokens(dir / "tokens.txt", tokens);
    });
    stage("train-prior", [&] { prior_model = train_prior(c, tokens, dir / "prior", progress); });
    stage("reconstruct", [&] {
        recon = reconstruct_structures(*tokenizer, corpus, c.sampler);
        write_structures(dir / "reconstructions", recon);
        write_sampler_sidecar(dir / "reconstructions", c.sampler);
    });
    stage("eval", [&] {
        const auto r = metrics::evaluate_reconstruction(corpus, recon, *extractor, read_sampler_sidecar(dir / "reconstructions"));
        write_report(dir / "report.json", r);
    });
    stage("sample", [&] {
        generated = generate_structures(*prior_model, *tokenizer, c);
        write_structures(dir / "samples", generated.structures);
        prior::write_tokens(dir / "samples" / "tokens.txt", generated.tokens);
        write_sampler_sidecar(dir / "samples", c.sampler, {{"sampling", prior::to_json(c.sampling)}, {"generate_seed", c.generate.seed}});
    });
    stage("eval-generation", [&] {
        std::vector<BackboneStructure> usable;
        for (const auto& x : generated.structures) {
            if (x.length() >= 3) usable.push_back(x);
        }
        if (usable.empty()) throw UserError("every generated structure is shorter than 3 residues");
        auto r = metrics::evaluate_generation(usable, corpus, *extractor, read_sampler_sidecar(dir / "samples"));
        if (usable.size() < generated.structures.size()) {
            r.warnings.push_back(std::to_string(generated.structures.size() - usable.size()) +
                                 " generated structures shorter than 3 residues were not scored");
        }
        write_report(dir / "generation_report.json", r);
    });
    stage("verify", [&] {
        io::PdbReadOptions opt;
        opt.atoms = c.tokenizer.atoms;
        for (const char* sub : {"data", "reconstructions", "samples"}) {
            for (const auto& e : fs::directory_iterator(dir / sub)) {
                if (e.path().extension() == ".pdb") io::read_pdb_file(e.path(), opt);
            }
        }
        for (const char* rep : {"report.json", "generation_report.json"}) {
            const auto errors = metrics::validate_schema(read_json(dir / rep), metrics::report_schema());
            if (!errors.empty()) throw std::logic_error(std::string(rep) + ": " + errors.front());
        }
    });
    if (progress) *progress << "end-to-end finished (" << elapsed(t0) << ")\n";
}

}  // namespace flowtok::cli
