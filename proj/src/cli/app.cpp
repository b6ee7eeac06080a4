// SPDX-License-Identifier: Apache-2.0
#include "flowtok/cli/app.hpp"

#include <CLI11.hpp>
#include <functional>
#include <memory>
#include <sstream>

#include "flowtok/cli/pipeline.hpp"
#include "flowtok/error.hpp"
#include "flowtok/metrics/schema.hpp"
#include "flowtok/numerics/checkpoint.hpp"
#include "flowtok/sampler/reconstruct.hpp"

namespace flowtok::cli {
namespace {

using nlohmann::json;

/// Options that patch the configuration JSON when given on the command line.
class Flags {
public:
    explicit Flags(CLI::App* app) : app_(app) {
        add<std::string>("--profile", "/profile", "default | small | smoke");
        add<std::uint64_t>("--seed", "/seed", "Base seed; every stage seed is derived from it");
        add<int>("--threads", "/threads", "Worker cap (recorded; execution is single-threaded)");
        app_->add_option("--config", config_path_, "JSON config file (defaults < file < flags)")->check(CLI::ExistingFile);
    }

    template <class T>
    void add(const std::string& flag, const std::string& pointer, const std::string& help) {
        auto v = std::make_shared<T>();
        CLI::Option* o = app_->add_option(flag, *v, help);
        patches_.push_back([v, o, pointer](json& j) {
            if (o->count()) j[json::json_pointer(pointer)] = *v;
        });
    }

    // Boolean switch setting `pointer` to `value` when present.
    void toggle(const std::string& flag, const std::string& pointer, bool value, const std::string& help) {
        CLI::Option* o = app_->add_flag(flag, help);
        patches_.push_back([o, pointer, value](json& j) {
            if (o->count()) j[json::json_pointer(pointer)] = value;
        });
    }

    void sampler_options() {
        auto preset = app_->add_flag("--tuned", "Use the tuned sampler preset (g 2, eta 0.45, gamma 1)");
        patches_.push_back([preset](json& j) {
            if (!preset->count()) return;
            const json t = sample::to_json(sample::tuned_preset());
            for (const char* k : {"guidance", "eta", "gamma"}) j["sampler"][k] = t[k];
        });
        add<std::size_t>("--sampler-steps", "/sampler/steps", "Integration steps N");
        add<double>("--guidance", "/sampler/guidance", "Classifier-free guidance g");
        add<double>("--eta", "/sampler/eta", "Score scale");
        add<double>("--gamma", "/sampler/gamma", "Noise scale");
        add<std::string>("--gt-mode", "/sampler/gt_mode", "constant | one_minus_t");
        add<std::uint64_t>("--sampler-seed", "/sampler/seed", "Sampler seed");
    }

    PipelineConfig resolve() const {
        json flags = json::object();
        // In registration order: presets come before the flags they cover.
        for (const auto& p : patches_) p(flags);
        const json file = config_path_.empty() ? json(nullptr) : read_json(config_path_);
        return resolve_config(file, flags);
    }

private:
    CLI::App* app_;
    std::string config_path_;
    std::vector<std::function<void(json&)>> patches_;
};

struct Ctx {
    std::ostream& out;
    std::ostream& err;
};

json effective(const std::string& command, const PipelineConfig& c, json inputs) {
    return {{"command", command}, {"inputs", std::move(inputs)}, {"config", to_json(c)}};
}

fs::path sidecar(const fs::path& file) { return fs::path(file.string() + ".config.json"); }

void note_threads(const PipelineConfig& c, Ctx& x) {
    if (c.threads > 1) x.err << "note: --threads " << c.threads << " recorded; execution is single-threaded\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"flowtok: flow-based protein structure tokenizer"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");
    Ctx x{out, err};
    std::function<void()> action;

    // synth
    auto* synth = app.add_subcommand("synth", "Write idealised backbones as PDB files");
    Flags synth_f(synth);
    std::string synth_out;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth_f.add<std::string>("--kind", "/synth/kind", "helix | sheet | mixed");
    synth_f.add<std::size_t>("--n", "/synth/n", "Number of structures");
    synth_f.add<std::size_t>("--min-length", "/synth/min_length", "Shortest chain");
    synth_f.add<std::size_t>("--max-length", "/synth/max_length", "Longest chain");
    synth_f.add<int>("--atoms", "/synth/atoms", "1 (CA) or 3 (N, CA, C); must match the tokenizer");
    synth->callback([&] {
        action = [&] {
            const auto c = synth_f.resolve();
            const auto xs = synth_structures(c.synth);
            write_structures(synth_out, xs);
            write_json(fs::path(synth_out) / "config.json", effective("synth", c, {}));
            x.out << "wrote " << xs.size() << " structures to " << synth_out << "\n";
        };
    });

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Parse and filter a directory of PDB files into a manifest");
    Flags ingest_f(ingest);
    std::string ingest_in, ingest_out;
    ingest->add_option("--in", ingest_in, "Directory of PDB files")->required()->check(CLI::ExistingDirectory);
    ingest->add_option("--out", ingest_out, "Manifest JSON")->required();
    ingest_f.add<std::size_t>("--max-length", "/ingest/max_length", "Reject longer chains");
    ingest_f.add<int>("--atoms", "/ingest/atoms", "1 or 3");
    ingest_f.add<double>("--max-coil", "/ingest/max_coil_fraction", "Reject when coil fraction exceeds this");
    ingest_f.add<double>("--min-plddt", "/ingest/min_mean_plddt", "Reject when mean pLDDT is below this");
    ingest_f.add<double>("--min-confident-fraction", "/ingest/min_confident_fraction", "Reject below this confident fraction");
    ingest_f.toggle("--no-coil-filter", "/ingest/coil_filter", false, "Disable the coil filter");
    ingest_f.toggle("--no-plddt-filter", "/ingest/plddt_filter", false, "Disable the pLDDT filters");
    ingest_f.toggle("--plddt-filter", "/ingest/plddt_filter", true, "Enable the pLDDT filters (B-factor read as pLDDT)");
    ingest->callback([&] {
        action = [&] {
            auto c = ingest_f.resolve();
            const auto m = io::ingest_directory(ingest_in, c.ingest);
            io::save_manifest(ingest_out, m);
            write_json(sidecar(ingest_out), effective("ingest", c, {{"in", ingest_in}}));
            x.out << m.retained_count() << " of " << m.entries.size() << " chains retained\n";
        };
    });

    // train-tokenizer
    auto* tt = app.add_subcommand("train-tokenizer", "Train the tokenizer on a structure set");
    Flags tt_f(tt);
    std::string tt_data, tt_out;
    tt->add_option("--data", tt_data, "PDB directory or manifest")->required()->check(CLI::ExistingPath);
    tt->add_option("--out", tt_out, "Output directory")->required();
    tt_f.add<std::uint64_t>("--steps", "/train/steps", "Optimizer steps");
    tt_f.add<double>("--lr", "/train/lr", "Peak learning rate");
    tt_f.add<std::uint64_t>("--warmup", "/train/warmup", "Warmup steps");
    tt_f.add<std::uint64_t>("--decay-iters", "/train/decay_iters", "Cosine decay horizon");
    tt_f.add<double>("--min-lr", "/train/min_lr", "Learning-rate floor");
    tt_f.add<std::size_t>("--micro-batch", "/train/micro_batch", "Rotated views per micro-step");
    tt_f.add<std::size_t>("--accum-steps", "/train/accum_steps", "Micro-steps per optimizer step");
    tt_f.add<double>("--weight-decay", "/train/weight_decay", "AdamW weight decay");
    tt_f.add<double>("--gpt-reg-weight", "/train/gpt_reg_weight", "Autoregressive regularizer weight");
    tt_f.add<double>("--cond-mask-prob", "/train/cond_mask_prob", "Conditioning dropout probability");
    tt_f.add<std::size_t>("--encoder-layers", "/tokenizer/encoder_layers", "Encoder depth");
    tt_f.add<std::size_t>("--encoder-width", "/tokenizer/encoder_width", "Encoder width");
    tt_f.add<std::size_t>("--decoder-layers", "/tokenizer/decoder_layers", "Decoder depth");
    tt_f.add<std::size_t>("--decoder-width", "/tokenizer/decoder_width", "Decoder width");
    tt_f.add<std::size_t>("--heads", "/tokenizer/heads", "Attention heads");
    tt_f.add<double>("--dropout", "/tokenizer/dropout", "Dropout");
    tt_f.add<int>("--window", "/tokenizer/window", "Encoder window (0 pointwise, -1 unrestricted)");
    tt_f.add<std::vector<std::size_t>>("--fsq-levels", "/tokenizer/fsq_levels", "FSQ levels per dimension");
    tt_f.add<double>("--codebook-jitter", "/tokenizer/codebook_jitter", "Training-time code jitter");
    tt_f.toggle("--pair-bias", "/tokenizer/pair_bias", true, "Enable pair-biased attention");
    tt_f.toggle("--self-conditioning", "/tokenizer/self_conditioning", true, "Enable self-conditioning");
    tt_f.toggle("--no-shared-adaln", "/tokenizer/share_adaln", false, "Per-block adaLN");
    tt_f.add<std::uint64_t>("--log-every", "/log/every", "Progress interval");
    tt->callback([&] {
        action = [&] {
            const auto c = tt_f.resolve();
            note_threads(c, x);
            const auto xs = load_structures(tt_data, c.tokenizer.atoms);
            write_json(fs::path(tt_out) / "config.json", effective("train-tokenizer", c, {{"data", tt_data}}));
            train_tokenizer(c, xs, tt_out, &x.err);
            x.out << "wrote " << (fs::path(tt_out) / "tokenizer.ckpt").string() << "\n";
        };
    });

    // tokenize
    auto* tk = app.add_subcommand("tokenize", "Encode structures into per-residue codes");
    Flags tk_f(tk);
    std::string tk_ckpt, tk_data, tk_out;
    tk->add_option("--tokenizer", tk_ckpt, "Tokenizer checkpoint")->required()->check(CLI::ExistingFile);
    tk->add_option("--data", tk_data, "PDB directory or manifest")->required()->check(CLI::ExistingPath);
    tk->add_option("--out", tk_out, "Token file")->required();
    tk->callback([&] {
        action = [&] {
            const auto c = tk_f.resolve();
            const auto m = tok::load_tokenizer(tk_ckpt);
            const auto records = tokenize_structures(*m, load_structures(tk_data, m->config().atoms));
            prior::write_tokens(tk_out, records);
            write_json(sidecar(tk_out), effective("tokenize", c, {{"tokenizer", tk_ckpt}, {"data", tk_data},
                                                                  {"tokenizer_config", tok::to_json(m->config())}}));
            x.out << "wrote " << records.size() << " records to " << tk_out << "\n";
        };
    });

    // train-prior
    auto* tp = app.add_subcommand("train-prior", "Train the autoregressive prior on a token file");
    Flags tp_f(tp);
    std::string tp_tokens, tp_out;
    tp->add_option("--tokens", tp_tokens, "Token file")->required()->check(CLI::ExistingFile);
    tp->add_option("--out", tp_out, "Output directory")->required();
    tp_f.add<std::uint64_t>("--steps", "/prior_train/steps", "Optimizer steps");
    tp_f.add<double>("--lr", "/prior_train/lr", "Peak learning rate");
    tp_f.add<std::uint64_t>("--warmup", "/prior_train/warmup", "Warmup steps");
    tp_f.add<std::uint64_t>("--decay-iters", "/prior_train/decay_iters", "Cosine decay horizon");
    tp_f.add<double>("--min-lr", "/prior_train/min_lr", "Learning-rate floor");
    tp_f.add<std::size_t>("--batch-size", "/prior_train/batch_size", "Sequences per step");
    tp_f.add<std::size_t>("--layers", "/prior/layers", "Transformer depth");
    tp_f.add<std::size_t>("--width", "/prior/width", "Model width");
    tp_f.add<std::size_t>("--heads", "/prior/heads", "Attention heads");
    tp_f.add<std::size_t>("--codebook", "/prior/codebook", "Codebook size");
    tp_f.add<std::uint64_t>("--log-every", "/log/every", "Progress interval");
    tp->callback([&] {
        action = [&] {
            const auto c = tp_f.resolve();
            note_threads(c, x);
            const auto records = prior::read_tokens(tp_tokens, c.prior.codebook);
            if (records.empty()) throw UserError(tp_tokens + ": no token records");
            write_json(fs::path(tp_out) / "config.json", effective("train-prior", c, {{"tokens", tp_tokens}}));
            train_prior(c, records, tp_out, &x.err);
            x.out << "wrote " << (fs::path(tp_out) / "prior.ckpt").string() << "\n";
        };
    });

    // reconstruct
    auto* rc = app.add_subcommand("reconstruct", "Encode, quantize and resample structures");
    Flags rc_f(rc);
    std::string rc_ckpt, rc_data, rc_out;
    rc->add_option("--tokenizer", rc_ckpt, "Tokenizer checkpoint")->required()->check(CLI::ExistingFile);
    rc->add_option("--data", rc_data, "PDB directory or manifest")->required()->check(CLI::ExistingPath);
    rc->add_option("--out", rc_out, "Output directory")->required();
    rc_f.sampler_options();
    rc->callback([&] {
        action = [&] {
            const auto c = rc_f.resolve();
            const auto m = tok::load_tokenizer(rc_ckpt);
            const auto xs = reconstruct_structures(*m, load_structures(rc_data, m->config().atoms), c.sampler);
            write_structures(rc_out, xs);
            write_sampler_sidecar(rc_out, c.sampler);
            write_json(fs::path(rc_out) / "config.json", effective("reconstruct", c, {{"tokenizer", rc_ckpt}, {"data", rc_data}}));
            x.out << "wrote " << xs.size() << " reconstructions to " << rc_out << "\n";
        };
    });

    // sample
    auto* sm = app.add_subcommand("sample", "Draw code sequences from the prior and decode them");
    Flags sm_f(sm);
    std::string sm_prior, sm_ckpt, sm_out;
    sm->add_option("--prior", sm_prior, "Prior checkpoint")->required()->check(CLI::ExistingFile);
    sm->add_option("--tokenizer", sm_ckpt, "Tokenizer checkpoint")->required()->check(CLI::ExistingFile);
    sm->add_option("--out", sm_out, "Output directory")->required();
    sm_f.add<std::size_t>("--n", "/generate/n", "Number of structures");
    sm_f.add<double>("--top-p", "/sampling/top_p", "Nucleus mass");
    sm_f.add<double>("--min-p", "/sampling/min_p", "Min-p cutoff relative to the top token");
    sm_f.add<std::size_t>("--best-of", "/sampling/best_of", "Draws per structure (highest likelihood kept)");
    sm_f.add<std::size_t>("--max-codes", "/sampling/max_codes", "Length limit");
    sm_f.toggle("--greedy", "/sampling/greedy", true, "Greedy decoding");
    sm_f.sampler_options();
    sm->callback([&] {
        action = [&] {
            auto c = sm_f.resolve();
            const auto m = tok::load_tokenizer(sm_ckpt);
            const auto p = prior::load_prior(sm_prior);
            const auto g = generate_structures(*p, *m, c);
            write_structures(sm_out, g.structures);
            prior::write_tokens(fs::path(sm_out) / "tokens.txt", g.tokens);
            write_sampler_sidecar(sm_out, c.sampler, {{"sampling", prior::to_json(c.sampling)}, {"generate_seed", c.generate.seed}});
            write_json(fs::path(sm_out) / "config.json", effective("sample", c, {{"prior", sm_prior}, {"tokenizer", sm_ckpt}}));
            x.out << "wrote " << g.structures.size() << " samples to " << sm_out << "\n";
        };
    });

    // eval
    auto* ev = app.add_subcommand("eval", "Score reconstructions (--truth/--pred) or samples (--generated)");
    Flags ev_f(ev);
    std::string ev_truth, ev_pred, ev_gen, ev_ref, ev_out;
    int ev_atoms = 1;
    ev->add_option("--truth", ev_truth, "Reference structures")->check(CLI::ExistingDirectory);
    ev->add_option("--pred", ev_pred, "Reconstructed structures")->check(CLI::ExistingDirectory);
    ev->add_option("--generated", ev_gen, "Generated structures")->check(CLI::ExistingDirectory);
    ev->add_option("--reference", ev_ref, "Reference set for novelty")->check(CLI::ExistingDirectory);
    ev->add_option("--atoms", ev_atoms, "Atoms per residue to read");
    ev->add_option("--out", ev_out, "Report JSON (CSV written alongside)")->required();
    ev_f.add<std::string>("--extractor", "/eval/extractor", "rFPSD feature extractor");
    ev->callback([&] {
        action = [&] {
            const auto c = ev_f.resolve();
            const auto extractor = metrics::make_extractor(c.extractor);
            metrics::MetricsReport r;
            if (!ev_truth.empty() && !ev_pred.empty() && ev_gen.empty()) {
                r = metrics::evaluate_reconstruction(load_structures(ev_truth, ev_atoms), load_structures(ev_pred, ev_atoms),
                                                     *extractor, read_sampler_sidecar(ev_pred));
            } else if (!ev_gen.empty() && ev_truth.empty() && ev_pred.empty()) {
                const auto ref = ev_ref.empty() ? std::vector<BackboneStructure>{} : load_structures(ev_ref, ev_atoms);
                r = metrics::evaluate_generation(load_structures(ev_gen, ev_atoms), ref, *extractor, read_sampler_sidecar(ev_gen));
            } else {
                throw UserError("eval: give either --truth and --pred, or --generated [--reference]");
            }
            write_report(ev_out, r);
            write_json(sidecar(ev_out), effective("eval", c, {{"truth", ev_truth}, {"pred", ev_pred}, {"generated", ev_gen},
                                                              {"reference", ev_ref}}));
            for (const auto& w : r.warnings) x.err << "warning: " << w << "\n";
            x.out << "wrote " << ev_out << "\n";
        };
    });

    // report
    auto* rp = app.add_subcommand("report", "Validate a report against the published schema and summarise it");
    std::string rp_in, rp_csv;
    bool rp_schema = false;
    rp->add_option("--in", rp_in, "Report JSON")->check(CLI::ExistingFile);
    rp->add_option("--csv", rp_csv, "Also write the per-structure rows as CSV");
    rp->add_flag("--print-schema", rp_schema, "Print the report schema and exit");
    rp->callback([&] {
        action = [&] {
            if (rp_schema) {
                x.out << metrics::report_schema().dump(2) << "\n";
                return;
            }
            if (rp_in.empty()) throw UserError("report: --in is required");
            const json j = read_json(rp_in);
            const auto errors = metrics::validate_schema(j, metrics::report_schema());
            if (!errors.empty()) {
                for (const auto& e : errors) x.err << "schema: " << e << "\n";
                throw UserError(rp_in + " does not match the report schema");
            }
            const auto r = metrics::report_from_json(j);
            if (!rp_csv.empty()) write_text(rp_csv, metrics::to_csv(r));
            const auto& a = j["aggregates"];
            x.out << "task " << r.task << ", " << r.rows.size() << " structures, extractor " << r.extractor << "\n";
            for (const char* k : {"rmsd_mean", "rmsd_std", "tm_mean", "tm_std", "rfpsd", "diversity", "novelty"}) {
                x.out << "  " << k << ": " << (a[k].is_null() ? std::string("n/a") : a[k].dump()) << "\n";
            }
            for (const auto& [k, v] : a["ss_rmsd"].items()) x.out << "  [" << k << "]rmsd: " << v.dump() << "\n";
            x.out << "  designability: unavailable\n";
            for (const auto& w : r.warnings) x.out << "  warning: " << w << "\n";
        };
    });

    // end-to-end
    auto* e2e = app.add_subcommand("end-to-end", "Run the whole pipeline on a synthetic corpus");
    Flags e2e_f(e2e);
    std::string e2e_out;
    e2e->add_option("--out", e2e_out, "Output directory")->required();
    e2e_f.add<std::uint64_t>("--steps", "/train/steps", "Tokenizer optimizer steps");
    e2e_f.add<std::uint64_t>("--prior-steps", "/prior_train/steps", "Prior optimizer steps");
    e2e_f.add<std::size_t>("--n", "/synth/n", "Synthetic structures");
    e2e_f.add<std::uint64_t>("--log-every", "/log/every", "Progress interval");
    e2e_f.sampler_options();
    e2e->callback([&] {
        action = [&] {
            const auto c = e2e_f.resolve();
            note_threads(c, x);
            run_end_to_end(c, e2e_out, &x.err);
            x.out << "wrote " << (fs::path(e2e_out) / "report.json").string() << "\n";
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, er;
        const int code = app.exit(e, o, er);
        out << o.str();
        err << er.str();
        return code == 0 ? 0 : 1;
    }
    try {
        if (action) action();
        return 0;
    } catch (const UserError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        err << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace flowtok::cli
