// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "flowtok/cli/app.hpp"
#include "flowtok/cli/pipeline.hpp"
#include "flowtok/error.hpp"
#include "flowtok/geometry/geometry.hpp"
#include "flowtok/metrics/schema.hpp"
#include "flowtok/structio/pdb.hpp"

namespace flowtok::cli {
namespace {

using nlohmann::json;

struct Result {
    int code;
    std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "flowtok");
    std::vector<const char*> argv;
    for (auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("flowtok_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// --- configuration ----------------------------------------------------------------------

TEST(Config, MergeOrderDefaultsFileFlags) {
    const PipelineConfig d = resolve_config(nullptr, json::object());
    EXPECT_EQ(d.profile, "default");
    EXPECT_EQ(d.train.schedule.lr, 1.7e-4);
    EXPECT_EQ(d.train.micro_batch, 32u);
    const json file = {{"train", {{"lr", 5e-4}, {"steps", 10}}}, {"seed", 7}};
    const PipelineConfig f = resolve_config(file, json::object());
    EXPECT_EQ(f.train.schedule.lr, 5e-4);
    EXPECT_EQ(f.train.steps, 10u);
    EXPECT_EQ(f.seed, 7u);
    EXPECT_EQ(f.train.seed, 9u);
    const PipelineConfig g = resolve_config(file, {{"train", {{"lr", 1e-3}}}, {"seed", 1}});
    EXPECT_EQ(g.train.schedule.lr, 1e-3);
    EXPECT_EQ(g.train.steps, 10u);
    EXPECT_EQ(g.train.seed, 3u);
    // Effective config re-resolves to itself.
    EXPECT_EQ(to_json(resolve_config(to_json(g), json::object())), to_json(g));
}

TEST(Config, ProfilesAndValidation) {
    const PipelineConfig s = resolve_config({{"profile", "smoke"}}, json::object());
    EXPECT_EQ(s.train.steps, 2000u);
    EXPECT_EQ(s.synth.n, 5u);
    EXPECT_EQ(s.prior.codebook, 1000u);
    EXPECT_EQ(s.prior.max_length, s.tokenizer.max_length + 2);
    const PipelineConfig small = resolve_config(nullptr, {{"profile", "small"}});
    EXPECT_EQ(small.train.micro_batch, 32u);
    EXPECT_EQ(small.train.schedule.lr, 1.7e-4);
    EXPECT_EQ(small.train.schedule.warmup, 1000u);
    EXPECT_THROW(resolve_config(nullptr, {{"profile", "huge"}}), UserError);
    EXPECT_THROW(resolve_config({{"trian", json::object()}}, json::object()), UserError);
    EXPECT_THROW(resolve_config({{"synth", {{"colour", 1}}}}, json::object()), UserError);
    EXPECT_THROW(resolve_config({{"ingest", {{"max_lenght", 5}}}}, json::object()), UserError);
    EXPECT_THROW(resolve_config({{"sampler", {{"steps", 0}}}}, json::object()), UserError);
    EXPECT_THROW(resolve_config({{"prior", {{"codebook", 10}}}}, json::object()), UserError);
    EXPECT_THROW(resolve_config({{"eval", {{"extractor", "gearnet"}}}}, json::object()), UserError);
    EXPECT_THROW(resolve_config({{"threads", 0}}, json::object()), UserError);
    EXPECT_THROW(resolve_config({{"train", {{"steps", "many"}}}}, json::object()), UserError);
    // The prior follows the tokenizer codebook unless set.
    const PipelineConfig q = resolve_config({{"tokenizer", {{"fsq_levels", {4, 4}}}}}, json::object());
    EXPECT_EQ(q.prior.codebook, 16u);
}

// --- synth ----------------------------------------------------------------------------

TEST(Synth, SpacingLabelsAndDeterminism) {
    SynthOptions o;
    o.kind = geo::SynthKind::helix;
    o.n = 3;
    o.min_length = 20;
    o.max_length = 40;
    o.seed = 11;
    const auto xs = synth_structures(o);
    ASSERT_EQ(xs.size(), 3u);
    for (const auto& x : xs) {
        EXPECT_GE(x.length(), 20u);
        EXPECT_LE(x.length(), 40u);
        const Coords ca = x.ca_trace();
        for (Eigen::Index i = 1; i < ca.rows(); ++i) EXPECT_NEAR((ca.row(i) - ca.row(i - 1)).norm(), 3.8, 1e-3);
        const auto f = geo::ss_fractions(geo::assign_secondary_structure(ca));
        EXPECT_GE(f.helix, 0.9);
    }
    const fs::path a = scratch("synth_a"), b = scratch("synth_b");
    ASSERT_EQ(run_cli({"synth", "--out", a.string(), "--seed", "4", "--n", "3"}).code, 0);
    ASSERT_EQ(run_cli({"synth", "--out", b.string(), "--seed", "4", "--n", "3"}).code, 0);
    for (const auto& e : fs::directory_iterator(a)) {
        if (e.path().extension() == ".pdb") {
            EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename()));
        }
    }
    EXPECT_TRUE(fs::exists(a / "config.json"));
}

// --- exit codes -------------------------------------------------------------------------

TEST(Cli, ExitCodes) {
    EXPECT_EQ(run_cli({"--help"}).code, 0);
    EXPECT_EQ(run_cli({}).code, 1);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
    EXPECT_EQ(run_cli({"synth"}).code, 1);  // --out missing
    const fs::path d = scratch("codes");
    EXPECT_EQ(run_cli({"synth", "--out", d.string(), "--profile", "tiny"}).code, 1);
    std::ofstream(d / "bad.json") << "{ not json";
    const Result r = run_cli({"synth", "--out", d.string(), "--config", (d / "bad.json").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("invalid JSON"), std::string::npos);
    // An unreadable checkpoint is the caller's problem.
    std::ofstream(d / "junk.ckpt") << "junk";
    EXPECT_EQ(run_cli({"tokenize", "--tokenizer", (d / "junk.ckpt").string(), "--data", d.string(), "--out",
                       (d / "t.txt").string()})
                  .code,
              1);
    EXPECT_EQ(run_cli({"report", "--print-schema"}).code, 0);
}

// --- stage commands --------------------------------------------------------------------------

class Pipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = scratch("pipeline");
        const std::string d = dir_.string();
        ASSERT_EQ(run_cli({"synth", "--out", d + "/data", "--n", "4", "--seed", "2"}).code, 0);
        ASSERT_EQ(run_cli({"ingest", "--in", d + "/data", "--out", d + "/manifest.json", "--no-plddt-filter"}).code, 0);
        const Result t = run_cli({"train-tokenizer", "--data", d + "/manifest.json", "--out", d + "/tok", "--profile",
                                  "smoke", "--steps", "3"});
        ASSERT_EQ(t.code, 0) << t.err;
    }
    static fs::path dir_;
};
fs::path Pipeline::dir_;

TEST_F(Pipeline, TokenizeIsDeterministicAndInRange) {
    const std::string d = dir_.string();
    ASSERT_EQ(run_cli({"tokenize", "--tokenizer", d + "/tok/tokenizer.ckpt", "--data", d + "/data", "--out", d + "/t1.txt"}).code, 0);
    ASSERT_EQ(run_cli({"tokenize", "--tokenizer", d + "/tok/tokenizer.ckpt", "--data", d + "/manifest.json", "--out",
                       d + "/t2.txt"})
                  .code,
              0);
    EXPECT_EQ(slurp(dir_ / "t1.txt"), slurp(dir_ / "t2.txt"));
    const auto records = prior::read_tokens(dir_ / "t1.txt", 1000);
    EXPECT_EQ(records.size(), io::load_manifest(dir_ / "manifest.json").retained_count());
    for (const auto& r : records) {
        for (auto c : r.codes) {
            EXPECT_GE(c, 0);
            EXPECT_LT(c, 1000);
        }
    }
    EXPECT_TRUE(fs::exists(d + "/t1.txt.config.json"));
    const json cfg = read_json(d + "/t1.txt.config.json");
    EXPECT_EQ(cfg["command"], "tokenize");
    EXPECT_TRUE(cfg["config"].contains("sampler"));
}

TEST_F(Pipeline, IncompatibleCheckpointNamesTheMismatch) {
    const std::string d = dir_.string();
    // A backbone (N, CA, C) tokenizer cannot read CA-only files.
    ASSERT_EQ(run_cli({"synth", "--out", d + "/data3", "--atoms", "3", "--n", "1"}).code, 0);
    write_json(dir_ / "atoms3.json", {{"tokenizer", {{"atoms", 3}}}, {"synth", {{"atoms", 3}}}, {"ingest", {{"atoms", 3}}}});
    ASSERT_EQ(run_cli({"train-tokenizer", "--data", d + "/data3", "--out", d + "/tok3", "--profile", "smoke", "--steps", "1",
                       "--config", d + "/atoms3.json"})
                  .code,
              0);
    const Result r = run_cli({"tokenize", "--tokenizer", d + "/tok3/tokenizer.ckpt", "--data", d + "/data", "--out", d + "/t3.txt"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("atoms=3"), std::string::npos) << r.err;
    ASSERT_EQ(run_cli({"synth", "--out", d + "/long", "--n", "1", "--min-length", "80", "--max-length", "80"}).code, 0);
    const Result l = run_cli({"tokenize", "--tokenizer", d + "/tok/tokenizer.ckpt", "--data", d + "/long", "--out", d + "/t4.txt"});
    EXPECT_EQ(l.code, 1);
    EXPECT_NE(l.err.find("max_length"), std::string::npos) << l.err;
}

TEST_F(Pipeline, TrainingLogAndConfigArePersisted) {
    const auto log = slurp(dir_ / "tok" / "train_log.jsonl");
    EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);
    const json first = json::parse(log.substr(0, log.find('\n')));
    EXPECT_TRUE(first.contains("loss"));
    EXPECT_TRUE(first.contains("codebook_usage"));
    const json cfg = read_json(dir_ / "tok" / "config.json");
    EXPECT_EQ(cfg["config"]["train"]["steps"], 3);
    EXPECT_EQ(cfg["config"]["profile"], "smoke");
}

TEST_F(Pipeline, ReconstructSampleEvalReport) {
    const std::string d = dir_.string(), ck = d + "/tok/tokenizer.ckpt";
    ASSERT_EQ(run_cli({"reconstruct", "--tokenizer", ck, "--data", d + "/data", "--out", d + "/rec", "--sampler-steps", "4", "--tuned"}).code, 0);
    const json side = read_json(d + "/rec/sampler.json");
    EXPECT_EQ(side["sampler"]["guidance"], 2.0);
    EXPECT_EQ(side["sampler"]["steps"], 4);
    ASSERT_EQ(run_cli({"tokenize", "--tokenizer", ck, "--data", d + "/data", "--out", d + "/tk.txt"}).code, 0);
    ASSERT_EQ(run_cli({"train-prior", "--tokens", d + "/tk.txt", "--out", d + "/prior", "--profile", "smoke", "--steps", "2"}).code, 0);
    const Result s = run_cli({"sample", "--prior", d + "/prior/prior.ckpt", "--tokenizer", ck, "--out", d + "/gen", "--n", "2",
                              "--sampler-steps", "3", "--max-codes", "12"});
    ASSERT_EQ(s.code, 0) << s.err;
    EXPECT_EQ(prior::read_tokens(d + "/gen/tokens.txt").size(), 2u);
    const Result e = run_cli({"eval", "--truth", d + "/data", "--pred", d + "/rec", "--out", d + "/report.json"});
    ASSERT_EQ(e.code, 0) << e.err;
    EXPECT_TRUE(fs::exists(d + "/report.csv"));
    const json rep = read_json(d + "/report.json");
    EXPECT_EQ(rep["provenance"]["sampler"]["sampler"]["eta"], 0.45);
    EXPECT_EQ(run_cli({"report", "--in", d + "/report.json"}).code, 0);
    EXPECT_EQ(run_cli({"eval", "--truth", d + "/data", "--out", d + "/x.json"}).code, 1);
    json broken = rep;
    broken["aggregates"].erase("rfpsd");
    write_json(d + "/broken.json", broken);
    EXPECT_EQ(run_cli({"report", "--in", d + "/broken.json"}).code, 1);
}

// --- end to end ----------------------------------------------------------------------------

TEST(EndToEnd, TinyRunIsReproducible) {
    const fs::path a = scratch("e2e_a"), b = scratch("e2e_b");
    for (const auto& d : {a, b}) {
        const Result r = run_cli({"end-to-end", "--out", d.string(), "--profile", "smoke", "--steps", "4", "--prior-steps", "3",
                                  "--sampler-steps", "3", "--seed", "5"});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    for (const char* f : {"tokenizer/tokenizer.ckpt", "prior/prior.ckpt", "tokens.txt", "samples/tokens.txt", "report.json",
                          "generation_report.json", "report.csv"}) {
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    EXPECT_TRUE(metrics::validate_schema(read_json(a / "report.json"), metrics::report_schema()).empty());
    EXPECT_EQ(read_json(a / "config.json")["seed"], 5);
}

TEST(EndToEnd, FailingStageIsNamed) {
    const fs::path d = scratch("e2e_fail");
    // Every structure is longer than the tokenizer accepts.
    const Result r = run_cli({"end-to-end", "--out", d.string(), "--profile", "smoke", "--config",
                              (d / "c.json").string()});
    EXPECT_EQ(r.code, 1);  // missing config file
    write_json(d / "c.json", {{"synth", {{"min_length", 70}, {"max_length", 70}}}});
    const Result s = run_cli({"end-to-end", "--out", d.string(), "--profile", "smoke", "--config", (d / "c.json").string()});
    EXPECT_EQ(s.code, 1);
    EXPECT_NE(s.err.find("stage 'train-tokenizer'"), std::string::npos) << s.err;
    EXPECT_NE(slurp(d / "pipeline_log.jsonl").find("\"failed\""), std::string::npos);
    EXPECT_TRUE(fs::exists(d / "manifest.json"));
}

}  // namespace
}  // namespace flowtok::cli
