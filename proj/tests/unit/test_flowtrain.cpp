// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "flowtok/error.hpp"
#include "flowtok/flowtrain/flow.hpp"
#include "flowtok/flowtrain/trainer.hpp"
#include "flowtok/geometry/synth.hpp"
#include "flowtok/tokenizer/coords.hpp"
#include "store_check.hpp"

namespace flowtok::flow {
namespace {

using num::Shape;

Tensor centred(Shape s, int atoms, std::uint64_t seed) {
    num::Rng rng(seed);
    Tensor x = rng.normal_tensor(s);
    tok::center_ca(x, atoms);
    return x;
}

tok::TokenizerConfig tiny() {
    tok::TokenizerConfig c;
    c.encoder_layers = 1;
    c.encoder_width = 16;
    c.decoder_layers = 2;
    c.decoder_width = 16;
    c.heads = 2;
    c.max_length = 16;
    c.dropout = 0.0;
    c.init_seed = 1;
    return c;
}

std::vector<Example> toy_corpus(std::size_t n, std::size_t length, int atoms = 1) {
    num::Rng rng(77);
    std::vector<Example> out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto s = geo::synth_backbone(geo::SynthKind::mixed, length, rng, "p" + std::to_string(i), atoms);
        out.push_back({s.id, tok::to_model_units(s, 0.1)});
    }
    return out;
}

TrainConfig quick() {
    TrainConfig t;
    t.micro_batch = 4;
    t.accum_steps = 2;
    t.schedule = {3e-3, 2, 50, 1e-4};
    t.seed = 5;
    return t;
}

// --- path --------------------------------------------------------------------------

TEST(FlowPath, EndpointsAreExact) {
    const Tensor x0 = centred(Shape{3, 5, 1, 3}, 1, 1), x1 = centred(Shape{3, 5, 1, 3}, 1, 2);
    EXPECT_EQ(interpolate(x0, x1, std::vector<double>{0, 0, 0}), x0);
    EXPECT_EQ(interpolate(x0, x1, std::vector<double>{1, 1, 1}), x1);
    const Tensor mixed = interpolate(x0, x1, std::vector<double>{0, 1, 0.25});
    EXPECT_EQ(tok::unstack(mixed, 0), tok::unstack(x0, 0));
    EXPECT_EQ(tok::unstack(mixed, 1), tok::unstack(x1, 1));
    EXPECT_LT(num::max_abs_diff(tok::unstack(mixed, 2), tok::unstack(x0 * 0.75 + x1 * 0.25, 2)), 1e-15);
    EXPECT_THROW(interpolate(x0, x1, std::vector<double>{0.5}), num::ShapeError);
}

TEST(FlowPath, TrainingPairsStayCentred) {
    num::Rng rng(3);
    for (int atoms : {1, 3}) {
        const Tensor x1 = centred(Shape{16, 11, static_cast<std::size_t>(atoms), 3}, atoms, 4);
        for (int rep = 0; rep < 20; ++rep) {
            const FlowState s = make_training_pair(x1, atoms, rng);
            EXPECT_LT(tok::max_ca_centroid(s.x0, atoms), 1e-8);
            EXPECT_LT(tok::max_ca_centroid(s.xt, atoms), 1e-8);
            for (double t : s.t) {
                EXPECT_GE(t, 0.0);
                EXPECT_LT(t, 1.0);
            }
        }
    }
}

TEST(FlowPath, NoiseHasUnitScale) {
    num::Rng rng(8);
    const Tensor x1(Shape{64, 50, 1, 3});
    const FlowState s = make_training_pair(x1, 1, rng);
    double ss = 0.0;
    for (double v : s.x0.data()) ss += v * v;
    // Centering removes 3 of 150 degrees of freedom per sample.
    EXPECT_NEAR(ss / static_cast<double>(s.x0.size()), 49.0 / 50.0, 0.03);
}

TEST(FlowLoss, MockPredictors) {
    const FlowState s = make_state(centred(Shape{2, 4, 1, 3}, 1, 5), centred(Shape{2, 4, 1, 3}, 1, 6), {0.2, 0.7});
    const Var exact = flow_loss([](const FlowState& st) { return num::constant(target_field(st)); }, s);
    EXPECT_EQ(exact.value().item(), 0.0);
    const Var zero = flow_loss([](const FlowState& st) { return num::constant(Tensor(st.x1.shape())); }, s);
    double expect = 0.0;
    const Tensor u = target_field(s);
    for (double v : u.data()) expect += v * v;
    EXPECT_NEAR(zero.value().item(), expect / static_cast<double>(u.size()), 1e-14);
    Tensor bad(s.x1.shape());
    bad[3] = std::nan("");
    EXPECT_THROW(flow_loss(num::constant(bad), s), NumericError);
    EXPECT_THROW(flow_loss(num::constant(Tensor(Shape{2, 4, 3, 3})), s), num::ShapeError);
}

TEST(FlowLoss, NonNegative) {
    num::Rng rng(9);
    const FlowState s = make_training_pair(centred(Shape{4, 6, 1, 3}, 1, 10), 1, rng);
    for (int i = 0; i < 20; ++i) {
        EXPECT_GE(flow_loss(num::constant(rng.normal_tensor(s.x1.shape())), s).value().item(), 0.0);
    }
}

TEST(FlowLoss, TokenizerGradientMatchesFiniteDifferences) {
    tok::TokenizerModel m(tiny());
    num::Rng jr(12);
    check::jitter_parameters(m.store(), jr, 0.2);
    num::Rng rng(13);
    const FlowState s = make_training_pair(centred(Shape{2, 6, 1, 3}, 1, 14), 1, rng);
    Tensor offset;
    {
        num::NoGradGuard ng;
        offset = m.quantize(m.encode(s.x1, {}), {}).offset;
    }
    auto loss = [&] {
        const tok::Quantized q = m.quantize(m.encode(s.x1, {}), {}, tok::QuantizeMode::frozen_offset, &offset);
        return flow_loss(m.decode(num::constant(s.xt), s.t, q.c_hat, {}, nullptr, {}), s);
    };
    const auto r = check::grad_check_store(m.store(), loss, 1e-5, 6);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_parameter;
}

TEST(CfgDropout, MaskedFraction) {
    num::Rng rng(15);
    const auto m = draw_null_mask(10000, 0.1, rng);
    double f = 0.0;
    for (auto v : m) f += v;
    f /= 10000.0;
    EXPECT_NEAR(f, 0.1, 0.01);
    EXPECT_EQ(draw_null_mask(50, 0.0, rng), std::vector<std::uint8_t>(50, 0));
    EXPECT_EQ(draw_null_mask(50, 1.0, rng), std::vector<std::uint8_t>(50, 1));
}

// --- schedule and config ------------------------------------------------------------

TEST(TrainConfig, ScheduleEndpoints) {
    const TrainConfig c;
    EXPECT_EQ(lr_at(0, c), 0.0);
    EXPECT_NEAR(lr_at(1000, c), 1.7e-4, 1e-18);
    EXPECT_NEAR(lr_at(100000, c), 1e-4, 1e-18);
    EXPECT_EQ(c.micro_batch, 32u);
    EXPECT_EQ(c.accum_steps, 8u);
    EXPECT_EQ(c.cond_mask_prob, 0.1);
    EXPECT_EQ(c.gpt_reg_weight, 0.0);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
    TrainConfig c = quick();
    c.clip.reset();
    EXPECT_EQ(to_json(train_config_from_json(to_json(c))), to_json(c));
    EXPECT_THROW(train_config_from_json({{"warmup", 10}, {"decay_iters", 10}}), UserError);
    EXPECT_THROW(train_config_from_json({{"cond_mask_prob", 1.5}}), UserError);
    EXPECT_THROW(train_config_from_json({{"micro_batch", 0}}), UserError);
    EXPECT_THROW(train_config_from_json({{"ema", 0.999}}), UserError);
    EXPECT_THROW(train_config_from_json({{"lr", "fast"}}), UserError);
}

// --- trainer ------------------------------------------------------------------------

TEST(Trainer, AugmentedViewsAreRigidRotations) {
    tok::TokenizerModel m(tiny());
    TrainConfig t = quick();
    const auto corpus = toy_corpus(2, 10);
    TokenizerTrainer tr(m, t, corpus);
    const Tensor views = tr.augmented_views(1);
    ASSERT_EQ(views.shape(), (Shape{4, 10, 1, 3}));
    const Tensor& x = corpus[1].x;
    for (std::size_t v = 0; v < 4; ++v) {
        const Tensor y = tok::unstack(views, v);
        EXPECT_GT(num::max_abs_diff(x, y), 1e-3);
        for (std::size_t i = 0; i < 10; ++i) {
            for (std::size_t j = 0; j < 10; ++j) {
                double dx = 0.0, dy = 0.0;
                for (int k = 0; k < 3; ++k) {
                    dx += std::pow(x[i * 3 + k] - x[j * 3 + k], 2);
                    dy += std::pow(y[i * 3 + k] - y[j * 3 + k], 2);
                }
                EXPECT_NEAR(dx, dy, 1e-12);
            }
        }
    }
    EXPECT_LT(tok::max_ca_centroid(views, 1), 1e-12);
}

TEST(Trainer, IdenticalSeedsGiveIdenticalLossTraces) {
    auto run = [] {
        tok::TokenizerModel m(tiny());
        TokenizerTrainer tr(m, quick(), toy_corpus(3, 8));
        std::vector<double> trace;
        for (int s = 0; s < 6; ++s) trace.push_back(tr.step().loss);
        return std::make_pair(trace, m.store().get("dec.head.weight").value());
    };
    const auto a = run(), b = run();
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(a.second, b.second);
}

TEST(Trainer, LossDecreasesOnToyCorpus) {
    tok::TokenizerModel m(tiny());
    TrainConfig t = quick();
    t.schedule = {3e-3, 5, 200, 1e-3};
    TokenizerTrainer tr(m, t, toy_corpus(2, 8));
    double first = 0.0, last = 0.0;
    for (int s = 0; s < 60; ++s) {
        const double l = tr.step().loss;
        if (s < 10) first += l;
        if (s >= 50) last += l;
    }
    EXPECT_LT(last, 0.8 * first);
}

TEST(Trainer, MetricsAreConsistent) {
    tok::TokenizerModel m(tiny());
    TokenizerTrainer tr(m, quick(), toy_corpus(3, 8));
    std::size_t seen = 0;
    for (int s = 0; s < 5; ++s) {
        const StepMetrics mt = tr.step();
        EXPECT_EQ(mt.step, static_cast<std::uint64_t>(s));
        EXPECT_EQ(mt.lr, lr_at(static_cast<std::uint64_t>(s), quick()));
        EXPECT_GT(mt.codebook_usage, 0.0);
        EXPECT_LE(mt.codebook_usage, 1.0);
        EXPECT_GE(mt.codes_seen, seen);
        EXPECT_LE(mt.codebook_usage * 1000.0, static_cast<double>(mt.codes_seen) + 1e-9);
        seen = mt.codes_seen;
        EXPECT_EQ(mt.loss, mt.flow_loss);
        const auto j = to_json(mt);
        for (const char* k : {"step", "loss", "lr", "grad_norm", "codebook_usage"}) EXPECT_TRUE(j.contains(k)) << k;
    }
    EXPECT_EQ(tr.codes_seen().size(), seen);
}

TEST(Trainer, RegularizerOnlyTrainsWhenWeighted) {
    const auto corpus = toy_corpus(2, 8);
    {
        tok::TokenizerModel m(tiny());
        prior::PriorModel reg(regularizer_config(m.config(), 3));
        const Tensor before = reg.store().entries()[0].param.value();
        TokenizerTrainer tr(m, quick(), corpus, &reg);
        tr.step();
        const StepMetrics mt = tr.step();
        EXPECT_EQ(mt.reg_loss, 0.0);
        for (const auto& e : reg.store().entries()) {
            for (double g : e.param.grad().data()) ASSERT_EQ(g, 0.0) << e.name;
        }
        EXPECT_EQ(reg.store().entries()[0].param.value(), before);
    }
    {
        tok::TokenizerModel m(tiny());
        prior::PriorModel reg(regularizer_config(m.config(), 3));
        const Tensor before = reg.store().get("prior.in_proj.weight").value();
        TrainConfig t = quick();
        t.gpt_reg_weight = 0.1;
        TokenizerTrainer tr(m, t, corpus, &reg);
        tr.step();  // lr is 0 at step 0
        const StepMetrics mt = tr.step();
        EXPECT_GT(mt.reg_loss, 0.0);
        EXPECT_NEAR(mt.loss, mt.flow_loss + 0.1 * mt.reg_loss, 1e-12);
        EXPECT_GT(num::max_abs_diff(reg.store().get("prior.in_proj.weight").value(), before), 0.0);
    }
}

TEST(Trainer, SelfConditioningAndThreeAtoms) {
    tok::TokenizerConfig c = tiny();
    c.self_conditioning = true;
    c.atoms = 3;
    tok::TokenizerModel m(c);
    TrainConfig t = quick();
    t.self_cond_prob = 1.0;
    TokenizerTrainer tr(m, t, toy_corpus(2, 6, 3));
    EXPECT_TRUE(std::isfinite(tr.step().loss));
}

TEST(Trainer, RejectsBadInputs) {
    tok::TokenizerModel m(tiny());
    EXPECT_THROW(TokenizerTrainer(m, quick(), {}), UserError);
    EXPECT_THROW(TokenizerTrainer(m, quick(), toy_corpus(1, 6, 3)), UserError);
    EXPECT_THROW(TokenizerTrainer(m, quick(), toy_corpus(1, 17)), UserError);
    TrainConfig t = quick();
    t.gpt_reg_weight = 0.5;
    EXPECT_THROW(TokenizerTrainer(m, t, toy_corpus(1, 6)), UserError);
    prior::PriorConfig wrong = regularizer_config(m.config(), 0);
    wrong.codebook = 10;
    prior::PriorModel reg(wrong);
    EXPECT_THROW(TokenizerTrainer(m, quick(), toy_corpus(1, 6), &reg), UserError);
}

// --- codebook accounting ---------------------------------------------------------------

TEST(Codebook, ScanCountsDistinctCodes) {
    const std::vector<std::vector<std::int64_t>> codes{{1, 1, 2}, {2, 3}, {1}, {7, 8, 3}};
    EXPECT_EQ(codebook_scan(codes), (std::vector<std::size_t>{2, 3, 3, 5}));
    tok::TokenizerModel m(tiny());
    const auto corpus = toy_corpus(4, 9);
    const auto toks = tokenize(m, corpus);
    ASSERT_EQ(toks.size(), 4u);
    const auto scan = codebook_scan(toks);
    std::set<std::int64_t> all;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        EXPECT_EQ(toks[i].size(), 9u);
        all.insert(toks[i].begin(), toks[i].end());
        EXPECT_EQ(scan[i], all.size());
        if (i) EXPECT_GE(scan[i], scan[i - 1]);
    }
}

}  // namespace
}  // namespace flowtok::flow
