// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "flowtok/error.hpp"
#include "flowtok/numerics/checkpoint.hpp"
#include "flowtok/numerics/ops.hpp"
#include "flowtok/numerics/optim.hpp"
#include "flowtok/numerics/rng.hpp"
#include "gradcheck.hpp"

using namespace flowtok;
using num::Shape;
using num::Tensor;
using num::Var;
using check::grad_check;
using check::weighted_sum;

namespace {

constexpr double kGradTol = 1e-6;

Tensor randn(const Shape& s, std::uint64_t seed) {
    num::Rng rng(seed);
    return rng.normal_tensor(s);
}

// Shapes up to rank 4 used by the elementwise checks.
const std::vector<Shape> kShapes = {{5}, {3, 4}, {2, 3, 4}, {2, 2, 3, 3}};

}  // namespace

TEST(Tensor, ConstructionValidatesSize) {
    EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<double>(5)), num::ShapeError);
    Tensor t(Shape{2, 3}, 1.5);
    EXPECT_EQ(t.size(), 6u);
    EXPECT_EQ(t.rank(), 2u);
    EXPECT_DOUBLE_EQ(t[5], 1.5);
    EXPECT_THROW(t.reshaped({4}), num::ShapeError);
    EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
}

TEST(Tensor, ShapeErrorNamesOperationAndShapes) {
    Var a(Tensor(Shape{2, 3}), true), b(Tensor(Shape{4, 5}), true);
    try {
        num::matmul(a, b);
        FAIL() << "expected ShapeError";
    } catch (const num::ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("matmul"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[4, 5]"), std::string::npos) << msg;
    }
}

class ElementwiseGrad : public ::testing::TestWithParam<Shape> {};

TEST_P(ElementwiseGrad, UnaryOps) {
    const Shape s = GetParam();
    using F = Var (*)(const Var&);
    const std::vector<std::pair<const char*, F>> ops = {
        {"neg", num::neg}, {"square", num::square}, {"tanh", num::tanh}, {"silu", num::silu}, {"gelu", num::gelu},
        {"softmax", num::softmax}, {"layer_norm", [](const Var& x) { return num::layer_norm(x); }},
        {"scale", [](const Var& x) { return num::scale(x, -2.5); }},
        {"add_scalar", [](const Var& x) { return num::add_scalar(x, 0.7); }},
    };
    for (const auto& [name, f] : ops) {
        auto r = grad_check([&](const std::vector<Var>& v) { return weighted_sum(f(v[0])); }, {randn(s, 3)});
        EXPECT_LT(r.max_rel_error, kGradTol) << name << " on " << num::shape_str(s);
    }
}

TEST_P(ElementwiseGrad, BinaryOpsSameShapeAndBroadcast) {
    const Shape s = GetParam();
    Shape row{s.back()};
    using F = Var (*)(const Var&, const Var&);
    const std::vector<std::pair<const char*, F>> ops = {{"add", num::add}, {"sub", num::sub}, {"mul", num::mul}};
    for (const auto& [name, f] : ops) {
        auto same = grad_check([&](const std::vector<Var>& v) { return weighted_sum(f(v[0], v[1])); },
                               {randn(s, 1), randn(s, 2)});
        EXPECT_LT(same.max_rel_error, kGradTol) << name;
        auto bc = grad_check([&](const std::vector<Var>& v) { return weighted_sum(f(v[0], v[1])); },
                             {randn(s, 1), randn(row, 2)});
        EXPECT_LT(bc.max_rel_error, kGradTol) << name << " broadcast";
    }
}

TEST_P(ElementwiseGrad, Reductions) {
    const Shape s = GetParam();
    auto r1 = grad_check([](const std::vector<Var>& v) { return num::sum(num::square(v[0])); }, {randn(s, 4)});
    auto r2 = grad_check([](const std::vector<Var>& v) { return num::mean(num::tanh(v[0])); }, {randn(s, 5)});
    auto r3 = grad_check([](const std::vector<Var>& v) { return num::mse(v[0], v[1]); }, {randn(s, 6), randn(s, 7)});
    EXPECT_LT(r1.max_rel_error, kGradTol);
    EXPECT_LT(r2.max_rel_error, kGradTol);
    EXPECT_LT(r3.max_rel_error, kGradTol);
}

INSTANTIATE_TEST_SUITE_P(Shapes, ElementwiseGrad, ::testing::ValuesIn(kShapes));

TEST(Broadcast, MiddleAxisAndScalar) {
    auto r = grad_check([](const std::vector<Var>& v) { return weighted_sum(num::mul(v[0], v[1])); },
                        {randn({2, 3, 4}, 1), randn({2, 1, 4}, 2)});
    EXPECT_LT(r.max_rel_error, kGradTol);
    auto r2 = grad_check([](const std::vector<Var>& v) { return weighted_sum(num::add(v[0], v[1])); },
                         {randn({3, 4}, 1), randn({1}, 2)});
    EXPECT_LT(r2.max_rel_error, kGradTol);
    Var a(randn({2, 3}, 1)), b(randn({4}, 2));
    EXPECT_THROW(num::add(a, b), num::ShapeError);
}

TEST(MatrixOps, MatmulValueAndGrad) {
    Var a(Tensor(Shape{2, 2}, {1, 2, 3, 4})), b(Tensor(Shape{2, 2}, {5, 6, 7, 8}));
    EXPECT_EQ(num::matmul(a, b).value().storage(), (std::vector<double>{19, 22, 43, 50}));
    auto r = grad_check([](const std::vector<Var>& v) { return weighted_sum(num::matmul(v[0], v[1])); },
                        {randn({2, 3, 5}, 1), randn({5, 4}, 2)});
    EXPECT_LT(r.max_rel_error, kGradTol);
}

TEST(MatrixOps, BatchedMatmulGrad) {
    for (bool tb : {false, true}) {
        Shape bs = tb ? Shape{2, 3, 6, 5} : Shape{2, 3, 5, 6};
        auto r = grad_check(
            [tb](const std::vector<Var>& v) { return weighted_sum(num::bmm(v[0], v[1], tb)); },
            {randn({2, 3, 4, 5}, 1), randn(bs, 2)});
        EXPECT_LT(r.max_rel_error, kGradTol) << "transpose_b=" << tb;
    }
    EXPECT_THROW(num::bmm(Var(randn({2, 4, 5}, 1)), Var(randn({3, 5, 2}, 1))), num::ShapeError);
}

TEST(ShapeOps, PermuteReshapeConcatSliceGrad) {
    auto rp = grad_check(
        [](const std::vector<Var>& v) { return weighted_sum(num::permute(v[0], {2, 0, 3, 1})); },
        {randn({2, 3, 4, 5}, 1)});
    EXPECT_LT(rp.max_rel_error, kGradTol);
    auto rr = grad_check(
        [](const std::vector<Var>& v) { return weighted_sum(num::tanh(num::reshape(v[0], {6, 4}))); },
        {randn({2, 3, 4}, 1)});
    EXPECT_LT(rr.max_rel_error, kGradTol);
    for (std::size_t axis : {0u, 1u, 2u}) {
        Shape s2{2, 3, 4};
        s2[axis] = 2;
        auto rc = grad_check(
            [axis](const std::vector<Var>& v) { return weighted_sum(num::concat({v[0], v[1]}, axis)); },
            {randn({2, 3, 4}, 1), randn(s2, 2)});
        EXPECT_LT(rc.max_rel_error, kGradTol) << "concat axis " << axis;
        auto rs = grad_check(
            [axis](const std::vector<Var>& v) { return weighted_sum(num::slice(v[0], axis, 1, 1)); },
            {randn({2, 3, 4}, 1)});
        EXPECT_LT(rs.max_rel_error, kGradTol) << "slice axis " << axis;
    }
    EXPECT_THROW(num::slice(Var(randn({2, 3}, 1)), 1, 2, 2), num::ShapeError);
}

TEST(ShapeOps, PermuteValues) {
    Var a(Tensor(Shape{2, 3}, {0, 1, 2, 3, 4, 5}));
    EXPECT_EQ(num::permute(a, {1, 0}).value().storage(), (std::vector<double>{0, 3, 1, 4, 2, 5}));
}

TEST(Embedding, GatherAndScatterGrad) {
    const std::vector<std::int64_t> idx{2, 0, 2, 1};
    auto r = grad_check(
        [&](const std::vector<Var>& v) { return weighted_sum(num::embedding(v[0], idx, {2, 2})); },
        {randn({3, 4}, 1)});
    EXPECT_LT(r.max_rel_error, kGradTol);
    const std::vector<std::int64_t> bad{3};
    EXPECT_THROW(num::embedding(Var(randn({3, 4}, 1)), bad, {1}), std::out_of_range);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
    Tensor x = randn({4, 7}, 11);
    Tensor y = num::softmax(Var(x)).value();
    for (std::size_t r = 0; r < 4; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < 7; ++c) s += y[r * 7 + c];
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
    Tensor shifted = x;
    for (auto& v : shifted.data()) v += 1000.0;
    EXPECT_LT(num::max_abs_diff(num::softmax(Var(shifted)).value(), y), 1e-12);
    Tensor masked = x;
    masked[0] = -1e9;
    EXPECT_NEAR(num::softmax(Var(masked)).value()[0], 0.0, 1e-300);
}

TEST(LayerNorm, ZeroMeanUnitVarianceAndConstantRows) {
    Tensor x = randn({3, 16}, 5);
    Tensor y = num::layer_norm(Var(x)).value();
    for (std::size_t r = 0; r < 3; ++r) {
        double m = 0, v = 0;
        for (std::size_t c = 0; c < 16; ++c) m += y[r * 16 + c];
        m /= 16;
        for (std::size_t c = 0; c < 16; ++c) v += (y[r * 16 + c] - m) * (y[r * 16 + c] - m);
        v /= 16;
        EXPECT_NEAR(m, 0.0, 1e-12);
        EXPECT_NEAR(v, 1.0, 1e-4);
    }
    Tensor flat(Shape{1, 8}, 3.0);
    const Tensor normed = num::layer_norm(Var(flat)).value();
    for (double v : normed.data()) EXPECT_EQ(v, 0.0);
}

TEST(CrossEntropy, MatchesLogSoftmaxAndIgnoresPadding) {
    Tensor logits(Shape{2, 3}, {1.0, 2.0, 3.0, 0.0, 0.0, 0.0});
    const std::vector<std::int64_t> t{2, -1};
    const double expected = -(3.0 - std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
    EXPECT_NEAR(num::cross_entropy(Var(logits), t).value().item(), expected, 1e-12);
    const std::vector<std::int64_t> t2{0, 1, 2, -1, 1};
    auto r = grad_check([&](const std::vector<Var>& v) { return num::cross_entropy(v[0], t2); },
                        {randn({5, 6}, 3)});
    EXPECT_LT(r.max_rel_error, kGradTol);
    const std::vector<std::int64_t> bad{0, 3};
    EXPECT_THROW(num::cross_entropy(Var(logits), bad), std::out_of_range);
}

TEST(Rope, PreservesNormAndIsRelative) {
    const std::vector<std::int64_t> pos{0, 1, 2, 3, 4};
    Tensor x = randn({2, 5, 8}, 9);
    Tensor y = num::rope(Var(x), pos).value();
    for (std::size_t r = 0; r < 10; ++r) {
        double nx = 0, ny = 0;
        for (std::size_t c = 0; c < 8; ++c) {
            nx += x[r * 8 + c] * x[r * 8 + c];
            ny += y[r * 8 + c] * y[r * 8 + c];
        }
        EXPECT_NEAR(nx, ny, 1e-10);
    }
    // q_i . k_j depends only on i - j: shifting all positions leaves scores unchanged.
    const std::vector<std::int64_t> shifted{7, 8, 9, 10, 11};
    Var q(randn({5, 8}, 1)), k(randn({5, 8}, 2));
    Tensor s1 = num::bmm(num::rope(q, pos), num::rope(k, pos), true).value();
    Tensor s2 = num::bmm(num::rope(q, shifted), num::rope(k, shifted), true).value();
    EXPECT_LT(num::max_abs_diff(s1, s2), 1e-10);
    auto r = grad_check([&](const std::vector<Var>& v) { return weighted_sum(num::rope(v[0], pos)); },
                        {randn({2, 5, 8}, 4)});
    EXPECT_LT(r.max_rel_error, kGradTol);
}

TEST(StraightThrough, RoundPassesGradientUnchanged) {
    Var x(Tensor::from({0.2, 1.7, -2.6}), true);
    Var y = num::round_ste(x);
    EXPECT_EQ(y.value().storage(), (std::vector<double>{0.0, 2.0, -3.0}));
    num::backward(num::sum(num::scale(y, 3.0)));
    EXPECT_EQ(x.grad().storage(), (std::vector<double>{3.0, 3.0, 3.0}));
}

TEST(StopGradient, BlocksBackward) {
    Var x(Tensor::from({1.0, 2.0}), true);
    Var y = num::add(num::mul(x, x), num::stop_gradient(num::scale(x, 10.0)));
    num::backward(num::sum(y));
    EXPECT_EQ(x.grad().storage(), (std::vector<double>{2.0, 4.0}));
}

TEST(Dropout, IdentityAtZeroAndUnbiased) {
    num::Rng rng(1);
    Var x(Tensor(Shape{20000}, 1.0));
    EXPECT_EQ(num::dropout(x, 0.0, rng).value(), x.value());
    Tensor y = num::dropout(x, 0.25, rng).value();
    const double m = std::accumulate(y.storage().begin(), y.storage().end(), 0.0) / 20000.0;
    EXPECT_NEAR(m, 1.0, 0.03);
}

TEST(Autograd, TwoLayerMlpMatchesFiniteDifferences) {
    auto r = grad_check(
        [](const std::vector<Var>& v) {
            Var h = num::tanh(num::add(num::matmul(v[0], v[1]), v[2]));
            return num::mean(num::square(num::matmul(h, v[3])));
        },
        {randn({4, 5}, 1), randn({5, 7}, 2), randn({7}, 3), randn({7, 2}, 4)}, 1e-5, 1000);
    EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Autograd, SimpleLosses) {
    Var p(Tensor::from({1.0, -2.0, 3.0}), true);
    num::backward(num::sum(p));
    EXPECT_EQ(p.grad().storage(), (std::vector<double>{1.0, 1.0, 1.0}));
    p.zero_grad();
    num::backward(num::sum(num::square(p)));
    EXPECT_EQ(p.grad().storage(), (std::vector<double>{2.0, -4.0, 6.0}));
}

TEST(Autograd, BackwardRequiresScalarAndGraph) {
    Var x(Tensor::from({1.0, 2.0}), true);
    EXPECT_THROW(num::backward(num::square(x)), num::ShapeError);
    EXPECT_THROW(num::backward(Var(Tensor::scalar(1.0))), std::logic_error);
    {
        num::NoGradGuard guard;
        Var y = num::sum(num::square(x));
        EXPECT_FALSE(y.requires_grad());
    }
    EXPECT_TRUE(num::grad_enabled());
}

TEST(Autograd, ReusedNodeAccumulates) {
    Var x(Tensor::from({3.0}), true);
    Var y = num::mul(x, x);
    Var z = num::add(y, y);  // 2 x^2
    num::backward(num::sum(z));
    EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Rng, SeededStreamsAreReproducible) {
    num::Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
    EXPECT_NE(num::Rng(42).next_u64(), c.next_u64());
    num::Rng f1 = num::Rng(7).fork(1), f2 = num::Rng(7).fork(2);
    EXPECT_NE(f1.next_u64(), f2.next_u64());
}

TEST(Rng, NormalMoments) {
    num::Rng rng(2024);
    const int n = 100000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        s += z;
        s2 += z * z;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    EXPECT_LT(std::abs(mean), 0.02);
    EXPECT_LT(std::abs(var - 1.0), 0.03);
}

TEST(Rng, UniformRangeAndCategorical) {
    num::Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
    const std::vector<double> one_hot{1.0, 0.0, 0.0};
    for (int i = 0; i < 100; ++i) EXPECT_EQ(rng.categorical(one_hot), 0u);
    const std::vector<double> w{1.0, 3.0};
    int ones = 0;
    for (int i = 0; i < 20000; ++i) ones += static_cast<int>(rng.categorical(w));
    EXPECT_NEAR(ones / 20000.0, 0.75, 0.015);
    EXPECT_THROW(rng.categorical(std::vector<double>{0.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(rng.categorical(std::vector<double>{1.0, -1.0}), std::invalid_argument);
    EXPECT_THROW(rng.categorical(std::vector<double>{1.0, NAN}), std::invalid_argument);
}

TEST(LrSchedule, WarmupCosineFloor) {
    const num::LrSchedule s;  // 1.7e-4, warmup 1000, decay 100000, floor 1e-4
    EXPECT_EQ(s.at(0), 0.0);
    EXPECT_NEAR(s.at(500), 0.85e-4, 1e-18);
    EXPECT_NEAR(s.at(1000), 1.7e-4, 1e-18);
    EXPECT_NEAR(s.at(50500), 1.35e-4, 1e-15);  // cosine midpoint
    EXPECT_NEAR(s.at(100000), 1e-4, 1e-18);
    EXPECT_EQ(s.at(250000), 1e-4);
    for (std::uint64_t k = 1000; k < 100000; k += 997) EXPECT_LE(s.at(k + 997), s.at(k));
    EXPECT_THROW((num::LrSchedule{1e-3, 10, 10, 0.0}.validate()), flowtok::UserError);
    EXPECT_THROW((num::LrSchedule{1e-3, 1, 10, 2e-3}.validate()), flowtok::UserError);
}

TEST(AdamW, QuadraticConverges) {
    // Reference loop (same update in numpy) ends at |p| = 4.93e-5.
    num::ParameterStore store;
    Var p = store.add("p", Tensor::from({1.0, 1.0, 1.0}));
    num::AdamWConfig cfg;
    cfg.lr = 0.1;
    for (int i = 0; i < 200; ++i) {
        num::backward(num::sum(num::square(p)));
        num::adamw_step(store, cfg);
    }
    double norm = 0;
    for (double v : p.value().data()) norm += v * v;
    EXPECT_LT(std::sqrt(norm), 1e-3);
    EXPECT_EQ(store.step(), 200u);
}

TEST(AdamW, ZeroGradientIsNoOp) {
    num::ParameterStore store;
    Var p = store.add("p", Tensor::from({1.0, -3.0}));
    num::adamw_step(store, {});
    EXPECT_EQ(p.value().storage(), (std::vector<double>{1.0, -3.0}));
}

TEST(AdamW, FirstStepMovesByLearningRate) {
    // Bias-corrected Adam moves each coordinate by lr * sign(g) on step one.
    num::ParameterStore store;
    Var p = store.add("p", Tensor::from({1.0, -1.0}));
    num::AdamWConfig cfg;
    cfg.lr = 0.01;
    num::backward(num::sum(num::scale(p, 5.0)));
    num::adamw_step(store, cfg);
    EXPECT_NEAR(p.value()[0], 0.99, 1e-9);
    EXPECT_NEAR(p.value()[1], -1.01, 1e-9);
}

TEST(AdamW, ClipsGlobalNormAndDecaysWeights) {
    num::ParameterStore store;
    Var p = store.add("p", Tensor::from({3.0, 4.0}));
    num::AdamWConfig cfg;
    cfg.clip = 1.0;
    num::backward(num::sum(num::mul(p, num::constant(Tensor::from({3.0, 4.0})))));
    auto stats = num::adamw_step(store, cfg);
    EXPECT_NEAR(stats.grad_norm, 5.0, 1e-12);
    EXPECT_NEAR(stats.clip_scale, 0.2, 1e-12);

    num::ParameterStore wd_store;
    Var q = wd_store.add("q", Tensor::from({2.0}));
    num::AdamWConfig wd;
    wd.lr = 0.1;
    wd.weight_decay = 0.5;
    num::backward(num::sum(num::scale(q, 0.0)));
    num::adamw_step(wd_store, wd);
    EXPECT_NEAR(q.value()[0], 2.0 * (1 - 0.05), 1e-12);
}

TEST(AdamW, NonFiniteGradientIsReported) {
    num::ParameterStore store;
    Var p = store.add("layer.weight", Tensor::from({1.0}));
    p.grad_buffer()[0] = NAN;
    try {
        num::adamw_step(store, {});
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("layer.weight"), std::string::npos);
    }
    EXPECT_EQ(p.value()[0], 1.0);
}

TEST(ParameterStore, RejectsDuplicates) {
    num::ParameterStore store;
    store.add("a", Tensor::from({1.0}));
    EXPECT_THROW(store.add("a", Tensor::from({1.0})), std::invalid_argument);
    EXPECT_EQ(store.parameter_count(), 1u);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    num::ParameterStore store;
    store.add("w", randn({3, 4}, 1));
    store.add("b", randn({4}, 2));
    num::backward(num::sum(num::square(store.get("w"))));
    num::adamw_step(store, {});
    const auto path = std::filesystem::temp_directory_path() / "flowtok_ckpt_test.bin";
    num::save_checkpoint(path, store, {{"kind", "test"}});

    num::ParameterStore other;
    other.add("w", Tensor(Shape{3, 4}));
    other.add("b", Tensor(Shape{4}));
    auto ckpt = num::read_checkpoint(path);
    EXPECT_EQ(ckpt.meta["kind"], "test");
    num::restore(ckpt, other);
    EXPECT_EQ(other.step(), store.step());
    for (const auto& name : store.names()) {
        EXPECT_EQ(other.get(name).value(), store.get(name).value());
        EXPECT_EQ(other.entry(name).first_moment, store.entry(name).first_moment);
        EXPECT_EQ(other.entry(name).second_moment, store.entry(name).second_moment);
    }

    num::ParameterStore wrong;
    wrong.add("w", Tensor(Shape{4, 3}));
    wrong.add("b", Tensor(Shape{4}));
    EXPECT_THROW(num::restore(ckpt, wrong), UserError);
    std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
    const auto path = std::filesystem::temp_directory_path() / "flowtok_ckpt_bad.bin";
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTACKPT-and-some-bytes";
    }
    EXPECT_THROW(num::read_checkpoint(path), UserError);
    num::ParameterStore store;
    store.add("w", randn({8}, 1));
    num::save_checkpoint(path, store, {});
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
    EXPECT_THROW(num::read_checkpoint(path), UserError);
    EXPECT_THROW(num::read_checkpoint(path.string() + ".missing"), UserError);
    std::filesystem::remove(path);
}
