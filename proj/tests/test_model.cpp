#include "criacl/data.hpp"
#include "criacl/errors.hpp"
#include "criacl/model.hpp"

#include <gtest/gtest.h>

using namespace criacl;

namespace {

GeneratorConfig small_generator() {
    GeneratorConfig cfg;
    cfg.num_rrdb = 1;
    cfg.base_channels = 8;
    cfg.growth_channels = 4;
    cfg.head_channels = 4;
    cfg.mask_channels = 8;
    return cfg;
}

}  // namespace

TEST(Generator, OutputShapes) {
    torch::manual_seed(0);
    Generator gen(GeneratorConfig{});
    torch::NoGradGuard guard;
    auto out = gen->forward(torch::rand({2, 3, 32, 32}));
    EXPECT_EQ(out.align.sizes(), (std::vector<int64_t>{2, 3, 128, 128}));
    EXPECT_EQ(out.unif.sizes(), (std::vector<int64_t>{2, 3, 128, 128}));
}

TEST(Generator, ScaleTwo) {
    auto cfg = small_generator();
    cfg.scale = 2;
    Generator gen(cfg);
    torch::NoGradGuard guard;
    auto out = gen->forward(torch::rand({1, 3, 16, 24}));
    EXPECT_EQ(out.align.sizes(), (std::vector<int64_t>{1, 3, 32, 48}));
}

TEST(Generator, Deterministic) {
    torch::manual_seed(1);
    Generator gen(small_generator());
    torch::NoGradGuard guard;
    auto x = torch::rand({1, 3, 16, 16});
    auto a = gen->forward(x);
    auto b = gen->forward(x);
    EXPECT_TRUE(torch::equal(a.align, b.align));
    EXPECT_TRUE(torch::equal(a.unif, b.unif));
}

TEST(Generator, TrunkGradientNonzero) {
    torch::manual_seed(2);
    Generator gen(small_generator());
    gen->forward(torch::rand({1, 3, 16, 16})).align.mean().backward();
    int trunk_params = 0;
    for (const auto& item : gen->named_parameters()) {
        if (item.key().rfind("rrdb", 0) != 0) continue;
        ++trunk_params;
        ASSERT_TRUE(item.value().grad().defined()) << item.key();
    }
    ASSERT_GT(trunk_params, 0);
    double norm = 0.0;
    for (const auto& item : gen->named_parameters()) {
        if (item.key().rfind("rrdb", 0) == 0) norm += item.value().grad().abs().sum().item<double>();
    }
    EXPECT_GT(norm, 0.0);
}

TEST(Generator, TooSmallInputRejected) {
    Generator gen(small_generator());
    EXPECT_THROW(gen->forward(torch::rand({1, 3, 15, 32})), ShapeError);
}

TEST(Generator, ConfigValidation) {
    auto cfg = small_generator();
    cfg.scale = 3;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = small_generator();
    cfg.num_rrdb = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = small_generator();
    cfg.branch_blocks = 2;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(MaskNet, PartitionOfUnity) {
    torch::manual_seed(3);
    MaskNet net(small_generator());
    torch::NoGradGuard guard;
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        auto m = net->forward(torch::rand({2, 3, 16, 16}));
        EXPECT_EQ(m.s.sizes(), (std::vector<int64_t>{2, 1, 64, 64}));
        worst = std::max(worst, (m.s + m.s_hat - 1.0).abs().max().item<double>());
        EXPECT_GT(m.s.min().item<float>(), 0.0f);
        EXPECT_LT(m.s.max().item<float>(), 1.0f);
    }
    EXPECT_LE(worst, 1e-6);
}

TEST(MaskNet, ZeroLogitLayerGivesHalf) {
    MaskNet net(small_generator());
    net->zero_logit_layer();
    torch::NoGradGuard guard;
    auto m = net->forward(torch::rand({1, 3, 16, 16}));
    EXPECT_EQ((m.s - 0.5).abs().max().item<float>(), 0.0f);
    EXPECT_EQ((m.s_hat - 0.5).abs().max().item<float>(), 0.0f);
}

TEST(Compose, Identities) {
    auto a = torch::rand({2, 3, 8, 8});
    auto u = torch::rand({2, 3, 8, 8});
    EXPECT_TRUE(torch::equal(compose(a, u, SpatialMasks::uniform(2, 8, 8, 1.0)), a));
    EXPECT_TRUE(torch::equal(compose(a, u, SpatialMasks::uniform(2, 8, 8, 0.0)), u));
    auto s = torch::rand({2, 1, 8, 8}, torch::kFloat64);
    auto x = torch::rand({2, 3, 8, 8}, torch::kFloat64);
    EXPECT_LE((compose(x, x, SpatialMasks{s, 1.0 - s}) - x).abs().max().item<double>(), 1e-15);
}

TEST(Compose, ShapeMismatch) {
    auto a = torch::rand({1, 3, 8, 8});
    EXPECT_THROW(compose(a, a, SpatialMasks::uniform(1, 4, 4, 0.5)), ShapeError);
    EXPECT_THROW(compose(a, torch::rand({1, 3, 8, 4}), SpatialMasks::uniform(1, 8, 8, 0.5)), ShapeError);
}

TEST(Discriminator, LogitShape) {
    Discriminator disc(DiscriminatorConfig{});
    torch::NoGradGuard guard;
    auto logits = disc->forward(torch::rand({2, 3, 128, 128}));
    EXPECT_EQ(logits.sizes(), (std::vector<int64_t>{2, 1, 16, 16}));
    EXPECT_TRUE(torch::isfinite(logits).all().item<bool>());
    Discriminator minimal(DiscriminatorConfig{3, 8});
    EXPECT_EQ(minimal->forward(torch::rand({1, 3, 32, 24})).sizes(), (std::vector<int64_t>{1, 1, 4, 3}));
}

TEST(Discriminator, Errors) {
    Discriminator disc(DiscriminatorConfig{});
    EXPECT_THROW(disc->forward(torch::rand({1, 3, 60, 64})), ShapeError);
    EXPECT_THROW((DiscriminatorConfig{2, 32}.validate()), ConfigError);
}

TEST(Discriminator, LearnsToSeparateRealFromNoise) {
    torch::manual_seed(4);
    Discriminator disc(DiscriminatorConfig{4, 8});
    torch::optim::Adam opt(disc->parameters(), torch::optim::AdamOptions(1e-3));
    std::vector<torch::Tensor> real;
    for (std::uint64_t i = 0; i < 4; ++i) real.push_back(procedural_image(32, i));
    auto real_batch = torch::stack(real);
    for (int step = 0; step < 200; ++step) {
        auto noise = torch::rand({4, 3, 32, 32});
        auto loss = discriminator_loss(disc->forward(real_batch), disc->forward(noise));
        opt.zero_grad();
        loss.backward();
        opt.step();
    }
    torch::NoGradGuard guard;
    const double real_logit = disc->forward(real_batch).mean().item<double>();
    const double noise_logit = disc->forward(torch::rand({4, 3, 32, 32})).mean().item<double>();
    EXPECT_GT(real_logit, noise_logit + 1.0);
}

TEST(ParameterCounts, MatchClosedForm) {
    for (auto cfg : {GeneratorConfig{}, small_generator()}) {
        for (std::int64_t scale : {2, 4}) {
            cfg.scale = scale;
            EXPECT_EQ(count_parameters(*Generator(cfg)), generator_parameter_count(cfg));
            EXPECT_EQ(count_parameters(*MaskNet(cfg)), mask_net_parameter_count(cfg));
        }
    }
    for (auto cfg : {DiscriminatorConfig{}, DiscriminatorConfig{3, 8}, DiscriminatorConfig{6, 16}}) {
        EXPECT_EQ(count_parameters(*Discriminator(cfg)), discriminator_parameter_count(cfg));
    }
}

TEST(ParameterCounts, DeskDefaultsHandComputed) {
    // C=32, G=16, R=4, H=16, B=3, scale 4 (U=2); M=32; c=32, L=4.
    const std::int64_t C = 32, G = 16, H = 16, M = 32, c = 32;
    std::int64_t dense = 0;
    for (int i = 0; i < 4; ++i) dense += 9 * (C + i * G) * G + G;
    dense += 9 * (C + 4 * G) * C + C;
    const std::int64_t gen = 28 * C + 4 * 3 * dense + (9 * C * C + C) + (9 * C * C + C) + (9 * C * H + H) +
                             2 * (3 * 2 * (9 * H * H + H) + 27 * H + 3);
    EXPECT_EQ(generator_parameter_count(GeneratorConfig{}), gen);
    EXPECT_EQ(mask_net_parameter_count(GeneratorConfig{}), 28 * M + 6 * (9 * M * M + M) + 18 * M + 2);
    EXPECT_EQ(discriminator_parameter_count(DiscriminatorConfig{}),
              49 * c + (32 * c * c + 2 * c) + (128 * c * c + 4 * c) + (36 * c + 1));
}
