#include "criacl/errors.hpp"
#include "criacl/tensor_util.hpp"
#include "criacl/trainer.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace criacl;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.generator.num_rrdb = 1;
    cfg.generator.base_channels = 8;
    cfg.generator.growth_channels = 4;
    cfg.generator.head_channels = 4;
    cfg.generator.mask_channels = 8;
    cfg.discriminator.base_channels = 8;
    cfg.extractor.channel_widths = {4, 8};
    cfg.batch_size = 2;
    cfg.patch_size = 16;
    cfg.total_iters = 6;
    cfg.checkpoint_every = 0;
    cfg.val_every = 0;
    return cfg;
}

PairedDataset tiny_dataset(int count = 4) {
    std::vector<PairRecord> records(count);
    std::vector<torch::Tensor> lr, hr;
    for (int i = 0; i < count; ++i) {
        hr.push_back(procedural_image(96, 100 + i));
        lr.push_back(degrade(hr.back(), DegradationSpec{}, i));
    }
    return {records, lr, hr, 4};
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("criacl_trainer_" + name);
    fs::remove_all(dir);
    return dir;
}

struct Branches {
    torch::Tensor hf, align, unif, sr;
    SpatialMasks masks;
};

Branches random_branches(int64_t size = 16) {
    torch::manual_seed(21);
    Branches b;
    b.hf = torch::rand({2, 3, size, size});
    b.align = (b.hf + 0.1 * torch::randn_like(b.hf)).clamp(0, 1);
    b.unif = (b.hf + 0.1 * torch::randn_like(b.hf)).clamp(0, 1);
    auto s = torch::rand({2, 1, size, size});
    b.masks = {s, 1.0 - s};
    b.sr = b.align * b.masks.s + b.unif * b.masks.s_hat;
    return b;
}

LossTerms loss_for(const TrainConfig& cfg, const Branches& b, TrainState& st) {
    const LogitFn logits = [&](const torch::Tensor& x) { return st.discriminator->forward(x); };
    return total_loss(b.sr, b.align, b.unif, b.masks, b.hf, cfg, st.extractor, logits);
}

}  // namespace

TEST(Schedule, HalvesEveryPeriod) {
    TrainConfig cfg;
    EXPECT_DOUBLE_EQ(lr_at(cfg, 0), 1e-4);
    cfg.lr_half_period = 200000;
    EXPECT_DOUBLE_EQ(lr_at(cfg, 450000), 2.5e-5);
    EXPECT_DOUBLE_EQ(lr_at(cfg, 199999), 1e-4);
    EXPECT_DOUBLE_EQ(lr_at(cfg, 200000), 5e-5);
}

TEST(Config, DefaultsMatchRecipe) {
    TrainConfig cfg;
    EXPECT_EQ(cfg.alpha, 0.01);
    EXPECT_EQ(cfg.beta, 1.0);
    EXPECT_EQ(cfg.gamma, 0.005);
    EXPECT_EQ(cfg.lambda_a, 0.01);
    EXPECT_EQ(cfg.lambda_u, 0.01);
    EXPECT_EQ(cfg.lr0, 1e-4);
    EXPECT_EQ(cfg.adam_beta1, 0.9);
    EXPECT_EQ(cfg.adam_beta2, 0.999);
    EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, JsonRoundTrip) {
    auto cfg = tiny_config();
    cfg.mode = TrainMode::unif_only;
    cfg.anchor = AnchorChoice::adv;
    cfg.pixel_norm = PixelNorm::l2;
    cfg.seed = 99;
    auto j = to_json(cfg);
    EXPECT_EQ(j["generator"]["num_rrdb"], 1);
    EXPECT_EQ(j["mode"], "+unif_only");
    auto back = config_from_json(j);
    EXPECT_TRUE(config_diff(cfg, back).empty());
    EXPECT_EQ(to_json(back), j);
}

TEST(Config, RegistryCoversEveryJsonKey) {
    std::size_t leaves = 0;
    std::function<void(const nlohmann::json&)> count = [&](const nlohmann::json& n) {
        for (const auto& [k, v] : n.items()) {
            if (v.is_object()) {
                count(v);
            } else {
                ++leaves;
            }
        }
    };
    count(to_json(TrainConfig{}));
    EXPECT_EQ(leaves, config_fields().size());
}

TEST(Config, UnknownAndMistypedFieldsRejected) {
    EXPECT_THROW(config_from_json(nlohmann::json{{"alhpa", 0.1}}), ConfigError);
    EXPECT_THROW(config_from_json(nlohmann::json{{"generator", {{"depth", 3}}}}), ConfigError);
    EXPECT_THROW(config_from_json(nlohmann::json{{"batch_size", 1.5}}), ConfigError);
    EXPECT_THROW(config_from_json(nlohmann::json{{"mode", "fancy"}}), ConfigError);
}

TEST(Config, SetFieldParsesText) {
    TrainConfig cfg;
    set_field(cfg, "alpha", "0.5");
    set_field(cfg, "mode", "+align_only");
    set_field(cfg, "unif_halving", "false");
    set_field(cfg, "extractor.channel_widths", "[8,16]");
    set_field(cfg, "generator.scale", "2");
    EXPECT_EQ(cfg.alpha, 0.5);
    EXPECT_EQ(cfg.mode, TrainMode::align_only);
    EXPECT_FALSE(cfg.unif_halving);
    EXPECT_EQ(cfg.extractor.channel_widths, (std::vector<int64_t>{8, 16}));
    EXPECT_EQ(cfg.generator.scale, 2);
    EXPECT_THROW(set_field(cfg, "nope", "1"), ConfigError);
}

TEST(Config, DiffNamesFields) {
    TrainConfig a, b;
    b.alpha = 0.02;
    b.total_iters = 10;
    auto d = config_diff(a, b);
    ASSERT_EQ(d.size(), 2u);
    EXPECT_NE(d[0].find("alpha"), std::string::npos);
    EXPECT_EQ(config_diff(a, b, true).size(), 1u);
}

TEST(Config, ValidationErrors) {
    auto bad = [](auto mutate) {
        TrainConfig cfg;
        mutate(cfg);
        return cfg;
    };
    EXPECT_THROW(bad([](TrainConfig& c) { c.alpha = -1; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.total_iters = 0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.generator.scale = 3; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.t = 0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.patch_size = 12; }).validate(), ConfigError);
}

TEST(TotalLoss, ZeroLambdaEqualsBaseline) {
    auto cfg = tiny_config();
    auto st = init_state(cfg);
    auto b = random_branches();
    cfg.lambda_a = cfg.lambda_u = 0.0;
    auto full = loss_for(cfg, b, st);
    cfg.mode = TrainMode::wsum_baseline;
    auto base = loss_for(cfg, b, st);
    EXPECT_EQ(full.total.item<float>(), base.total.item<float>());
    EXPECT_EQ(base.l_align.item<float>(), 0.0f);
    EXPECT_EQ(base.l_unif.item<float>(), 0.0f);
    EXPECT_GT(full.l_align.item<float>(), 0.0f);
}

TEST(TotalLoss, AlphaIsLinear) {
    auto cfg = tiny_config();
    cfg.deterministic = true;
    auto st = init_state(cfg);
    auto b = random_branches();
    for (auto& v : {&b.hf, &b.align, &b.unif, &b.sr}) *v = v->to(torch::kFloat64);
    b.masks = {b.masks.s.to(torch::kFloat64), b.masks.s_hat.to(torch::kFloat64)};
    st.discriminator->to(torch::kFloat64);
    st.extractor->to(torch::kFloat64);
    auto one = loss_for(cfg, b, st);
    cfg.alpha *= 2.0;
    auto two = loss_for(cfg, b, st);
    EXPECT_NEAR(two.total.item<double>() - one.total.item<double>(), 0.01 * one.l_pix.item<double>(), 1e-15);
    EXPECT_EQ(one.l_per.item<double>(), two.l_per.item<double>());
    EXPECT_EQ(one.l_align.item<double>(), two.l_align.item<double>());
}

TEST(TotalLoss, IdentityCaseMatchesOracle) {
    auto cfg = tiny_config();
    auto st = init_state(cfg);
    st.discriminator->to(torch::kFloat64);
    st.extractor->to(torch::kFloat64);
    torch::manual_seed(3);
    auto hf = torch::rand({2, 3, 16, 16}, torch::kFloat64);
    auto s = torch::rand({2, 1, 16, 16}, torch::kFloat64);
    SpatialMasks masks{s, 1.0 - s};
    const LogitFn logits = [&](const torch::Tensor& x) { return st.discriminator->forward(x); };
    auto terms = total_loss(hf, hf, hf, masks, hf, cfg, st.extractor, logits);
    EXPECT_EQ(terms.l_pix.item<double>(), 0.0);
    EXPECT_EQ(terms.l_per.item<double>(), 0.0);
    EXPECT_EQ(terms.l_align.item<double>(), 0.0);

    // Unif side: anchor pix = 0, negatives perc_top = 0 and adv = a.
    auto adv = oracle::adversarial_map(oracle::from_tensor(st.discriminator->forward(hf)), 16, 16);
    const double mean_adv = adv.mean();
    auto unif = adv;
    for (auto& v : unif.v) v = oracle::unif(0.0, {0.0, v}, cfg.t);
    oracle::Grid zero(2, 1, 16, 16);
    auto shat = oracle::from_tensor(1.0 - s);
    const double comparative = oracle::combine(zero, unif, zero, shat, cfg.lambda_a, cfg.lambda_u, true);
    const double want = cfg.gamma * mean_adv + comparative;
    EXPECT_LE(std::fabs(terms.total.item<double>() - want) / want, 1e-9);
}

TEST(TotalLoss, NonFiniteTermNamed) {
    auto cfg = tiny_config();
    auto st = init_state(cfg);
    auto b = random_branches();
    b.align = b.align.clone();
    b.align[0][0][0][0] = std::nan("");
    try {
        (void)loss_for(cfg, b, st);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("l_align"), std::string::npos) << e.what();
    }
}

TEST(TrainStep, EveryGroupGetsFiniteNonzeroGradients) {
    auto cfg = tiny_config();
    auto st = init_state(cfg);
    auto b = random_branches(64);
    torch::manual_seed(4);
    auto lr = torch::rand({2, 3, 16, 16});
    auto hr = torch::rand({2, 3, 64, 64});
    auto fw = forward(st, lr);
    const LogitFn logits = [&](const torch::Tensor& x) { return st.discriminator->forward(x); };
    auto terms = total_loss(fw.sr, fw.branches.align, fw.branches.unif, fw.masks, hr, cfg, st.extractor, logits);
    terms.total.backward();
    for (auto* m : std::initializer_list<torch::nn::Module*>{st.generator.get(), st.mask_net.get()}) {
        double norm = 0.0;
        for (const auto& p : m->parameters()) {
            ASSERT_TRUE(p.grad().defined());
            EXPECT_TRUE(torch::isfinite(p.grad()).all().item<bool>());
            norm += p.grad().abs().sum().item<double>();
        }
        EXPECT_GT(norm, 0.0);
    }
    (void)b;
}

TEST(TrainStep, ReportsFiniteTermsAndSchedule) {
    auto cfg = tiny_config();
    cfg.lr_half_period = 2;
    auto st = init_state(cfg);
    auto ds = tiny_dataset();
    BatchStream stream(ds, cfg.batch_size, cfg.patch_size, cfg.seed);
    for (int i = 0; i < 5; ++i) {
        auto r = train_step(st, stream.batch(i));
        EXPECT_EQ(r.iteration, i);
        EXPECT_EQ(r.lr, 1e-4 * std::pow(0.5, i / 2));
        for (double v : {r.l_pix, r.l_per, r.l_adv, r.l_align, r.l_unif, r.total, r.d_loss}) {
            EXPECT_TRUE(std::isfinite(v));
        }
    }
    EXPECT_EQ(st.iteration, 5);
}

TEST(TrainStep, NoMasksLeavesMaskNetUntouched) {
    auto cfg = tiny_config();
    cfg.mode = TrainMode::no_masks;
    auto st = init_state(cfg);
    auto ds = tiny_dataset();
    BatchStream stream(ds, cfg.batch_size, cfg.patch_size, cfg.seed);
    const auto before = parameter_checksum(*st.mask_net);
    for (int i = 0; i < 2; ++i) {
        auto r = train_step(st, stream.batch(i));
        EXPECT_GT(r.l_align, 0.0);
        for (const auto& p : st.mask_net->parameters()) {
            EXPECT_TRUE(!p.grad().defined() || p.grad().abs().max().item<float>() == 0.0f);
        }
    }
    EXPECT_EQ(before, parameter_checksum(*st.mask_net));
}

TEST(TrainStep, BaselineReportsZeroComparativeTerms) {
    auto cfg = tiny_config();
    cfg.mode = TrainMode::wsum_baseline;
    auto st = init_state(cfg);
    auto ds = tiny_dataset();
    BatchStream stream(ds, cfg.batch_size, cfg.patch_size, cfg.seed);
    auto r = train_step(st, stream.batch(0));
    EXPECT_EQ(r.l_align, 0.0);
    EXPECT_EQ(r.l_unif, 0.0);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    auto cfg = tiny_config();
    auto st = init_state(cfg);
    auto ds = tiny_dataset();
    BatchStream stream(ds, cfg.batch_size, cfg.patch_size, cfg.seed);
    for (int i = 0; i < 3; ++i) train_step(st, stream.batch(i));
    const auto dir = scratch("ckpt");
    save_checkpoint(st, dir / "a.pt");
    auto loaded = load_checkpoint(dir / "a.pt");
    EXPECT_EQ(loaded.iteration, 3);
    EXPECT_EQ(model_checksum(loaded), model_checksum(st));
    EXPECT_TRUE(config_diff(loaded.config, st.config).empty());
    auto r1 = train_step(st, stream.batch(3));
    auto r2 = train_step(loaded, stream.batch(3));
    EXPECT_EQ(r1.total, r2.total);
    EXPECT_EQ(model_checksum(loaded), model_checksum(st));
    fs::remove_all(dir);
}

TEST(Fit, ResumeMatchesUninterrupted) {
    auto cfg = tiny_config();
    auto ds = tiny_dataset();
    const auto a = scratch("full");
    const auto b = scratch("resumed");
    auto full = fit(cfg, ds, {a});
    FitOptions first{b};
    first.stop_after = 3;
    auto partial = fit(cfg, ds, first);
    EXPECT_EQ(partial.iterations, 3);
    FitOptions second{b};
    second.resume_from = partial.final_checkpoint;
    auto resumed = fit(cfg, ds, second);
    EXPECT_EQ(resumed.iterations, cfg.total_iters);
    EXPECT_EQ(model_checksum(load_checkpoint(full.final_checkpoint)),
              model_checksum(load_checkpoint(resumed.final_checkpoint)));

    std::ifstream la(full.log_path), lb(resumed.log_path);
    std::string all_a((std::istreambuf_iterator<char>(la)), {});
    std::string all_b((std::istreambuf_iterator<char>(lb)), {});
    std::vector<std::string> rows_a, rows_b;
    for (auto* p : {&all_a, &all_b}) {
        std::istringstream in(*p);
        std::string line;
        auto& rows = p == &all_a ? rows_a : rows_b;
        while (std::getline(in, line)) rows.push_back(line.substr(0, line.find(',', line.find(',') + 1)));
    }
    EXPECT_EQ(rows_a, rows_b);
    EXPECT_EQ(rows_a.size(), static_cast<std::size_t>(cfg.total_iters + 1));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Fit, ResumeWithDifferentConfigRefused) {
    auto cfg = tiny_config();
    cfg.total_iters = 2;
    auto ds = tiny_dataset();
    const auto dir = scratch("refuse");
    auto done = fit(cfg, ds, {dir});
    auto changed = cfg;
    changed.alpha = 0.5;
    changed.total_iters = 4;
    FitOptions opts{dir};
    opts.resume_from = done.final_checkpoint;
    try {
        fit(changed, ds, opts);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("alpha"), std::string::npos) << msg;
        EXPECT_EQ(msg.find("total_iters"), std::string::npos) << msg;
    }
    fs::remove_all(dir);
}

TEST(Fit, ValidationColumnAndHeader) {
    auto cfg = tiny_config();
    cfg.total_iters = 4;
    cfg.val_every = 2;
    auto ds = tiny_dataset(5);
    auto val = ds.slice(4, 1);
    const auto dir = scratch("val");
    FitOptions opts{dir};
    opts.validation = &val;
    auto res = fit(cfg, ds.slice(0, 4), opts);
    std::ifstream in(res.log_path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, kMetricsHeader);
    int rows = 0, with_val = 0;
    while (std::getline(in, line)) {
        ++rows;
        if (line.back() != ',') ++with_val;
    }
    EXPECT_EQ(rows, 4);
    EXPECT_EQ(with_val, 2);
    EXPECT_TRUE(fs::exists(dir / "model.pt"));
    EXPECT_TRUE(fs::exists(dir / "run.json"));
    fs::remove_all(dir);
}
