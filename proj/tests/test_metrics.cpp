#include "criacl/criteria.hpp"
#include "criacl/errors.hpp"
#include "criacl/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace criacl;
namespace fs = std::filesystem;

namespace {

const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.generator.num_rrdb = 1;
    cfg.generator.base_channels = 8;
    cfg.generator.growth_channels = 4;
    cfg.generator.head_channels = 4;
    cfg.generator.mask_channels = 8;
    cfg.discriminator.base_channels = 8;
    cfg.patch_size = 16;
    return cfg;
}

PairedDataset corpus(int count, int64_t size) {
    std::vector<PairRecord> records(count);
    std::vector<torch::Tensor> lr, hr;
    for (int i = 0; i < count; ++i) {
        hr.push_back(procedural_image(size, 200 + i));
        lr.push_back(degrade(hr.back(), DegradationSpec{}, i));
    }
    return {records, lr, hr, 4};
}

}  // namespace

TEST(Psnr, IdentityIsCapped) {
    auto x = torch::rand({3, 16, 16});
    EXPECT_EQ(psnr(x, x), kPsnrCap);
}

TEST(Psnr, ConstantOffsets) {
    auto x = torch::rand({3, 32, 32}, kF64) * 0.8;
    EXPECT_NEAR(psnr(x, x + 0.1), 20.0, 1e-9);
    EXPECT_NEAR(psnr(x, x + 0.01), 40.0, 1e-9);
    EXPECT_NEAR(psnr(x * 255.0, x * 255.0 + 25.5, 255.0), 20.0, 1e-9);
}

TEST(Psnr, ShapeMismatch) { EXPECT_THROW(psnr(torch::rand({3, 8, 8}), torch::rand({3, 8, 9})), ShapeError); }

TEST(SsimIndex, IdentitySymmetryAndCriterionConsistency) {
    auto x = torch::rand({1, 3, 32, 32}, kF64);
    auto y = torch::rand({1, 3, 32, 32}, kF64);
    EXPECT_NEAR(ssim_index(x, x), 1.0, 1e-12);
    EXPECT_EQ(ssim_index(x, y), ssim_index(y, x));
    const double via_criterion = 1.0 - 2.0 * ssim_criterion(x, y).map.mean().item<double>();
    EXPECT_NEAR(via_criterion, ssim_index(x, y), 1e-9);
    EXPECT_GE(ssim_index(x, y), -1.0);
    EXPECT_LE(ssim_index(x, y), 1.0);
}

TEST(Fpd, IdentityAndSymmetry) {
    auto ex = build_extractor(0, {16, 32, 64});
    auto x = torch::rand({3, 32, 32});
    auto y = torch::rand({3, 32, 32});
    EXPECT_EQ(fpd(x, x, ex), 0.0);
    EXPECT_EQ(fpd(x, y, ex), fpd(y, x, ex));
    EXPECT_GT(fpd(x, y, ex), 0.0);
}

TEST(Fpd, NoiseFartherThanMildBlur) {
    auto ex = build_extractor(0, {16, 32, 64});
    double noise = 0.0, blur = 0.0;
    torch::manual_seed(5);
    for (std::uint64_t i = 0; i < 8; ++i) {
        auto x = procedural_image(64, i);
        noise += fpd(x, torch::rand_like(x), ex);
        blur += fpd(x, gaussian_blur(x, 0.7), ex);
    }
    EXPECT_GT(noise / 8.0, blur / 8.0);
}

TEST(EvaluateImages, GroundTruthAgainstItself) {
    auto ex = build_extractor(0, {16, 32, 64});
    std::vector<torch::Tensor> imgs{procedural_image(32, 1), procedural_image(32, 2)};
    auto report = evaluate_images(imgs, imgs, {"a", "b"}, ex);
    EXPECT_EQ(report.count, 2u);
    EXPECT_EQ(report.mean_psnr, kPsnrCap);
    EXPECT_NEAR(report.mean_ssim, 1.0, 1e-12);
    EXPECT_EQ(report.mean_fpd, 0.0);
}

TEST(Evaluate, RowCountDeterminismAndFiles) {
    auto st = init_state(tiny_config());
    auto ds = corpus(3, 64);
    auto a = evaluate(st, ds);
    auto b = evaluate(st, ds);
    ASSERT_EQ(a.rows.size(), ds.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        EXPECT_EQ(a.rows[i].psnr, b.rows[i].psnr);
        EXPECT_EQ(a.rows[i].ssim, b.rows[i].ssim);
        EXPECT_EQ(a.rows[i].fpd, b.rows[i].fpd);
        EXPECT_TRUE(std::isfinite(a.rows[i].psnr));
    }
    const auto dir = fs::temp_directory_path() / "criacl_metrics_report";
    fs::remove_all(dir);
    write_report(a, dir);
    EXPECT_TRUE(fs::exists(dir / "per_image.csv"));
    EXPECT_TRUE(fs::exists(dir / "summary.json"));
    fs::remove_all(dir);
}

TEST(Evaluate, ScaleMismatchRefused) {
    auto cfg = tiny_config();
    cfg.generator.scale = 2;
    auto st = init_state(cfg);
    auto ds = corpus(1, 64);
    EXPECT_THROW(evaluate(st, ds), ConfigError);
}

TEST(Evaluate, UnpairedYieldsOutputsOnly) {
    auto st = init_state(tiny_config());
    std::vector<PairRecord> records(2);
    PairedDataset ds(records, {torch::rand({3, 16, 16}), torch::rand({3, 16, 16})}, {}, 4);
    auto report = evaluate(st, ds);
    EXPECT_FALSE(report.paired);
    EXPECT_EQ(report.count, 2u);
    EXPECT_NE(report.note.find("no-reference metrics out of scope"), std::string::npos);
}
