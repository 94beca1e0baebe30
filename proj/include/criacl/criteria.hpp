#pragma once

#include "criacl/features.hpp"

#include <torch/torch.h>

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string_view>

namespace criacl {

/// Restoration criteria that can be materialized as per-pixel loss maps.
enum class CriterionKind { pix, ssim, perc_bottom, perc_top, adv };

/// Which generator output a criterion was evaluated on.
enum class Branch { align, unif, composed };

enum class PixelNorm { l1, l2 };

std::string_view to_string(CriterionKind kind);
std::string_view to_string(Branch branch);
std::string_view to_string(PixelNorm norm);
CriterionKind criterion_kind_from_string(std::string_view name);
PixelNorm pixel_norm_from_string(std::string_view name);

/// One criterion as a batch x 1 x H x W differentiable loss map.
struct CriterionMap {
    torch::Tensor map;
    CriterionKind kind;
    Branch source = Branch::composed;
};

/// Criterion maps for one branch image against the ground truth.
struct CriteriaEvaluation {
    std::map<CriterionKind, CriterionMap> maps;

    [[nodiscard]] const CriterionMap& at(CriterionKind kind) const;
    [[nodiscard]] bool contains(CriterionKind kind) const { return maps.contains(kind); }
    [[nodiscard]] std::size_t size() const { return maps.size(); }
};

/// Gaussian SSIM window: 11x11, sigma 1.5, stabilizers for a unit dynamic range.
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Per-pixel SSIM averaged over color channels, batch x 1 x H x W. Borders are
/// reflect-padded so the map keeps the input size; this needs both spatial
/// dimensions larger than the window radius (5), otherwise ShapeError.
torch::Tensor ssim_map(const torch::Tensor& x, const torch::Tensor& y);

/// |pred - target| (l1) or (pred - target)^2 (l2), averaged over channels.
CriterionMap pixel_criterion(const torch::Tensor& pred, const torch::Tensor& target,
                             PixelNorm norm = PixelNorm::l1);

/// (1 - SSIM) / 2 per pixel, so values lie in [0, 1].
CriterionMap ssim_criterion(const torch::Tensor& pred, const torch::Tensor& target);

/// Mean squared feature difference at one extractor tap, bilinearly
/// upsampled back to the image resolution.
CriterionMap perceptual_criterion(const torch::Tensor& pred, const torch::Tensor& target, Tap tap,
                                  const FeatureExtractor& extractor);

/// Non-saturating generator loss softplus(-logit) per discriminator patch,
/// bilinearly upsampled to `image_size` (height, width).
CriterionMap adversarial_criterion(const torch::Tensor& disc_logits,
                                   std::array<std::int64_t, 2> image_size);

/// mean softplus(-real) + mean softplus(fake).
torch::Tensor discriminator_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits);

/// Maps images to patch logits. Decouples criteria from the model module.
using LogitFn = std::function<torch::Tensor(const torch::Tensor&)>;

struct CriteriaContext {
    const FeatureExtractor* extractor = nullptr;
    const LogitFn* discriminator = nullptr;
    PixelNorm pixel_norm = PixelNorm::l1;
};

/// Evaluates each requested criterion of `branch_image` against `target`.
/// Requesting a perceptual kind without an extractor, or `adv` without a
/// discriminator, is a ConfigError.
CriteriaEvaluation evaluate_criteria(const torch::Tensor& branch_image, const torch::Tensor& target,
                                     const std::set<CriterionKind>& kinds, Branch source,
                                     const CriteriaContext& ctx);

}  // namespace criacl
