#include "criacl/criteria.hpp"

#include "criacl/errors.hpp"
#include "criacl/tensor_util.hpp"

#include <cmath>
#include <string>

namespace criacl {

namespace F = torch::nn::functional;

std::string_view to_string(CriterionKind kind) {
    switch (kind) {
        case CriterionKind::pix: return "pix";
        case CriterionKind::ssim: return "ssim";
        case CriterionKind::perc_bottom: return "perc_bottom";
        case CriterionKind::perc_top: return "perc_top";
        case CriterionKind::adv: return "adv";
    }
    return "?";
}

std::string_view to_string(Branch branch) {
    switch (branch) {
        case Branch::align: return "align";
        case Branch::unif: return "unif";
        case Branch::composed: return "composed";
    }
    return "?";
}

std::string_view to_string(PixelNorm norm) { return norm == PixelNorm::l1 ? "l1" : "l2"; }

CriterionKind criterion_kind_from_string(std::string_view name) {
    for (auto kind : {CriterionKind::pix, CriterionKind::ssim, CriterionKind::perc_bottom,
                      CriterionKind::perc_top, CriterionKind::adv}) {
        if (to_string(kind) == name) return kind;
    }
    throw ConfigError("unknown criterion kind '" + std::string(name) + "'");
}

PixelNorm pixel_norm_from_string(std::string_view name) {
    if (name == "l1") return PixelNorm::l1;
    if (name == "l2") return PixelNorm::l2;
    throw ConfigError("unknown pixel norm '" + std::string(name) + "' (expected l1 or l2)");
}

const CriterionMap& CriteriaEvaluation::at(CriterionKind kind) const {
    const auto it = maps.find(kind);
    if (it == maps.end()) {
        throw ConfigError("criterion '" + std::string(to_string(kind)) + "' was not evaluated");
    }
    return it->second;
}

namespace {

torch::Tensor gaussian_taps(const torch::TensorOptions& options) {
    auto idx = torch::arange(kSsimWindow, options) - static_cast<double>(kSsimWindow / 2);
    auto g = torch::exp(-(idx * idx) / (2.0 * kSsimSigma * kSsimSigma));
    return g / g.sum();
}

// Separable Gaussian filter over a (N, 1, H, W) stack with reflect padding.
torch::Tensor gaussian_filter(const torch::Tensor& x, const torch::Tensor& taps) {
    const int64_t r = kSsimWindow / 2;
    auto padded = F::pad(x, F::PadFuncOptions({r, r, r, r}).mode(torch::kReflect));
    auto vert = torch::conv2d(padded, taps.view({1, 1, kSsimWindow, 1}));
    return torch::conv2d(vert, taps.view({1, 1, 1, kSsimWindow}));
}

}  // namespace

torch::Tensor ssim_map(const torch::Tensor& x, const torch::Tensor& y) {
    require_4d(x, "ssim");
    require_same_shape(x, y, "ssim");
    const int64_t radius = kSsimWindow / 2;
    if (x.size(2) <= radius || x.size(3) <= radius) {
        throw ShapeError("ssim: image " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)) +
                         " is too small for the " + std::to_string(kSsimWindow) + "x" +
                         std::to_string(kSsimWindow) + " window");
    }
    const auto b = x.size(0);
    const auto c = x.size(1);
    const auto h = x.size(2);
    const auto w = x.size(3);
    const auto taps = gaussian_taps(x.options().requires_grad(false));

    auto flat = [&](const torch::Tensor& t) { return t.reshape({b * c, 1, h, w}); };
    const auto xs = flat(x);
    const auto ys = flat(y);

    const auto mu_x = gaussian_filter(xs, taps);
    const auto mu_y = gaussian_filter(ys, taps);
    const auto sxx = gaussian_filter(xs * xs, taps) - mu_x * mu_x;
    const auto syy = gaussian_filter(ys * ys, taps) - mu_y * mu_y;
    const auto sxy = gaussian_filter(xs * ys, taps) - mu_x * mu_y;

    const auto num = (2.0 * mu_x * mu_y + kSsimC1) * (2.0 * sxy + kSsimC2);
    const auto den = (mu_x * mu_x + mu_y * mu_y + kSsimC1) * (sxx + syy + kSsimC2);
    return (num / den).reshape({b, c, h, w}).mean(1, /*keepdim=*/true);
}

CriterionMap pixel_criterion(const torch::Tensor& pred, const torch::Tensor& target, PixelNorm norm) {
    require_4d(pred, "pixel criterion");
    require_same_shape(pred, target, "pixel criterion");
    const auto diff = pred - target;
    auto per_channel = norm == PixelNorm::l1 ? diff.abs() : diff * diff;
    return {per_channel.mean(1, /*keepdim=*/true), CriterionKind::pix};
}

CriterionMap ssim_criterion(const torch::Tensor& pred, const torch::Tensor& target) {
    return {(1.0 - ssim_map(pred, target)) * 0.5, CriterionKind::ssim};
}

CriterionMap perceptual_criterion(const torch::Tensor& pred, const torch::Tensor& target, Tap tap,
                                  const FeatureExtractor& extractor) {
    require_4d(pred, "perceptual criterion");
    require_same_shape(pred, target, "perceptual criterion");
    const auto fp = extract(extractor, pred).at(tap);
    const auto ft = extract(extractor, target).at(tap);
    const auto d = fp - ft;
    auto per_location = (d * d).mean(1, /*keepdim=*/true);
    return {resize_bilinear(per_location, pred.size(2), pred.size(3)),
            tap == Tap::bottom ? CriterionKind::perc_bottom : CriterionKind::perc_top};
}

CriterionMap adversarial_criterion(const torch::Tensor& disc_logits,
                                   std::array<std::int64_t, 2> image_size) {
    require_4d(disc_logits, "adversarial criterion");
    if (disc_logits.size(1) != 1) {
        throw ShapeError("adversarial criterion: expected single-channel logits, got " +
                         shape_string(disc_logits));
    }
    auto per_patch = torch::softplus(-disc_logits);
    return {resize_bilinear(per_patch, image_size[0], image_size[1]), CriterionKind::adv};
}

torch::Tensor discriminator_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits) {
    require_same_shape(real_logits, fake_logits, "discriminator loss");
    return torch::softplus(-real_logits).mean() + torch::softplus(fake_logits).mean();
}

CriteriaEvaluation evaluate_criteria(const torch::Tensor& branch_image, const torch::Tensor& target,
                                     const std::set<CriterionKind>& kinds, Branch source,
                                     const CriteriaContext& ctx) {
    require_4d(branch_image, "evaluate criteria");
    require_same_shape(branch_image, target, "evaluate criteria");
    CriteriaEvaluation out;
    for (auto kind : kinds) {
        CriterionMap m{};
        switch (kind) {
            case CriterionKind::pix: m = pixel_criterion(branch_image, target, ctx.pixel_norm); break;
            case CriterionKind::ssim: m = ssim_criterion(branch_image, target); break;
            case CriterionKind::perc_bottom:
            case CriterionKind::perc_top: {
                if (ctx.extractor == nullptr) {
                    throw ConfigError("perceptual criterion requested without a feature extractor");
                }
                const auto tap = kind == CriterionKind::perc_bottom ? Tap::bottom : Tap::top;
                m = perceptual_criterion(branch_image, target, tap, *ctx.extractor);
                break;
            }
            case CriterionKind::adv: {
                if (ctx.discriminator == nullptr || !*ctx.discriminator) {
                    throw ConfigError("adversarial criterion requested without a discriminator");
                }
                const auto logits = (*ctx.discriminator)(branch_image);
                m = adversarial_criterion(logits, {branch_image.size(2), branch_image.size(3)});
                break;
            }
        }
        m.source = source;
        out.maps.emplace(kind, std::move(m));
    }
    return out;
}

}  // namespace criacl
