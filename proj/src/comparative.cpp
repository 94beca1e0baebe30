#include "criacl/comparative.hpp"

#include "criacl/errors.hpp"
#include "criacl/tensor_util.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace criacl {

SpatialMasks SpatialMasks::uniform(std::int64_t batch, std::int64_t height, std::int64_t width,
                                   double value, const torch::TensorOptions& options) {
    return {torch::full({batch, 1, height, width}, value, options),
            torch::full({batch, 1, height, width}, 1.0 - value, options)};
}

std::string_view to_string(AnchorChoice anchor) {
    switch (anchor) {
        case AnchorChoice::pix: return "pix";
        case AnchorChoice::per: return "per";
        case AnchorChoice::adv: return "adv";
    }
    return "?";
}

AnchorChoice anchor_from_string(std::string_view name) {
    if (name == "pix") return AnchorChoice::pix;
    if (name == "per") return AnchorChoice::per;
    if (name == "adv") return AnchorChoice::adv;
    throw ConfigError("unknown anchor '" + std::string(name) + "' (expected pix, per or adv)");
}

void CriteriaPartition::validate() const {
    if (positives.empty()) throw ConfigError("criteria partition: positives must be non-empty");
    if (negatives.empty()) throw ConfigError("criteria partition: negatives must be non-empty");
    auto contains = [](const std::vector<CriterionKind>& v, CriterionKind k) {
        return std::find(v.begin(), v.end(), k) != v.end();
    };
    if (contains(positives, anchor) || contains(negatives, anchor)) {
        throw ConfigError("criteria partition: anchor '" + std::string(to_string(anchor)) +
                          "' also appears among positives or negatives");
    }
    for (auto k : positives) {
        if (contains(negatives, k)) {
            throw ConfigError("criteria partition: '" + std::string(to_string(k)) +
                              "' is both positive and negative");
        }
    }
}

CriteriaPartition CriteriaPartition::for_anchor(AnchorChoice anchor) {
    using K = CriterionKind;
    switch (anchor) {
        case AnchorChoice::pix: return {};
        case AnchorChoice::per: return {K::perc_bottom, {K::pix, K::ssim}, {K::perc_top, K::adv}};
        case AnchorChoice::adv: return {K::adv, {K::ssim, K::perc_bottom}, {K::perc_top, K::pix}};
    }
    return {};
}

void ComparativeConfig::validate() const {
    if (!(eta >= 1.0)) throw ConfigError("comparative: eta must be >= 1");
    if (!(t > 0.0)) throw ConfigError("comparative: t must be > 0");
}

namespace {

bool is_even_integer(double v) { return std::floor(v) == v && std::fmod(v, 2.0) == 0.0; }

}  // namespace

torch::Tensor align_loss(const torch::Tensor& anchor, std::span<const torch::Tensor> positives,
                         double eta) {
    if (positives.empty()) throw ConfigError("align loss: positive list is empty");
    if (!(eta >= 1.0)) throw ConfigError("align loss: eta must be >= 1");
    const bool even = is_even_integer(eta);
    torch::Tensor total;
    for (const auto& pos : positives) {
        require_same_shape(anchor, pos, "align loss");
        const auto d = anchor - pos;
        auto term = even ? d.pow(eta) : d.abs().pow(eta);
        total = total.defined() ? total + term : term;
    }
    return total;
}

torch::Tensor unif_loss(const torch::Tensor& anchor, std::span<const torch::Tensor> negatives,
                        double t) {
    if (negatives.empty()) throw ConfigError("unif loss: negative list is empty");
    if (!(t > 0.0)) throw ConfigError("unif loss: t must be > 0");
    torch::Tensor potential;
    for (const auto& neg : negatives) {
        require_same_shape(anchor, neg, "unif loss");
        const auto s = anchor + neg;
        auto term = torch::exp(-t * s * s);
        potential = potential.defined() ? potential + term : term;
    }
    return -torch::log(potential.clamp_min(kUnifLogFloor));
}

CombinedTerms combine_terms(const torch::Tensor& align_map, const torch::Tensor& unif_map,
                            const SpatialMasks& masks, double lambda_a, double lambda_u,
                            const ComparativeConfig& config) {
    require_same_shape(align_map, masks.s, "combine (align map vs S)");
    require_same_shape(unif_map, masks.s_hat, "combine (unif map vs S_hat)");
    CombinedTerms out;
    out.align = (masks.s * align_map).mean();
    out.unif = (masks.s_hat * unif_map).mean();
    if (config.unif_halving) out.unif = out.unif * 0.5;
    out.total = lambda_a * out.align + lambda_u * out.unif;
    return out;
}

torch::Tensor combine(const torch::Tensor& align_map, const torch::Tensor& unif_map,
                      const SpatialMasks& masks, double lambda_a, double lambda_u,
                      const ComparativeConfig& config) {
    return combine_terms(align_map, unif_map, masks, lambda_a, lambda_u, config).total;
}

}  // namespace criacl
