#pragma once

#include "criacl/criteria.hpp"

#include <torch/torch.h>

#include <span>
#include <string_view>
#include <vector>

namespace criacl {

/// Spatial masks at output resolution. `s` weights the align branch, `s_hat`
/// the unif branch; s + s_hat == 1 pointwise.
struct SpatialMasks {
    torch::Tensor s;
    torch::Tensor s_hat;

    /// Constant masks s = value, s_hat = 1 - value.
    static SpatialMasks uniform(std::int64_t batch, std::int64_t height, std::int64_t width,
                                double value, const torch::TensorOptions& options = {});
};

/// Anchor criterion choices exposed for the anchor ablation.
enum class AnchorChoice { pix, per, adv };

std::string_view to_string(AnchorChoice anchor);
AnchorChoice anchor_from_string(std::string_view name);

/// Anchor criterion plus the positives it is aligned with and the negatives
/// it is uniformized against.
struct CriteriaPartition {
    CriterionKind anchor = CriterionKind::pix;
    std::vector<CriterionKind> positives{CriterionKind::ssim, CriterionKind::perc_bottom};
    std::vector<CriterionKind> negatives{CriterionKind::perc_top, CriterionKind::adv};

    /// Throws ConfigError when the anchor appears in either list, the lists
    /// overlap, or either list is empty.
    void validate() const;

    /// pix: the default partition.
    /// per: anchor perc_bottom, positives [pix, ssim], negatives [perc_top, adv].
    /// adv: anchor adv, positives [ssim, perc_bottom], negatives [perc_top, pix].
    static CriteriaPartition for_anchor(AnchorChoice anchor);
};

struct ComparativeConfig {
    double eta = 2.0;          // alignment exponent, >= 1
    double t = 2.0;            // uniformity temperature, > 0
    bool unif_halving = true;  // halve the uniformity term in combine()

    void validate() const;
};

/// Lower clamp applied to the Gaussian-potential sum before the log.
inline constexpr double kUnifLogFloor = 1e-12;

/// Pointwise sum_i (anchor - positive_i)^eta. For non-even eta the base is
/// taken in absolute value so the map stays real and nonnegative.
torch::Tensor align_loss(const torch::Tensor& anchor, std::span<const torch::Tensor> positives,
                         double eta);

/// Pointwise -log(sum_k exp(-t * (anchor + negative_k)^2)), with the sum
/// clamped below at kUnifLogFloor.
torch::Tensor unif_loss(const torch::Tensor& anchor, std::span<const torch::Tensor> negatives,
                        double t);

/// The two comparative contributions before the lambda weights:
/// align = mean(S * align_map), unif = mean(S_hat * unif_map) (halved when
/// configured). total = lambda_a * align + lambda_u * unif.
struct CombinedTerms {
    torch::Tensor align;
    torch::Tensor unif;
    torch::Tensor total;
};

CombinedTerms combine_terms(const torch::Tensor& align_map, const torch::Tensor& unif_map,
                            const SpatialMasks& masks, double lambda_a, double lambda_u,
                            const ComparativeConfig& config);

torch::Tensor combine(const torch::Tensor& align_map, const torch::Tensor& unif_map,
                      const SpatialMasks& masks, double lambda_a, double lambda_u,
                      const ComparativeConfig& config);

}  // namespace criacl
