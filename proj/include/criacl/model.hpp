#pragma once

#include "criacl/comparative.hpp"

#include <torch/torch.h>

#include <cstdint>

namespace criacl {

struct GeneratorConfig {
    std::int64_t num_rrdb = 4;
    std::int64_t base_channels = 32;
    std::int64_t growth_channels = 16;
    /// Width of the two branch heads at output resolution.
    std::int64_t head_channels = 16;
    /// Width of the mask network's residual blocks (runs at input resolution).
    std::int64_t mask_channels = 32;
    std::int64_t scale = 4;
    std::int64_t branch_blocks = 3;

    void validate() const;
};

struct DiscriminatorConfig {
    /// Total conv layers (>= 3): three 4x4 stride-2 layers, stride-1 layers,
    /// then the single-channel logit layer. With exactly three layers the last
    /// stride-2 layer emits the logits. Logits come out at input/8 resolution.
    std::int64_t num_layers = 4;
    std::int64_t base_channels = 32;

    void validate() const;
};

/// ESRGAN dense block: five 3x3 convs with dense connections, residual scaling 0.2.
class DenseBlockImpl : public torch::nn::Module {
public:
    DenseBlockImpl(std::int64_t channels, std::int64_t growth);
    torch::Tensor forward(const torch::Tensor& x);

private:
    std::vector<torch::nn::Conv2d> convs_;
};
TORCH_MODULE(DenseBlock);

/// Residual-in-residual dense block: three dense blocks, residual scaling 0.2.
class RRDBImpl : public torch::nn::Module {
public:
    RRDBImpl(std::int64_t channels, std::int64_t growth);
    torch::Tensor forward(const torch::Tensor& x);

private:
    DenseBlock b1_{nullptr}, b2_{nullptr}, b3_{nullptr};
};
TORCH_MODULE(RRDB);

/// conv -> leaky ReLU -> conv, plus identity skip.
class ResidualBlockImpl : public torch::nn::Module {
public:
    explicit ResidualBlockImpl(std::int64_t channels);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(ResidualBlock);

struct BranchOutputs {
    torch::Tensor align;
    torch::Tensor unif;
};

/// Dual-branch generator: shared RRDB trunk, nearest x2 upsample stages, then
/// two independent residual heads producing the align and unif images.
class GeneratorImpl : public torch::nn::Module {
public:
    explicit GeneratorImpl(const GeneratorConfig& config);

    /// Throws ShapeError when the input is smaller than 16x16. Outputs are
    /// unclamped.
    BranchOutputs forward(const torch::Tensor& lr);

    [[nodiscard]] const GeneratorConfig& config() const { return config_; }

private:
    struct Head {
        std::vector<ResidualBlock> blocks;
        torch::nn::Conv2d out{nullptr};
    };
    torch::Tensor run_head(Head& head, const torch::Tensor& x);

    GeneratorConfig config_;
    torch::nn::Conv2d conv_first_{nullptr};
    std::vector<RRDB> trunk_;
    torch::nn::Conv2d trunk_conv_{nullptr};
    std::vector<torch::nn::Conv2d> upsample_convs_;
    Head align_head_;
    Head unif_head_;
};
TORCH_MODULE(Generator);

/// Spatial-view mask network on the raw low-resolution input: conv, three
/// residual blocks, 2-channel logits, bilinear upsample, channel softmax.
class MaskNetImpl : public torch::nn::Module {
public:
    explicit MaskNetImpl(const GeneratorConfig& config);

    SpatialMasks forward(const torch::Tensor& lr);

    /// Zeroes the logit layer so both masks start at exactly 0.5.
    void zero_logit_layer();

private:
    std::int64_t scale_;
    torch::nn::Conv2d conv_first_{nullptr};
    std::vector<ResidualBlock> blocks_;
    torch::nn::Conv2d logits_{nullptr};
};
TORCH_MODULE(MaskNet);

/// Strided patch discriminator emitting batch x 1 x H/8 x W/8 logits.
class DiscriminatorImpl : public torch::nn::Module {
public:
    explicit DiscriminatorImpl(const DiscriminatorConfig& config);

    /// Throws ShapeError when H or W is not divisible by 8.
    torch::Tensor forward(const torch::Tensor& images);

private:
    std::vector<torch::nn::Conv2d> convs_;
};
TORCH_MODULE(Discriminator);

/// I_SR = I_align * S + I_unif * S_hat, masks broadcast over color channels.
torch::Tensor compose(const torch::Tensor& align, const torch::Tensor& unif, const SpatialMasks& masks);

/// Closed-form trainable parameter counts (3x3 convs with bias unless noted).
///
/// generator = 28C + R * 3 * [sum_{i<4} (9(C+iG)G + G) + 9(C+4G)C + C]
///             + (9C^2 + C)        trunk conv
///             + (U-1)(9C^2 + C)   upsample convs before the last (U = log2 scale)
///             + (9CH + H)         last upsample conv (to head width H)
///             + 2 * [B * 2(9H^2 + H) + 27H + 3]   two heads of B blocks
/// mask net  = 28M + 3 * 2(9M^2 + M) + 18M + 2      (mask width M)
/// discriminator = (48c + c) + (32c^2 + 2c) + (128c^2 + 4c)   4x4 stride-2 convs
///                 + (L-4)(144c^2 + 4c) + (36c + 1)          stride-1 convs, logits
///   (L = 3: (48c + c) + (32c^2 + 2c) + (32c + 1))
std::int64_t generator_parameter_count(const GeneratorConfig& config);
std::int64_t mask_net_parameter_count(const GeneratorConfig& config);
std::int64_t discriminator_parameter_count(const DiscriminatorConfig& config);

/// Sum of numel over trainable parameters.
std::int64_t count_parameters(const torch::nn::Module& module);

}  // namespace criacl
