#include "criacl/model.hpp"

#include "criacl/errors.hpp"
#include "criacl/tensor_util.hpp"

#include <string>

namespace criacl {

namespace F = torch::nn::functional;

namespace {

constexpr double kLeakySlope = 0.2;
constexpr double kResidualScale = 0.2;
constexpr std::int64_t kMinInputSize = 16;

torch::Tensor lrelu(const torch::Tensor& x) { return torch::leaky_relu(x, kLeakySlope); }

torch::nn::Conv2d conv3x3(std::int64_t in, std::int64_t out, std::int64_t stride = 1) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

// Kaiming-normal init scaled down, as used for RRDB convolutions.
void scaled_kaiming_(torch::nn::Conv2d& conv, double scale) {
    torch::NoGradGuard no_grad;
    torch::nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanIn);
    conv->weight.mul_(scale);
    conv->bias.zero_();
}

std::int64_t upsample_stages(std::int64_t scale) { return scale == 4 ? 2 : 1; }

void require_min_size(const torch::Tensor& lr, std::string_view what) {
    require_4d(lr, what);
    if (lr.size(2) < kMinInputSize || lr.size(3) < kMinInputSize) {
        throw ShapeError(std::string(what) + ": input " + std::to_string(lr.size(2)) + "x" +
                         std::to_string(lr.size(3)) + " is smaller than the 16x16 minimum");
    }
}

}  // namespace

void GeneratorConfig::validate() const {
    if (scale != 2 && scale != 4) throw ConfigError("generator: scale must be 2 or 4");
    if (num_rrdb < 1) throw ConfigError("generator: num_rrdb must be >= 1");
    if (branch_blocks != 3) throw ConfigError("generator: branch_blocks is fixed at 3");
    if (base_channels < 1 || growth_channels < 1 || head_channels < 1 || mask_channels < 1) {
        throw ConfigError("generator: channel counts must be positive");
    }
}

void DiscriminatorConfig::validate() const {
    if (num_layers < 3) throw ConfigError("discriminator: num_layers must be >= 3");
    if (base_channels < 1) throw ConfigError("discriminator: base_channels must be positive");
}

DenseBlockImpl::DenseBlockImpl(std::int64_t channels, std::int64_t growth) {
    for (std::int64_t i = 0; i < 5; ++i) {
        auto conv = conv3x3(channels + i * growth, i < 4 ? growth : channels);
        scaled_kaiming_(conv, 0.1);
        convs_.push_back(register_module("conv" + std::to_string(i + 1), conv));
    }
}

torch::Tensor DenseBlockImpl::forward(const torch::Tensor& x) {
    std::vector<torch::Tensor> features{x};
    for (std::size_t i = 0; i < 4; ++i) {
        features.push_back(lrelu(convs_[i]->forward(torch::cat(features, 1))));
    }
    return x + kResidualScale * convs_[4]->forward(torch::cat(features, 1));
}

RRDBImpl::RRDBImpl(std::int64_t channels, std::int64_t growth)
    : b1_(register_module("db1", DenseBlock(channels, growth))),
      b2_(register_module("db2", DenseBlock(channels, growth))),
      b3_(register_module("db3", DenseBlock(channels, growth))) {}

torch::Tensor RRDBImpl::forward(const torch::Tensor& x) {
    return x + kResidualScale * b3_->forward(b2_->forward(b1_->forward(x)));
}

ResidualBlockImpl::ResidualBlockImpl(std::int64_t channels)
    : conv1_(register_module("conv1", conv3x3(channels, channels))),
      conv2_(register_module("conv2", conv3x3(channels, channels))) {}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
    return x + conv2_->forward(lrelu(conv1_->forward(x)));
}

GeneratorImpl::GeneratorImpl(const GeneratorConfig& config) : config_(config) {
    config_.validate();
    const auto c = config_.base_channels;
    const auto h = config_.head_channels;
    conv_first_ = register_module("conv_first", conv3x3(3, c));
    for (std::int64_t i = 0; i < config_.num_rrdb; ++i) {
        trunk_.push_back(register_module("rrdb" + std::to_string(i), RRDB(c, config_.growth_channels)));
    }
    trunk_conv_ = register_module("trunk_conv", conv3x3(c, c));
    const auto stages = upsample_stages(config_.scale);
    for (std::int64_t i = 0; i < stages; ++i) {
        const auto out = i + 1 == stages ? h : c;
        upsample_convs_.push_back(register_module("up" + std::to_string(i), conv3x3(c, out)));
    }
    auto build_head = [&](Head& head, const std::string& name) {
        for (std::int64_t i = 0; i < config_.branch_blocks; ++i) {
            head.blocks.push_back(
                register_module(name + "_block" + std::to_string(i), ResidualBlock(h)));
        }
        head.out = register_module(name + "_out", conv3x3(h, 3));
    };
    build_head(align_head_, "align");
    build_head(unif_head_, "unif");
}

torch::Tensor GeneratorImpl::run_head(Head& head, const torch::Tensor& x) {
    auto y = x;
    for (auto& block : head.blocks) y = block->forward(y);
    return head.out->forward(y);
}

BranchOutputs GeneratorImpl::forward(const torch::Tensor& lr) {
    require_min_size(lr, "generator");
    auto feat = conv_first_->forward(lr);
    auto trunk = feat;
    for (auto& block : trunk_) trunk = block->forward(trunk);
    feat = feat + trunk_conv_->forward(trunk);
    for (auto& conv : upsample_convs_) {
        auto up = F::interpolate(feat, F::InterpolateFuncOptions()
                                           .scale_factor(std::vector<double>{2.0, 2.0})
                                           .mode(torch::kNearest));
        feat = lrelu(conv->forward(up));
    }
    return {run_head(align_head_, feat), run_head(unif_head_, feat)};
}

MaskNetImpl::MaskNetImpl(const GeneratorConfig& config) : scale_(config.scale) {
    config.validate();
    const auto m = config.mask_channels;
    conv_first_ = register_module("conv_first", conv3x3(3, m));
    for (int i = 0; i < 3; ++i) {
        blocks_.push_back(register_module("block" + std::to_string(i), ResidualBlock(m)));
    }
    logits_ = register_module("logits", conv3x3(m, 2));
}

SpatialMasks MaskNetImpl::forward(const torch::Tensor& lr) {
    require_min_size(lr, "mask net");
    auto x = conv_first_->forward(lr);
    for (auto& block : blocks_) x = block->forward(x);
    auto logits = resize_bilinear(logits_->forward(x), lr.size(2) * scale_, lr.size(3) * scale_);
    auto probs = torch::softmax(logits, 1);
    return {probs.narrow(1, 0, 1), probs.narrow(1, 1, 1)};
}

void MaskNetImpl::zero_logit_layer() {
    torch::NoGradGuard no_grad;
    logits_->weight.zero_();
    logits_->bias.zero_();
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorConfig& config) {
    config.validate();
    const auto c = config.base_channels;
    // With three layers the last stride-2 conv emits the logits directly.
    const bool minimal = config.num_layers == 3;
    const std::int64_t widths[] = {c, 2 * c, minimal ? 1 : 4 * c};
    std::int64_t in = 3;
    for (std::int64_t w : widths) {
        auto conv = torch::nn::Conv2d(torch::nn::Conv2dOptions(in, w, 4).stride(2).padding(1));
        const bool is_logits = minimal && convs_.size() == 2;
        const auto name = is_logits ? std::string("logits") : "conv" + std::to_string(convs_.size());
        convs_.push_back(register_module(name, conv));
        in = w;
    }
    if (minimal) return;
    for (std::int64_t i = 0; i < config.num_layers - 4; ++i) {
        convs_.push_back(register_module("conv" + std::to_string(convs_.size()), conv3x3(in, in)));
    }
    convs_.push_back(register_module("logits", conv3x3(in, 1)));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& images) {
    require_4d(images, "discriminator");
    if (images.size(2) % 8 != 0 || images.size(3) % 8 != 0) {
        throw ShapeError("discriminator: image " + std::to_string(images.size(2)) + "x" +
                         std::to_string(images.size(3)) + " is not divisible by 8");
    }
    auto x = images;
    for (std::size_t i = 0; i + 1 < convs_.size(); ++i) x = lrelu(convs_[i]->forward(x));
    return convs_.back()->forward(x);
}

torch::Tensor compose(const torch::Tensor& align, const torch::Tensor& unif, const SpatialMasks& masks) {
    require_4d(align, "compose");
    require_same_shape(align, unif, "compose");
    require_same_shape(masks.s, masks.s_hat, "compose (masks)");
    if (masks.s.size(0) != align.size(0) || masks.s.size(1) != 1 ||
        masks.s.size(2) != align.size(2) || masks.s.size(3) != align.size(3)) {
        throw ShapeError("compose: masks " + shape_string(masks.s) + " do not match images " +
                         shape_string(align));
    }
    return align * masks.s + unif * masks.s_hat;
}

std::int64_t generator_parameter_count(const GeneratorConfig& cfg) {
    const auto c = cfg.base_channels;
    const auto g = cfg.growth_channels;
    const auto h = cfg.head_channels;
    std::int64_t dense = 0;
    for (std::int64_t i = 0; i < 4; ++i) dense += 9 * (c + i * g) * g + g;
    dense += 9 * (c + 4 * g) * c + c;
    const auto stages = upsample_stages(cfg.scale);
    return 28 * c + cfg.num_rrdb * 3 * dense + (9 * c * c + c) + (stages - 1) * (9 * c * c + c) +
           (9 * c * h + h) + 2 * (cfg.branch_blocks * 2 * (9 * h * h + h) + 27 * h + 3);
}

std::int64_t mask_net_parameter_count(const GeneratorConfig& cfg) {
    const auto m = cfg.mask_channels;
    return 28 * m + 3 * 2 * (9 * m * m + m) + 18 * m + 2;
}

std::int64_t discriminator_parameter_count(const DiscriminatorConfig& cfg) {
    const auto c = cfg.base_channels;
    if (cfg.num_layers == 3) return (48 * c + c) + (32 * c * c + 2 * c) + (32 * c + 1);
    return (48 * c + c) + (32 * c * c + 2 * c) + (128 * c * c + 4 * c) +
           (cfg.num_layers - 4) * (144 * c * c + 4 * c) + (36 * c + 1);
}

std::int64_t count_parameters(const torch::nn::Module& module) {
    std::int64_t n = 0;
    for (const auto& p : module.parameters(true)) {
        if (p.requires_grad()) n += p.numel();
    }
    return n;
}

}  // namespace criacl
