#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace criacl {

/// Tap points of the frozen feature extractor. `bottom` is the output of the
/// first stage, `top` the output of the last.
enum class Tap { bottom, top };

std::string_view to_string(Tap tap);

/// Tap outputs for one batch, each batch x channels x h x w.
struct FeaturePyramid {
    torch::Tensor bottom;
    torch::Tensor top;

    [[nodiscard]] const torch::Tensor& at(Tap tap) const { return tap == Tap::bottom ? bottom : top; }
};

/// Frozen convolutional feature extractor used by the perceptual criterion
/// and the FPD metric.
///
/// Each stage is conv3x3 -> leaky ReLU(0.2) -> conv3x3/stride 2 -> leaky
/// ReLU(0.2), so stage `i` reduces resolution by 2^(i+1). Weights are never
/// trainable; gradients flow only to the input images.
class FeatureExtractorImpl : public torch::nn::Module {
public:
    /// Weights are drawn from a He-scaled normal initializer seeded by `seed`.
    FeatureExtractorImpl(std::int64_t seed, std::vector<std::int64_t> channel_widths);

    [[nodiscard]] FeaturePyramid forward(const torch::Tensor& images) const;

    [[nodiscard]] const std::vector<std::int64_t>& channel_widths() const { return widths_; }
    [[nodiscard]] std::int64_t seed() const { return seed_; }
    [[nodiscard]] std::int64_t downsample_factor(Tap tap) const;
    [[nodiscard]] std::int64_t max_downsample_factor() const { return downsample_factor(Tap::top); }
    [[nodiscard]] std::int64_t tap_channels(Tap tap) const;

private:
    std::int64_t seed_;
    std::vector<std::int64_t> widths_;
    std::vector<torch::Tensor> weights_;  // conv_a, conv_b per stage
    std::vector<torch::Tensor> biases_;
};
TORCH_MODULE(FeatureExtractor);

/// Throws ConfigError for an empty width list or non-positive widths.
FeatureExtractor build_extractor(std::int64_t seed, const std::vector<std::int64_t>& channel_widths);

/// Runs the extractor. Throws ShapeError naming the offending dimension when
/// the height or width is not divisible by the largest downsample factor.
FeaturePyramid extract(const FeatureExtractor& extractor, const torch::Tensor& images);

/// Weight file: tensor archive holding every conv array plus a JSON manifest
/// with the channel widths and the tap name -> (stage, factor) table.
void save_extractor(const FeatureExtractor& extractor, const std::filesystem::path& path);
FeatureExtractor load_extractor(const std::filesystem::path& path);

}  // namespace criacl
