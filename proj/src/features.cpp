#include "criacl/features.hpp"

#include "criacl/archive.hpp"
#include "criacl/errors.hpp"
#include "criacl/tensor_util.hpp"

#include <json.hpp>

#include <cmath>

namespace criacl {

namespace {

constexpr double kLeakySlope = 0.2;
constexpr std::string_view kFormat = "criacl-extractor";

torch::Tensor lrelu(const torch::Tensor& x) { return torch::leaky_relu(x, kLeakySlope); }

}  // namespace

std::string_view to_string(Tap tap) { return tap == Tap::bottom ? "bottom" : "top"; }

FeatureExtractorImpl::FeatureExtractorImpl(std::int64_t seed, std::vector<std::int64_t> channel_widths)
    : seed_(seed), widths_(std::move(channel_widths)) {
    if (widths_.empty()) throw ConfigError("feature extractor: channel_widths must be non-empty");
    for (auto w : widths_) {
        if (w <= 0) throw ConfigError("feature extractor: channel widths must be positive");
    }

    auto gen = at::make_generator<at::CPUGeneratorImpl>(static_cast<std::uint64_t>(seed));
    auto init = [&gen](std::int64_t out, std::int64_t in) {
        const double std = std::sqrt(2.0 / static_cast<double>(in * 9));
        return torch::randn({out, in, 3, 3}, gen, torch::kFloat32) * std;
    };

    std::int64_t in = 3;
    for (std::size_t i = 0; i < widths_.size(); ++i) {
        const auto w = widths_[i];
        const auto stage = "stage" + std::to_string(i);
        weights_.push_back(register_parameter(stage + "_conv_a_weight", init(w, in), false));
        biases_.push_back(register_parameter(stage + "_conv_a_bias", torch::zeros({w}), false));
        weights_.push_back(register_parameter(stage + "_conv_b_weight", init(w, w), false));
        biases_.push_back(register_parameter(stage + "_conv_b_bias", torch::zeros({w}), false));
        in = w;
    }
    eval();
}

FeaturePyramid FeatureExtractorImpl::forward(const torch::Tensor& images) const {
    FeaturePyramid out;
    auto x = images;
    for (std::size_t i = 0; i < widths_.size(); ++i) {
        x = lrelu(torch::conv2d(x, weights_[2 * i], biases_[2 * i], 1, 1));
        x = lrelu(torch::conv2d(x, weights_[2 * i + 1], biases_[2 * i + 1], 2, 1));
        if (i == 0) out.bottom = x;
    }
    out.top = x;
    return out;
}

std::int64_t FeatureExtractorImpl::downsample_factor(Tap tap) const {
    const auto stages = tap == Tap::bottom ? 1 : static_cast<std::int64_t>(widths_.size());
    return std::int64_t{1} << stages;
}

std::int64_t FeatureExtractorImpl::tap_channels(Tap tap) const {
    return tap == Tap::bottom ? widths_.front() : widths_.back();
}

FeatureExtractor build_extractor(std::int64_t seed, const std::vector<std::int64_t>& channel_widths) {
    return FeatureExtractor(seed, channel_widths);
}

FeaturePyramid extract(const FeatureExtractor& extractor, const torch::Tensor& images) {
    require_4d(images, "extract");
    if (images.size(1) != 3) {
        throw ShapeError("extract: expected 3 color channels, got " + shape_string(images));
    }
    const auto factor = extractor->max_downsample_factor();
    if (images.size(2) % factor != 0) {
        throw ShapeError("extract: height " + std::to_string(images.size(2)) +
                         " is not divisible by the downsample factor " + std::to_string(factor));
    }
    if (images.size(3) % factor != 0) {
        throw ShapeError("extract: width " + std::to_string(images.size(3)) +
                         " is not divisible by the downsample factor " + std::to_string(factor));
    }
    const auto& impl = *extractor;
    if (impl.parameters().front().scalar_type() != images.scalar_type()) {
        throw ShapeError("extract: image dtype does not match extractor dtype");
    }
    return impl.forward(images);
}

void save_extractor(const FeatureExtractor& extractor, const std::filesystem::path& path) {
    const auto& impl = *extractor;
    nlohmann::json manifest;
    manifest["format"] = kFormat;
    manifest["version"] = 1;
    manifest["seed"] = impl.seed();
    manifest["channel_widths"] = impl.channel_widths();
    for (auto tap : {Tap::bottom, Tap::top}) {
        manifest["taps"][std::string(to_string(tap))] = {
            {"stage", tap == Tap::bottom ? 0 : impl.channel_widths().size() - 1},
            {"downsample_factor", impl.downsample_factor(tap)},
            {"channels", impl.tap_channels(tap)}};
    }
    torch::serialize::OutputArchive ar;
    archive::write_string(ar, "manifest", manifest.dump());
    archive::write_module(ar, "extractor", impl);
    ar.save_to(path.string());
}

FeatureExtractor load_extractor(const std::filesystem::path& path) {
    torch::serialize::InputArchive ar;
    ar.load_from(path.string());
    const auto manifest = nlohmann::json::parse(archive::read_string(ar, "manifest"));
    if (manifest.value("format", "") != kFormat) {
        throw ParseError("extractor weight file " + path.string() + " has an unknown format");
    }
    auto widths = manifest.at("channel_widths").get<std::vector<std::int64_t>>();
    FeatureExtractor extractor(manifest.value("seed", std::int64_t{0}), widths);
    for (auto tap : {Tap::bottom, Tap::top}) {
        const auto& entry = manifest.at("taps").at(std::string(to_string(tap)));
        if (entry.at("downsample_factor").get<std::int64_t>() != extractor->downsample_factor(tap)) {
            throw ParseError("extractor weight file " + path.string() + ": tap '" +
                             std::string(to_string(tap)) + "' factor disagrees with its stages");
        }
    }
    archive::read_module(ar, "extractor", *extractor);
    return extractor;
}

}  // namespace criacl
