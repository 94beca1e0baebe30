#pragma once

#include "criacl/data.hpp"
#include "criacl/features.hpp"
#include "criacl/trainer.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

namespace criacl {

/// Value reported for identical images.
inline constexpr double kPsnrCap = 100.0;

/// 10 log10(peak^2 / MSE) over all elements, in double precision; capped at
/// kPsnrCap. Accepts CHW or NCHW.
double psnr(const torch::Tensor& x, const torch::Tensor& y, double peak = 1.0);

/// Mean of the SSIM map used by the ssim criterion.
double ssim_index(const torch::Tensor& x, const torch::Tensor& y);

/// Frozen-backbone perceptual distance: features at each tap are normalized
/// to unit length across channels per location; the squared difference is
/// summed over channels, averaged over locations and then over taps.
double fpd(const torch::Tensor& x, const torch::Tensor& y, const FeatureExtractor& extractor);

struct ImageMetrics {
    std::string name;
    double psnr = 0.0;
    double ssim = 0.0;
    double fpd = 0.0;
};

struct EvalReport {
    std::vector<ImageMetrics> rows;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double mean_fpd = 0.0;
    std::size_t count = 0;
    bool paired = true;
    std::string note;
};

/// Metrics of each prediction against its target (CHW tensors).
EvalReport evaluate_images(const std::vector<torch::Tensor>& predictions,
                           const std::vector<torch::Tensor>& targets, const std::vector<std::string>& names,
                           const FeatureExtractor& extractor);

struct EvalOptions {
    /// When set, super-resolved PNGs are written to `<dir>/images`.
    std::filesystem::path output_dir;
    bool write_images = false;
};

/// Runs clamped inference over the dataset and scores paired records. An
/// unpaired dataset yields outputs only, with a note in the report. A scale
/// mismatch between model and dataset is a ConfigError.
EvalReport evaluate(TrainState& state, const PairedDataset& dataset, const EvalOptions& options = {});
EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const PairedDataset& dataset,
                               const EvalOptions& options = {});

/// `<dir>/per_image.csv` (image,psnr,ssim,fpd) and `<dir>/summary.json`.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace criacl
