#pragma once

#include "criacl/comparative.hpp"
#include "criacl/criteria.hpp"
#include "criacl/data.hpp"
#include "criacl/features.hpp"
#include "criacl/model.hpp"

#include <torch/torch.h>

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace criacl {

/// full:          weighted sum plus both comparative terms, learned masks.
/// wsum_baseline: pixel + perceptual + adversarial only; comparative terms are
///                not computed and reported as 0.
/// align_only / unif_only: one comparative term switched off.
/// no_masks:      branches averaged with constant 0.5 masks, comparative terms
///                applied over the whole image; the mask net is unused.
enum class TrainMode { full, wsum_baseline, align_only, unif_only, no_masks };

std::string_view to_string(TrainMode mode);
TrainMode train_mode_from_string(std::string_view name);

struct ExtractorConfig {
    std::int64_t seed = 0;
    std::vector<std::int64_t> channel_widths{16, 32, 64};
    /// Optional weight file; when set it replaces the seeded weights.
    std::string weights;
};

struct TrainConfig {
    double alpha = 0.01;  // pixel
    double beta = 1.0;    // perceptual (bottom tap)
    double gamma = 0.005; // adversarial
    double lambda_a = 0.01;
    double lambda_u = 0.01;
    double eta = 2.0;
    double t = 2.0;
    bool unif_halving = true;
    PixelNorm pixel_norm = PixelNorm::l1;

    double lr0 = 1e-4;
    std::int64_t lr_half_period = 500;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;

    std::int64_t batch_size = 4;
    std::int64_t patch_size = 32;  // LR pixels
    std::int64_t total_iters = 2000;
    TrainMode mode = TrainMode::full;
    AnchorChoice anchor = AnchorChoice::pix;
    std::uint64_t seed = 0;
    bool deterministic = true;

    GeneratorConfig generator;
    DiscriminatorConfig discriminator;
    ExtractorConfig extractor;

    std::int64_t checkpoint_every = 500;  // 0 disables intermediate checkpoints
    std::int64_t val_every = 100;         // 0 disables validation

    /// Throws ConfigError naming the first offending field.
    void validate() const;

    [[nodiscard]] ComparativeConfig comparative() const { return {eta, t, unif_halving}; }
    [[nodiscard]] CriteriaPartition partition() const { return CriteriaPartition::for_anchor(anchor); }
};

/// One entry per TrainConfig field. The registry drives the JSON config file,
/// the CLI flags and the resume diff, so all three stay in sync.
struct ConfigField {
    std::string name;  // dotted path, e.g. "generator.num_rrdb"
    std::string help;
    /// Fields that may change between a checkpoint and its resumed run.
    bool resumable_change = false;
    std::function<nlohmann::json(const TrainConfig&)> get;
    /// Throws ConfigError for a value of the wrong type or spelling.
    std::function<void(TrainConfig&, const nlohmann::json&)> set;
};

const std::vector<ConfigField>& config_fields();

/// Nested JSON object holding every field.
nlohmann::json to_json(const TrainConfig& config);

/// Starts from `base` and applies the keys present in `j`. Unknown keys are a
/// ConfigError.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Reads a JSON config file on top of `base`.
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});

/// Assigns a field from its command-line text form ("0.01", "true", "[16,32]",
/// "full", ...).
void set_field(TrainConfig& config, std::string_view name, const std::string& text);

/// "name: a -> b" for each differing field; `ignore_resumable` skips fields
/// that may legitimately change on resume.
std::vector<std::string> config_diff(const TrainConfig& from, const TrainConfig& to,
                                     bool ignore_resumable = false);

/// lr0 * 0.5^floor(iteration / half_period)
double lr_at(const TrainConfig& config, std::int64_t iteration);

/// Scalar loss terms before their weights, plus the weighted total.
/// l_align / l_unif are the mask-weighted means from combine_terms().
struct LossTerms {
    torch::Tensor l_pix;
    torch::Tensor l_per;
    torch::Tensor l_adv;
    torch::Tensor l_align;
    torch::Tensor l_unif;
    torch::Tensor total;
};

/// alpha * mean pix(I_SR) + beta * mean perc_bottom(I_SR) + gamma * mean adv(I_SR)
/// + lambda_a * l_align + lambda_u * l_unif, where the align side evaluates the
/// anchor and positives on I_align and the unif side the anchor and negatives
/// on I_unif. Throws NumericError naming the first non-finite term.
LossTerms total_loss(const torch::Tensor& sr, const torch::Tensor& align, const torch::Tensor& unif,
                     const SpatialMasks& masks, const torch::Tensor& hf, const TrainConfig& config,
                     const FeatureExtractor& extractor, const LogitFn& discriminator);

struct StepReport {
    std::int64_t iteration = 0;  // index of the step; its lr is lr_at(iteration)
    double lr = 0.0;
    double l_pix = 0.0, l_per = 0.0, l_adv = 0.0, l_align = 0.0, l_unif = 0.0;
    double total = 0.0;
    double d_loss = 0.0;
    std::optional<double> psnr_val;
    double wall_seconds = 0.0;
};

/// Models, optimizers and the step counter of one training run.
struct TrainState {
    TrainConfig config;
    Generator generator{nullptr};
    MaskNet mask_net{nullptr};
    Discriminator discriminator{nullptr};
    FeatureExtractor extractor{nullptr};
    std::unique_ptr<torch::optim::Adam> g_optimizer;  // generator + mask net
    std::unique_ptr<torch::optim::Adam> d_optimizer;
    std::int64_t iteration = 0;  // completed steps
};

/// Seeds torch from config.seed and builds every module. In deterministic
/// mode intra-op parallelism is pinned to one thread.
TrainState init_state(const TrainConfig& config);

/// Generator outputs, masks and the composed image for an LR batch.
struct Forward {
    BranchOutputs branches;
    SpatialMasks masks;
    torch::Tensor sr;
};

Forward forward(TrainState& state, const torch::Tensor& lr);

/// One discriminator update on the detached I_SR, then one generator and
/// mask-net update on total_loss. Throws NumericError naming the parameter
/// group with a non-finite gradient.
StepReport train_step(TrainState& state, const Batch& batch);

/// Clamped composed output for a 3 x H x W or N x 3 x H x W LR input.
torch::Tensor super_resolve(TrainState& state, const torch::Tensor& lr);

/// Bundle of every parameter, buffer and optimizer state plus a manifest
/// echoing the config, iteration, seed and parameter checksums.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

/// Manifest of a checkpoint without loading tensors into modules.
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path);

/// Checksum over generator, mask net and discriminator parameters.
std::uint64_t model_checksum(const TrainState& state);

struct FitOptions {
    std::filesystem::path out_dir;
    std::optional<std::filesystem::path> resume_from;
    /// Validation pairs for psnr_val; empty leaves the column blank.
    const PairedDataset* validation = nullptr;
    /// Stop (after checkpointing) once this many steps are complete; models an
    /// interrupted run.
    std::optional<std::int64_t> stop_after;
    std::function<void(const StepReport&)> on_step;
};

struct FitResult {
    std::filesystem::path final_checkpoint;
    std::filesystem::path log_path;
    StepReport last;
    std::int64_t iterations = 0;
};

/// Trains for config.total_iters steps writing `metrics.csv`, checkpoints
/// under `checkpoints/` and `run.json`. Resuming refuses a checkpoint whose
/// config differs (other than in resumable fields) and lists the differences.
FitResult fit(const TrainConfig& config, const PairedDataset& dataset, const FitOptions& options);

inline constexpr std::string_view kMetricsHeader =
    "iter,lr,l_pix,l_per,l_adv,l_align,l_unif,total,d_loss,psnr_val";

std::string csv_row(const StepReport& report);

}  // namespace criacl
