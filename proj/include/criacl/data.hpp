#pragma once

#include <torch/torch.h>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace criacl {

// ---------------------------------------------------------------------------
// Degradation

/// Synthetic degradation: Gaussian blur -> bicubic downsample -> additive
/// Gaussian noise -> clamp to [0, 1].
struct DegradationSpec {
    std::int64_t scale = 4;
    double blur_sigma = 0.0;   // pixels, >= 0
    double noise_sigma = 0.0;  // on the [0, 1] range, within [0, 0.2]

    void validate() const;
};

void to_json(nlohmann::json& j, const DegradationSpec& spec);
void from_json(const nlohmann::json& j, DegradationSpec& spec);

/// Catmull-Rom cubic (Keys kernel, a = -0.5).
double catmull_rom(double x);

/// Row-stochastic (out_size x in_size) float64 matrix for antialiased bicubic
/// downsampling by an integer factor: the kernel is stretched by the factor,
/// taps are normalized to sum to one and out-of-range indices are mirrored.
torch::Tensor bicubic_weights(std::int64_t in_size, std::int64_t factor);

/// Bicubic downsample of a NCHW (or CHW) image by an integer factor. Throws
/// ShapeError when a dimension is not divisible by the factor.
torch::Tensor bicubic_downsample(const torch::Tensor& image, std::int64_t factor);

/// Separable Gaussian blur with edge replication; sigma 0 is the identity.
torch::Tensor gaussian_blur(const torch::Tensor& image, double sigma);

/// Deterministic per (hr, spec, seed). Accepts NCHW or CHW, returns the same
/// rank in float32.
torch::Tensor degrade(const torch::Tensor& hr, const DegradationSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Augmentation

/// Element of the dihedral group of the square: index 0-7, where bit 2 is a
/// horizontal flip applied first and the low two bits count 90-degree
/// counter-clockwise rotations.
torch::Tensor apply_dihedral(const torch::Tensor& image, int element);

/// Element drawn from `seed`, uniform over the 8 elements.
int dihedral_from_seed(std::uint64_t seed);

/// Applies the same seeded dihedral element to both patches.
std::pair<torch::Tensor, torch::Tensor> augment(const torch::Tensor& lr_patch,
                                                const torch::Tensor& hr_patch, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Procedural corpus

/// Seeded mixture of a color gradient, checkerboard panels, Gaussian blobs and
/// glyph-like strokes. Returns float32 3 x size x size in [0, 1].
torch::Tensor procedural_image(std::int64_t size, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Datasets

struct PairRecord {
    std::filesystem::path lr_path;
    std::filesystem::path hr_path;  // empty for unpaired data
};

/// LR/HR pairs held in memory as float32 3 x H x W tensors.
class PairedDataset {
public:
    PairedDataset() = default;

    /// Validates that every HR image is exactly `scale` times its LR image.
    PairedDataset(std::vector<PairRecord> records, std::vector<torch::Tensor> lr,
                  std::vector<torch::Tensor> hr, std::int64_t scale);

    /// Plain-text manifest: one record per line, "<lr> <hr>" (or just "<lr>"
    /// for unpaired data), paths relative to the manifest's directory; blank
    /// lines and '#' comments are skipped. `scale` 0 infers it from the first pair.
    static PairedDataset load(const std::filesystem::path& manifest, std::int64_t scale = 0);

    [[nodiscard]] std::size_t size() const { return lr_.size(); }
    [[nodiscard]] bool empty() const { return lr_.empty(); }
    [[nodiscard]] bool paired() const { return !hr_.empty(); }
    [[nodiscard]] std::int64_t scale() const { return scale_; }
    [[nodiscard]] const torch::Tensor& lr(std::size_t i) const { return lr_.at(i); }
    [[nodiscard]] const torch::Tensor& hr(std::size_t i) const { return hr_.at(i); }
    [[nodiscard]] const std::vector<PairRecord>& records() const { return records_; }

    /// Smallest LR height/width across the dataset.
    [[nodiscard]] std::int64_t min_lr_extent() const;

    /// Records [first, first + count).
    [[nodiscard]] PairedDataset slice(std::size_t first, std::size_t count) const;

private:
    std::vector<PairRecord> records_;
    std::vector<torch::Tensor> lr_;
    std::vector<torch::Tensor> hr_;
    std::int64_t scale_ = 0;
};

/// Writes "<lr> <hr>" lines relative to the manifest directory.
void write_manifest(const std::filesystem::path& manifest, const std::vector<PairRecord>& records);

struct Batch {
    torch::Tensor lr;  // batch x 3 x patch x patch
    torch::Tensor hr;  // batch x 3 x (scale*patch) x (scale*patch)
};

/// Deterministic stream of augmented random crops. Sample `g` of the stream
/// (g = iteration * batch_size + slot) takes image perm_e[g mod n] where
/// perm_e is the seeded shuffle of epoch e = g / n, and its crop offsets and
/// dihedral element from a hash of (seed, g). Any batch can therefore be
/// regenerated from (seed, iteration) alone.
class BatchStream {
public:
    /// Throws ConfigError for an empty or unpaired dataset, or when the patch
    /// does not fit inside the smallest LR image.
    BatchStream(const PairedDataset& dataset, std::int64_t batch_size, std::int64_t patch_size,
                std::uint64_t seed);

    [[nodiscard]] Batch batch(std::int64_t iteration) const;

    /// HR crop offset is always scale x LR offset.
    struct Crop {
        std::size_t image;
        std::int64_t lr_y, lr_x;
        int dihedral;
    };
    [[nodiscard]] Crop crop_for(std::int64_t sample) const;

private:
    [[nodiscard]] std::vector<std::size_t> epoch_order(std::int64_t epoch) const;

    const PairedDataset* dataset_;
    std::int64_t batch_size_;
    std::int64_t patch_size_;
    std::uint64_t seed_;
};

/// splitmix64 finalizer used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace criacl
