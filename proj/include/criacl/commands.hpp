#pragma once

#include "criacl/data.hpp"
#include "criacl/metrics.hpp"
#include "criacl/trainer.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

// Operations behind the criacl subcommands. The executable only parses flags
// and maps exceptions to exit codes.

namespace criacl {

/// Creates `dir`, refusing an existing non-empty directory unless `force`.
void prepare_output_dir(const std::filesystem::path& dir, bool force);

/// Writes `<dir>/manifest.json` echoing the command and its full settings.
void write_run_manifest(const std::filesystem::path& dir, const std::string& command,
                        const nlohmann::json& settings);

// ---------------------------------------------------------------------------
// make-data

struct MakeDataOptions {
    std::filesystem::path out;
    std::int64_t count = 64;
    std::int64_t size = 256;
    DegradationSpec degradation;
    std::uint64_t seed = 0;
    bool force = false;
};

/// Procedural HR images under hr/, degraded LR images under lr/ and a
/// `pairs.txt` manifest. Returns the manifest path.
std::filesystem::path make_data(const MakeDataOptions& options);

// ---------------------------------------------------------------------------
// ablate

struct AblationOptions {
    std::filesystem::path data;  // pairs manifest
    std::filesystem::path out;
    TrainConfig base;
    /// The last `val_count` pairs are held out for scoring.
    std::size_t val_count = 8;
    bool force = false;
};

struct AblationCell {
    std::string group;  // "mode" or "anchor"
    std::string name;
    TrainMode mode = TrainMode::full;
    AnchorChoice anchor = AnchorChoice::pix;
    double psnr = NAN, ssim = NAN, fpd = NAN;
    std::string status;  // "ok" or "failed: <reason>"
    double seconds = 0.0;

    [[nodiscard]] bool ok() const { return status == "ok"; }
};

struct AblationResult {
    std::vector<AblationCell> cells;  // 5 mode rows then 3 anchor rows
    bool all_finite = false;
    /// Anchor adv strictly below anchor pix on PSNR.
    bool adv_below_pix = false;
    /// full - wsum_baseline; the expected direction is psnr >= 0, fpd <= 0.
    double full_vs_baseline_psnr = NAN;
    double full_vs_baseline_fpd = NAN;
    bool full_at_least_baseline = false;

    [[nodiscard]] const AblationCell& cell(const std::string& group, const std::string& name) const;
};

/// Trains and scores every cell sequentially with a shared seed, writing
/// `ablation.csv` and `ablation.json`. The full/pix cell is trained once and
/// reported in both groups. Cell failures are recorded, not thrown.
AblationResult run_ablation(const AblationOptions& options);

// ---------------------------------------------------------------------------
// plot

struct MetricsRow {
    std::int64_t iter = 0;
    double lr = 0, l_pix = 0, l_per = 0, l_adv = 0, l_align = 0, l_unif = 0, total = 0, d_loss = 0;
    std::optional<double> psnr_val;
};

/// Parses a training log. Throws ParseError naming the line of a malformed
/// row, or when the log has no data rows.
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

struct PlotSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

/// Axis ranges as written into the SVG metadata block.
struct PlotMeta {
    double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
};

/// Line plot as SVG; the `<metadata>` element holds the axis ranges and each
/// series' extent as JSON.
PlotMeta write_line_plot(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                         const std::string& y_label, const std::vector<PlotSeries>& series);

/// Reads the JSON metadata back from a plot written by write_line_plot.
nlohmann::json read_plot_metadata(const std::filesystem::path& path);

/// `psnr.svg` (validation PSNR vs iteration) and `loss.svg` (loss terms vs
/// iteration). The log is fully parsed before any file is written.
std::vector<std::filesystem::path> plot_metrics(const std::filesystem::path& log,
                                                const std::filesystem::path& out_dir);

}  // namespace criacl
