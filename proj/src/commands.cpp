#include "criacl/commands.hpp"

#include "criacl/errors.hpp"
#include "criacl/image_io.hpp"
#include "criacl/log.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

namespace criacl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

std::string numbered(std::int64_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04lld", static_cast<long long>(i));
    return buf;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string csv_number(double v) {
    if (!std::isfinite(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

void prepare_output_dir(const fs::path& dir, bool force) {
    if (dir.empty()) throw ConfigError("an output directory is required (--out)");
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw ConfigError(dir.string() + " exists and is not a directory");
        if (!fs::is_empty(dir) && !force) {
            throw ConfigError("output directory " + dir.string() + " is not empty (use --force to reuse it)");
        }
    }
    fs::create_directories(dir);
}

void write_run_manifest(const fs::path& dir, const std::string& command, const json& settings) {
    json manifest;
    manifest["tool"] = "criacl";
    manifest["version"] = kVersion;
    manifest["command"] = command;
    manifest["settings"] = settings;
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

fs::path make_data(const MakeDataOptions& options) {
    options.degradation.validate();
    if (options.count < 1) throw ConfigError("make-data: --count must be >= 1");
    if (options.size < 16 || options.size % options.degradation.scale != 0) {
        throw ConfigError("make-data: --size must be >= 16 and divisible by the scale");
    }
    prepare_output_dir(options.out, options.force);

    std::vector<PairRecord> records;
    for (std::int64_t i = 0; i < options.count; ++i) {
        const auto idx = static_cast<std::uint64_t>(i);
        const auto hr = procedural_image(options.size, mix_seed(options.seed, 2 * idx));
        const auto lr = degrade(hr, options.degradation, mix_seed(options.seed, 2 * idx + 1));
        const auto name = numbered(i) + ".png";
        write_png(options.out / "hr" / name, hr);
        write_png(options.out / "lr" / name, lr);
        records.push_back({fs::path("lr") / name, fs::path("hr") / name});
    }
    const auto manifest = options.out / "pairs.txt";
    write_manifest(manifest, records);

    json settings;
    settings["out"] = options.out.string();
    settings["count"] = options.count;
    settings["size"] = options.size;
    settings["degradation"] = options.degradation;
    settings["seed"] = options.seed;
    write_run_manifest(options.out, "make-data", settings);
    log::info("wrote ", options.count, " pairs to ", options.out.string());
    return manifest;
}

// ---------------------------------------------------------------------------
// Ablation

const AblationCell& AblationResult::cell(const std::string& group, const std::string& name) const {
    for (const auto& c : cells) {
        if (c.group == group && c.name == name) return c;
    }
    throw ConfigError("no ablation cell " + group + "/" + name);
}

AblationResult run_ablation(const AblationOptions& options) {
    options.base.validate();
    const auto dataset = PairedDataset::load(options.data, options.base.generator.scale);
    if (!dataset.paired()) throw ConfigError("ablate: the dataset must be paired");
    if (options.val_count < 1 || options.val_count >= dataset.size()) {
        throw ConfigError("ablate: need more than " + std::to_string(options.val_count) + " pairs (have " +
                          std::to_string(dataset.size()) + ")");
    }
    const auto train_count = dataset.size() - options.val_count;
    const auto train = dataset.slice(0, train_count);
    const auto val = dataset.slice(train_count, options.val_count);
    prepare_output_dir(options.out, options.force);

    json settings;
    settings["data"] = options.data.string();
    settings["val_count"] = options.val_count;
    settings["train_count"] = train_count;
    settings["config"] = to_json(options.base);
    write_run_manifest(options.out, "ablate", settings);

    AblationResult result;
    const std::vector<std::pair<std::string, TrainMode>> modes{{"wsum_baseline", TrainMode::wsum_baseline},
                                                               {"+align_only", TrainMode::align_only},
                                                               {"+unif_only", TrainMode::unif_only},
                                                               {"no_masks", TrainMode::no_masks},
                                                               {"full", TrainMode::full}};
    auto add_cell = [&result](std::string group, std::string name, TrainMode mode, AnchorChoice anchor) {
        AblationCell cell;
        cell.group = std::move(group);
        cell.name = std::move(name);
        cell.mode = mode;
        cell.anchor = anchor;
        result.cells.push_back(std::move(cell));
    };
    for (const auto& [name, mode] : modes) add_cell("mode", name, mode, AnchorChoice::pix);
    for (auto anchor : {AnchorChoice::pix, AnchorChoice::per, AnchorChoice::adv}) {
        add_cell("anchor", std::string(to_string(anchor)), TrainMode::full, anchor);
    }

    for (std::size_t i = 0; i < result.cells.size(); ++i) {
        auto& cell = result.cells[i];
        const auto shared = std::find_if(result.cells.begin(), result.cells.begin() + static_cast<std::ptrdiff_t>(i),
                                         [&](const AblationCell& c) { return c.mode == cell.mode && c.anchor == cell.anchor; });
        if (shared != result.cells.begin() + static_cast<std::ptrdiff_t>(i)) {
            const auto group = cell.group;
            const auto name = cell.name;
            cell = *shared;
            cell.group = group;
            cell.name = name;
            continue;
        }
        auto cfg = options.base;
        cfg.mode = cell.mode;
        cfg.anchor = cell.anchor;
        std::string dir_name = std::string(to_string(cell.mode)) + "_" + std::string(to_string(cell.anchor));
        if (dir_name.front() == '+') dir_name.erase(0, 1);
        const auto cell_dir = options.out / "cells" / dir_name;
        log::info("ablation cell ", cell.group, "/", cell.name, " -> ", cell_dir.string());
        const auto start = std::chrono::steady_clock::now();
        try {
            fs::remove_all(cell_dir);
            FitOptions fit_options;
            fit_options.out_dir = cell_dir;
            fit_options.validation = &val;
            const auto trained = fit(cfg, train, fit_options);
            auto state = load_checkpoint(trained.final_checkpoint);
            const auto report = evaluate(state, val);
            write_report(report, cell_dir / "eval");
            cell.psnr = report.mean_psnr;
            cell.ssim = report.mean_ssim;
            cell.fpd = report.mean_fpd;
            cell.status = "ok";
        } catch (const std::exception& e) {
            cell.status = std::string("failed: ") + e.what();
            log::error("ablation cell ", cell.group, "/", cell.name, " failed: ", e.what());
        }
        cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }

    result.all_finite = std::all_of(result.cells.begin(), result.cells.end(), [](const AblationCell& c) {
        return c.ok() && std::isfinite(c.psnr) && std::isfinite(c.ssim) && std::isfinite(c.fpd);
    });
    const auto& pix = result.cell("anchor", "pix");
    const auto& adv = result.cell("anchor", "adv");
    result.adv_below_pix = pix.ok() && adv.ok() && adv.psnr < pix.psnr;
    const auto& full = result.cell("mode", "full");
    const auto& base = result.cell("mode", "wsum_baseline");
    result.full_vs_baseline_psnr = full.psnr - base.psnr;
    result.full_vs_baseline_fpd = full.fpd - base.fpd;
    result.full_at_least_baseline = result.full_vs_baseline_psnr >= 0.0;

    std::ofstream csv(options.out / "ablation.csv");
    csv << "group,cell,mode,anchor,psnr,ssim,fpd,status,seconds\n";
    json cells = json::array();
    for (const auto& c : result.cells) {
        csv << c.group << ',' << c.name << ',' << to_string(c.mode) << ',' << to_string(c.anchor) << ','
            << csv_number(c.psnr) << ',' << csv_number(c.ssim) << ',' << csv_number(c.fpd) << ','
            << (c.ok() ? "ok" : "failed") << ',' << csv_number(c.seconds) << '\n';
        cells.push_back({{"group", c.group},
                         {"cell", c.name},
                         {"mode", to_string(c.mode)},
                         {"anchor", to_string(c.anchor)},
                         {"psnr", finite_or_null(c.psnr)},
                         {"ssim", finite_or_null(c.ssim)},
                         {"fpd", finite_or_null(c.fpd)},
                         {"status", c.status},
                         {"seconds", c.seconds}});
    }
    json summary;
    summary["cells"] = cells;
    summary["checks"] = {
        {"all_cells_finite", result.all_finite},
        {"adv_anchor_below_pix_anchor_psnr", result.adv_below_pix},
        {"full_minus_baseline_psnr", finite_or_null(result.full_vs_baseline_psnr)},
        {"full_minus_baseline_fpd", finite_or_null(result.full_vs_baseline_fpd)},
        {"full_vs_baseline", result.full_at_least_baseline ? "pass" : "warn"}};
    std::ofstream(options.out / "ablation.json") << summary.dump(2) << '\n';

    log::info("ablation: adv anchor PSNR ", adv.psnr, " vs pix anchor ", pix.psnr,
              result.adv_below_pix ? " (adv lower)" : " (adv NOT lower)");
    if (result.full_at_least_baseline) {
        log::info("ablation: full - baseline PSNR ", result.full_vs_baseline_psnr, " dB, FPD ",
                  result.full_vs_baseline_fpd, " [pass]");
    } else {
        log::warn("ablation: full - baseline PSNR ", result.full_vs_baseline_psnr, " dB, FPD ",
                  result.full_vs_baseline_fpd, " [warn: expected full >= baseline]");
    }
    return result;
}

}  // namespace criacl
