#include "criacl/commands.hpp"
#include "criacl/errors.hpp"
#include "criacl/image_io.hpp"
#include "criacl/log.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace criacl;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// Every TrainConfig field as `--<dotted name>`; values are applied after
// --config so flags win over the file.
struct ConfigFlags {
    std::string config_file;
    std::map<std::string, std::string> values;

    void attach(CLI::App* app) {
        app->add_option("--config", config_file, "JSON config file (nested, as written in run.json)")
            ->check(CLI::ExistingFile);
        for (const auto& field : config_fields()) {
            app->add_option("--" + field.name, values[field.name], field.help)->type_name("VALUE");
        }
    }

    TrainConfig resolve(const CLI::App* app) const {
        TrainConfig cfg = config_file.empty() ? TrainConfig{} : load_config(config_file);
        for (const auto& field : config_fields()) {
            if (app->count("--" + field.name) > 0) set_field(cfg, field.name, values.at(field.name));
        }
        cfg.validate();
        return cfg;
    }
};

std::vector<fs::path> png_inputs(const fs::path& input) {
    std::vector<fs::path> files;
    if (fs::is_directory(input)) {
        for (const auto& entry : fs::directory_iterator(input)) {
            if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
    } else if (fs::is_regular_file(input)) {
        files.push_back(input);
    }
    if (files.empty()) throw ConfigError("no PNG inputs found at " + input.string());
    return files;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Criteria comparative learning for super-resolution"};
    app.require_subcommand(1);
    app.allow_extras(false);

    // make-data
    MakeDataOptions md;
    auto* make_cmd = app.add_subcommand("make-data", "Synthesize a paired LR/HR dataset");
    make_cmd->add_option("--out", md.out, "Output directory")->required();
    make_cmd->add_option("--count", md.count, "Number of image pairs")->capture_default_str();
    make_cmd->add_option("--size", md.size, "HR image side in pixels")->capture_default_str();
    make_cmd->add_option("--scale", md.degradation.scale, "Downscale factor (2 or 4)")->capture_default_str();
    make_cmd->add_option("--blur", md.degradation.blur_sigma, "Gaussian blur sigma before downsampling")
        ->capture_default_str();
    make_cmd->add_option("--noise", md.degradation.noise_sigma, "Additive Gaussian noise sigma on LR")
        ->capture_default_str();
    make_cmd->add_option("--seed", md.seed, "Generator seed")->capture_default_str();
    make_cmd->add_flag("--force", md.force, "Reuse a non-empty output directory");

    // train
    fs::path train_data, train_val, train_out, train_resume;
    bool train_force = false;
    std::int64_t stop_after = -1;
    ConfigFlags train_flags;
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    train_cmd->add_option("--data", train_data, "Training pairs manifest")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--val", train_val, "Validation pairs manifest for psnr_val")->check(CLI::ExistingFile);
    train_cmd->add_option("--out", train_out, "Run directory")->required();
    train_cmd->add_option("--resume", train_resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
    train_cmd->add_flag("--force", train_force, "Reuse a non-empty run directory");
    train_cmd->add_option("--stop-after", stop_after, "Stop after this many completed steps");
    train_flags.attach(train_cmd);

    // eval
    fs::path eval_ckpt, eval_data, eval_out;
    bool eval_images = false, eval_force = false;
    auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--data", eval_data, "Pairs manifest")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--out", eval_out, "Report directory")->required();
    eval_cmd->add_flag("--save-images", eval_images, "Also write super-resolved PNGs");
    eval_cmd->add_flag("--force", eval_force, "Reuse a non-empty report directory");

    // infer
    fs::path infer_ckpt, infer_input, infer_out;
    bool infer_force = false;
    auto* infer_cmd = app.add_subcommand("infer", "Super-resolve PNG images");
    infer_cmd->add_option("--checkpoint", infer_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
    infer_cmd->add_option("--input", infer_input, "PNG file or directory of PNGs")->required()->check(CLI::ExistingPath);
    infer_cmd->add_option("--out", infer_out, "Output directory")->required();
    infer_cmd->add_flag("--force", infer_force, "Reuse a non-empty output directory");

    // ablate
    AblationOptions ab;
    ConfigFlags ablate_flags;
    auto* ablate_cmd = app.add_subcommand("ablate", "Train and score the ablation matrix");
    ablate_cmd->add_option("--data", ab.data, "Pairs manifest")->required()->check(CLI::ExistingFile);
    ablate_cmd->add_option("--out", ab.out, "Output directory")->required();
    ablate_cmd->add_option("--val-count", ab.val_count, "Trailing pairs held out for scoring")->capture_default_str();
    ablate_cmd->add_flag("--force", ab.force, "Reuse a non-empty output directory");
    ablate_flags.attach(ablate_cmd);

    // plot
    fs::path plot_log, plot_out;
    auto* plot_cmd = app.add_subcommand("plot", "Plot convergence curves from metrics.csv");
    plot_cmd->add_option("--log", plot_log, "Training log (metrics.csv)")->required();
    plot_cmd->add_option("--out", plot_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*make_cmd) {
            make_data(md);
        } else if (*train_cmd) {
            const auto cfg = train_flags.resolve(train_cmd);
            if (train_resume.empty()) {
                prepare_output_dir(train_out, train_force);
            } else {
                fs::create_directories(train_out);
            }
            const auto dataset = PairedDataset::load(train_data, cfg.generator.scale);
            PairedDataset val;
            if (!train_val.empty()) val = PairedDataset::load(train_val, cfg.generator.scale);
            json settings{{"data", train_data.string()},
                          {"val", train_val.string()},
                          {"resume", train_resume.string()},
                          {"config", to_json(cfg)},
                          {"seed", cfg.seed}};
            write_run_manifest(train_out, "train", settings);
            FitOptions opts;
            opts.out_dir = train_out;
            if (!train_resume.empty()) opts.resume_from = train_resume;
            if (!val.empty()) opts.validation = &val;
            if (stop_after >= 0) opts.stop_after = stop_after;
            const auto result = fit(cfg, dataset, opts);
            log::info("trained to iteration ", result.iterations, "; checkpoint ", result.final_checkpoint.string());
        } else if (*eval_cmd) {
            prepare_output_dir(eval_out, eval_force);
            const auto manifest = read_checkpoint_manifest(eval_ckpt);
            const auto scale = manifest.at("config").at("generator").at("scale").get<std::int64_t>();
            const auto dataset = PairedDataset::load(eval_data, scale);
            write_run_manifest(eval_out, "eval",
                               {{"checkpoint", eval_ckpt.string()},
                                {"data", eval_data.string()},
                                {"save_images", eval_images},
                                {"seed", manifest.at("seed")},
                                {"config", manifest.at("config")}});
            EvalOptions opts{eval_out, eval_images};
            const auto report = evaluate_checkpoint(eval_ckpt, dataset, opts);
            write_report(report, eval_out);
            if (report.paired) {
                std::cout << "psnr " << report.mean_psnr << " ssim " << report.mean_ssim << " fpd "
                          << report.mean_fpd << " over " << report.count << " images\n";
            } else {
                std::cout << report.note << '\n';
            }
        } else if (*infer_cmd) {
            const auto inputs = png_inputs(infer_input);
            prepare_output_dir(infer_out, infer_force);
            auto state = load_checkpoint(infer_ckpt);
            write_run_manifest(infer_out, "infer",
                               {{"checkpoint", infer_ckpt.string()},
                                {"input", infer_input.string()},
                                {"seed", state.config.seed},
                                {"config", to_json(state.config)}});
            for (const auto& file : inputs) {
                write_png(infer_out / file.filename(), super_resolve(state, read_png(file)));
            }
            log::info("wrote ", inputs.size(), " images to ", infer_out.string());
        } else if (*ablate_cmd) {
            ab.base = ablate_flags.resolve(ablate_cmd);
            const auto result = run_ablation(ab);
            if (!result.all_finite) {
                log::error("ablation: some cells failed or produced non-finite metrics; see ablation.csv");
                return kExitRuntime;
            }
        } else if (*plot_cmd) {
            for (const auto& p : plot_metrics(plot_log, plot_out)) log::info("wrote ", p.string());
        }
    } catch (const ConfigError& e) {
        log::error(e.what());
        return kExitConfig;
    } catch (const ParseError& e) {
        log::error(e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        log::error(e.what());
        return kExitRuntime;
    }
    return 0;
}
