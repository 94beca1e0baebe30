#include "criacl/metrics.hpp"

#include "criacl/criteria.hpp"
#include "criacl/errors.hpp"
#include "criacl/image_io.hpp"
#include "criacl/tensor_util.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace criacl {

namespace fs = std::filesystem;

namespace {

torch::Tensor as_batch(const torch::Tensor& t) { return t.dim() == 3 ? t.unsqueeze(0) : t; }

std::string record_name(const PairedDataset& ds, std::size_t i) {
    const auto& records = ds.records();
    if (i < records.size() && !records[i].lr_path.empty()) return records[i].lr_path.stem().string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "image_%04zu", i);
    return buf;
}

}  // namespace

double psnr(const torch::Tensor& x, const torch::Tensor& y, double peak) {
    require_same_shape(x, y, "psnr");
    const auto d = x.to(torch::kFloat64) - y.to(torch::kFloat64);
    const double mse = (d * d).mean().item<double>();
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double ssim_index(const torch::Tensor& x, const torch::Tensor& y) {
    return ssim_map(as_batch(x).to(torch::kFloat64), as_batch(y).to(torch::kFloat64)).mean().item<double>();
}

double fpd(const torch::Tensor& x, const torch::Tensor& y, const FeatureExtractor& extractor) {
    require_same_shape(x, y, "fpd");
    const auto dtype = extractor->parameters().front().scalar_type();
    torch::NoGradGuard guard;
    const auto fx = extract(extractor, as_batch(x).to(dtype));
    const auto fy = extract(extractor, as_batch(y).to(dtype));
    auto unit = [](const torch::Tensor& f) {
        const auto f64 = f.to(torch::kFloat64);
        return f64 / (f64.pow(2).sum(1, /*keepdim=*/true).sqrt() + 1e-10);
    };
    double total = 0.0;
    for (auto tap : {Tap::bottom, Tap::top}) {
        const auto d = unit(fx.at(tap)) - unit(fy.at(tap));
        total += (d * d).sum(1).mean().item<double>();
    }
    return total / 2.0;
}

EvalReport evaluate_images(const std::vector<torch::Tensor>& predictions, const std::vector<torch::Tensor>& targets,
                           const std::vector<std::string>& names, const FeatureExtractor& extractor) {
    if (predictions.size() != targets.size() || predictions.size() != names.size()) {
        throw ConfigError("evaluate: predictions, targets and names differ in count");
    }
    EvalReport report;
    report.count = predictions.size();
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        ImageMetrics m;
        m.name = names[i];
        m.psnr = psnr(predictions[i], targets[i]);
        m.ssim = ssim_index(predictions[i], targets[i]);
        m.fpd = fpd(predictions[i], targets[i], extractor);
        report.mean_psnr += m.psnr;
        report.mean_ssim += m.ssim;
        report.mean_fpd += m.fpd;
        report.rows.push_back(std::move(m));
    }
    if (report.count > 0) {
        const auto n = static_cast<double>(report.count);
        report.mean_psnr /= n;
        report.mean_ssim /= n;
        report.mean_fpd /= n;
    }
    return report;
}

EvalReport evaluate(TrainState& state, const PairedDataset& dataset, const EvalOptions& options) {
    if (dataset.empty()) throw ConfigError("evaluate: dataset is empty");
    if (dataset.scale() != state.config.generator.scale) {
        throw ConfigError("evaluate: model scale " + std::to_string(state.config.generator.scale) +
                          " does not match dataset scale " + std::to_string(dataset.scale()));
    }
    std::vector<torch::Tensor> outputs;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        outputs.push_back(super_resolve(state, dataset.lr(i)));
        names.push_back(record_name(dataset, i));
        if (options.write_images) write_png(options.output_dir / "images" / (names.back() + ".png"), outputs.back());
    }
    if (!dataset.paired()) {
        EvalReport report;
        report.paired = false;
        report.count = outputs.size();
        for (auto& n : names) report.rows.push_back({n, NAN, NAN, NAN});
        report.note = "dataset is unpaired; outputs only, no-reference metrics out of scope";
        return report;
    }
    std::vector<torch::Tensor> targets;
    for (std::size_t i = 0; i < dataset.size(); ++i) targets.push_back(dataset.hr(i));
    return evaluate_images(outputs, targets, names, state.extractor);
}

EvalReport evaluate_checkpoint(const fs::path& checkpoint, const PairedDataset& dataset, const EvalOptions& options) {
    const auto manifest = read_checkpoint_manifest(checkpoint);
    const auto scale = manifest.at("config").at("generator").at("scale").get<std::int64_t>();
    if (scale != dataset.scale()) {
        throw ConfigError("evaluate: checkpoint scale " + std::to_string(scale) + " does not match dataset scale " +
                          std::to_string(dataset.scale()));
    }
    auto state = load_checkpoint(checkpoint);
    return evaluate(state, dataset, options);
}

void write_report(const EvalReport& report, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream csv(dir / "per_image.csv");
    csv << "image,psnr,ssim,fpd\n";
    char buf[128];
    for (const auto& r : report.rows) {
        if (report.paired) {
            std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g", r.psnr, r.ssim, r.fpd);
            csv << r.name << ',' << buf << '\n';
        } else {
            csv << r.name << ",,,\n";
        }
    }
    nlohmann::json summary;
    summary["count"] = report.count;
    summary["paired"] = report.paired;
    if (report.paired) {
        summary["psnr"] = report.mean_psnr;
        summary["ssim"] = report.mean_ssim;
        summary["fpd"] = report.mean_fpd;
    }
    if (!report.note.empty()) summary["note"] = report.note;
    std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
}

}  // namespace criacl
