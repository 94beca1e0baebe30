#include "criacl/data.hpp"

#include "criacl/errors.hpp"
#include "criacl/image_io.hpp"
#include "criacl/tensor_util.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace criacl {

namespace F = torch::nn::functional;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Degradation

void DegradationSpec::validate() const {
    if (scale != 2 && scale != 4) throw ConfigError("degradation: scale must be 2 or 4");
    if (!(blur_sigma >= 0.0)) throw ConfigError("degradation: blur_sigma must be >= 0");
    if (!(noise_sigma >= 0.0 && noise_sigma <= 0.2)) {
        throw ConfigError("degradation: noise_sigma must lie in [0, 0.2]");
    }
}

void to_json(nlohmann::json& j, const DegradationSpec& spec) {
    j = {{"scale", spec.scale},
         {"blur_sigma", spec.blur_sigma},
         {"noise_sigma", spec.noise_sigma},
         {"downsample", "bicubic"}};
}

void from_json(const nlohmann::json& j, DegradationSpec& spec) {
    spec.scale = j.at("scale").get<std::int64_t>();
    spec.blur_sigma = j.value("blur_sigma", 0.0);
    spec.noise_sigma = j.value("noise_sigma", 0.0);
    if (j.value("downsample", std::string("bicubic")) != "bicubic") {
        throw ConfigError("degradation: only bicubic downsampling is supported");
    }
}

double catmull_rom(double x) {
    const double a = std::abs(x);
    if (a <= 1.0) return (1.5 * a - 2.5) * a * a + 1.0;
    if (a < 2.0) return ((-0.5 * a + 2.5) * a - 4.0) * a + 2.0;
    return 0.0;
}

torch::Tensor bicubic_weights(std::int64_t in_size, std::int64_t factor) {
    if (factor < 1 || in_size % factor != 0) {
        throw ShapeError("bicubic: size " + std::to_string(in_size) + " is not divisible by " +
                         std::to_string(factor));
    }
    const auto out_size = in_size / factor;
    const double s = static_cast<double>(factor);
    auto w = torch::zeros({out_size, in_size}, torch::kFloat64);
    auto acc = w.accessor<double, 2>();
    for (std::int64_t i = 0; i < out_size; ++i) {
        const double center = (static_cast<double>(i) + 0.5) * s - 0.5;
        const auto lo = static_cast<std::int64_t>(std::floor(center - 2.0 * s));
        const auto hi = static_cast<std::int64_t>(std::ceil(center + 2.0 * s));
        double total = 0.0;
        std::vector<std::pair<std::int64_t, double>> taps;
        for (std::int64_t j = lo; j <= hi; ++j) {
            const double k = catmull_rom((center - static_cast<double>(j)) / s);
            if (k == 0.0) continue;
            std::int64_t m = j;
            if (m < 0) m = -m - 1;
            if (m >= in_size) m = 2 * in_size - m - 1;
            m = std::clamp<std::int64_t>(m, 0, in_size - 1);
            taps.emplace_back(m, k);
            total += k;
        }
        for (const auto& [m, k] : taps) acc[i][m] += k / total;
    }
    return w;
}

torch::Tensor bicubic_downsample(const torch::Tensor& image, std::int64_t factor) {
    const bool batched = image.dim() == 4;
    auto x = batched ? image : image.unsqueeze(0);
    require_4d(x, "bicubic downsample");
    const auto wy = bicubic_weights(x.size(2), factor);
    const auto wx = bicubic_weights(x.size(3), factor);
    auto out = torch::matmul(torch::matmul(wy, x.to(torch::kFloat64)), wx.t());
    out = out.to(image.scalar_type());
    return batched ? out : out.squeeze(0);
}

torch::Tensor gaussian_blur(const torch::Tensor& image, double sigma) {
    if (!(sigma > 0.0)) return image;
    const bool batched = image.dim() == 4;
    auto x = batched ? image : image.unsqueeze(0);
    require_4d(x, "gaussian blur");
    const auto radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
    auto idx = torch::arange(-radius, radius + 1, torch::kFloat64);
    auto taps = torch::exp(-(idx * idx) / (2.0 * sigma * sigma));
    taps = (taps / taps.sum()).to(x.scalar_type());
    const auto n = x.size(0) * x.size(1);
    auto flat = x.reshape({n, 1, x.size(2), x.size(3)});
    flat = F::pad(flat, F::PadFuncOptions({radius, radius, radius, radius}).mode(torch::kReplicate));
    const auto k = 2 * radius + 1;
    flat = torch::conv2d(flat, taps.view({1, 1, k, 1}));
    flat = torch::conv2d(flat, taps.view({1, 1, 1, k}));
    auto out = flat.reshape(x.sizes());
    return batched ? out : out.squeeze(0);
}

torch::Tensor degrade(const torch::Tensor& hr, const DegradationSpec& spec, std::uint64_t seed) {
    spec.validate();
    const bool batched = hr.dim() == 4;
    auto x = (batched ? hr : hr.unsqueeze(0)).to(torch::kFloat64);
    require_4d(x, "degrade");
    if (x.size(2) % spec.scale != 0 || x.size(3) % spec.scale != 0) {
        throw ShapeError("degrade: HR size " + std::to_string(x.size(2)) + "x" +
                         std::to_string(x.size(3)) + " is not divisible by scale " +
                         std::to_string(spec.scale));
    }
    auto lr = bicubic_downsample(gaussian_blur(x, spec.blur_sigma), spec.scale);
    if (spec.noise_sigma > 0.0) {
        auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
        lr = lr + torch::randn(lr.sizes(), gen, torch::kFloat64) * spec.noise_sigma;
    }
    lr = lr.clamp(0.0, 1.0).to(torch::kFloat32);
    return batched ? lr : lr.squeeze(0);
}

// ---------------------------------------------------------------------------
// Augmentation

torch::Tensor apply_dihedral(const torch::Tensor& image, int element) {
    if (element < 0 || element > 7) throw ConfigError("dihedral element must lie in [0, 7]");
    auto out = element >= 4 ? image.flip({-1}) : image;
    const int quarter_turns = element % 4;
    if (quarter_turns != 0) out = torch::rot90(out, quarter_turns, {-2, -1});
    return out.contiguous();
}

int dihedral_from_seed(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return static_cast<int>(rng() % 8);
}

std::pair<torch::Tensor, torch::Tensor> augment(const torch::Tensor& lr_patch,
                                                const torch::Tensor& hr_patch, std::uint64_t seed) {
    const int element = dihedral_from_seed(seed);
    return {apply_dihedral(lr_patch, element), apply_dihedral(hr_patch, element)};
}

// ---------------------------------------------------------------------------
// Procedural corpus

namespace {

using Color = std::array<double, 3>;

class Canvas {
public:
    explicit Canvas(std::int64_t size) : size_(size), px_(3 * size * size, 0.0) {}

    std::int64_t size() const { return size_; }

    void blend(std::int64_t y, std::int64_t x, const Color& c, double alpha) {
        if (y < 0 || x < 0 || y >= size_ || x >= size_ || alpha <= 0.0) return;
        alpha = std::min(alpha, 1.0);
        for (int ch = 0; ch < 3; ++ch) {
            auto& v = px_[(ch * size_ + y) * size_ + x];
            v = (1.0 - alpha) * v + alpha * c[ch];
        }
    }

    torch::Tensor to_tensor() const {
        return torch::tensor(px_, torch::kFloat64).reshape({3, size_, size_}).clamp(0.0, 1.0).to(torch::kFloat32);
    }

private:
    std::int64_t size_;
    std::vector<double> px_;
};

struct Rng {
    explicit Rng(std::uint64_t seed) : engine(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine); }
    std::int64_t integer(std::int64_t lo, std::int64_t hi) {
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine);
    }
    Color color() { return {uniform(0, 1), uniform(0, 1), uniform(0, 1)}; }
    std::mt19937_64 engine;
};

void paint_gradient(Canvas& cv, Rng& rng) {
    const Color a = rng.color();
    const Color b = rng.color();
    const double theta = rng.uniform(0.0, 2.0 * M_PI);
    const double dx = std::cos(theta);
    const double dy = std::sin(theta);
    const double n = static_cast<double>(cv.size());
    for (std::int64_t y = 0; y < cv.size(); ++y) {
        for (std::int64_t x = 0; x < cv.size(); ++x) {
            const double u = 0.5 + ((x / n - 0.5) * dx + (y / n - 0.5) * dy) / std::sqrt(2.0);
            const Color c{a[0] + (b[0] - a[0]) * u, a[1] + (b[1] - a[1]) * u, a[2] + (b[2] - a[2]) * u};
            cv.blend(y, x, c, 1.0);
        }
    }
}

void paint_checker_panel(Canvas& cv, Rng& rng) {
    const auto n = cv.size();
    const auto w = rng.integer(n / 6, n / 2);
    const auto h = rng.integer(n / 6, n / 2);
    const auto y0 = rng.integer(0, n - h);
    const auto x0 = rng.integer(0, n - w);
    const double period = rng.uniform(3.0, 16.0);
    const double theta = rng.uniform(0.0, M_PI);
    const Color c0 = rng.color();
    const Color c1 = rng.color();
    const double ct = std::cos(theta);
    const double st = std::sin(theta);
    for (std::int64_t y = y0; y < y0 + h; ++y) {
        for (std::int64_t x = x0; x < x0 + w; ++x) {
            const double u = (x * ct + y * st) / period;
            const double v = (-x * st + y * ct) / period;
            const bool odd = (static_cast<std::int64_t>(std::floor(u)) + static_cast<std::int64_t>(std::floor(v))) & 1;
            cv.blend(y, x, odd ? c1 : c0, 1.0);
        }
    }
}

void paint_blob(Canvas& cv, Rng& rng) {
    const auto n = static_cast<double>(cv.size());
    const double cy = rng.uniform(0, n);
    const double cx = rng.uniform(0, n);
    const double sigma = rng.uniform(n / 40.0, n / 6.0);
    const double peak = rng.uniform(0.4, 1.0);
    const Color c = rng.color();
    const auto r = static_cast<std::int64_t>(3.0 * sigma);
    for (auto y = static_cast<std::int64_t>(cy) - r; y <= static_cast<std::int64_t>(cy) + r; ++y) {
        for (auto x = static_cast<std::int64_t>(cx) - r; x <= static_cast<std::int64_t>(cx) + r; ++x) {
            const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            cv.blend(y, x, c, peak * std::exp(-d2 / (2.0 * sigma * sigma)));
        }
    }
}

// Anti-aliased thick polyline, roughly the footprint of a handwritten glyph.
void paint_glyph(Canvas& cv, Rng& rng) {
    const auto n = static_cast<double>(cv.size());
    const double scale = rng.uniform(n / 16.0, n / 5.0);
    const double oy = rng.uniform(0, n);
    const double ox = rng.uniform(0, n);
    const double thickness = rng.uniform(0.8, 2.5);
    const bool dark = rng.uniform(0, 1) < 0.5;
    const Color c = dark ? Color{rng.uniform(0, 0.2), rng.uniform(0, 0.2), rng.uniform(0, 0.2)}
                         : Color{rng.uniform(0.8, 1), rng.uniform(0.8, 1), rng.uniform(0.8, 1)};
    const auto points = rng.integer(3, 5);
    std::vector<std::array<double, 2>> pts;
    for (std::int64_t i = 0; i < points; ++i) {
        pts.push_back({oy + rng.uniform(-0.5, 0.5) * scale, ox + rng.uniform(-0.5, 0.5) * scale});
    }
    for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
        const auto [ay, ax] = pts[s];
        const auto [by, bx] = pts[s + 1];
        const double ly = by - ay;
        const double lx = bx - ax;
        const double len2 = std::max(ly * ly + lx * lx, 1e-9);
        const auto y_lo = static_cast<std::int64_t>(std::floor(std::min(ay, by) - thickness - 1));
        const auto y_hi = static_cast<std::int64_t>(std::ceil(std::max(ay, by) + thickness + 1));
        const auto x_lo = static_cast<std::int64_t>(std::floor(std::min(ax, bx) - thickness - 1));
        const auto x_hi = static_cast<std::int64_t>(std::ceil(std::max(ax, bx) + thickness + 1));
        for (auto y = y_lo; y <= y_hi; ++y) {
            for (auto x = x_lo; x <= x_hi; ++x) {
                const double t = std::clamp(((y - ay) * ly + (x - ax) * lx) / len2, 0.0, 1.0);
                const double dy = y - (ay + t * ly);
                const double dx = x - (ax + t * lx);
                const double d = std::sqrt(dy * dy + dx * dx);
                cv.blend(y, x, c, std::clamp(thickness + 0.5 - d, 0.0, 1.0));
            }
        }
    }
}

}  // namespace

torch::Tensor procedural_image(std::int64_t size, std::uint64_t seed) {
    if (size < 8) throw ConfigError("procedural image: size must be >= 8");
    Canvas cv(size);
    Rng rng(mix_seed(seed, 0x5eed));
    paint_gradient(cv, rng);
    for (auto i = rng.integer(1, 3); i > 0; --i) paint_checker_panel(cv, rng);
    for (auto i = rng.integer(3, 8); i > 0; --i) paint_blob(cv, rng);
    for (auto i = rng.integer(4, 12); i > 0; --i) paint_glyph(cv, rng);
    return cv.to_tensor();
}

// ---------------------------------------------------------------------------
// Datasets

PairedDataset::PairedDataset(std::vector<PairRecord> records, std::vector<torch::Tensor> lr,
                             std::vector<torch::Tensor> hr, std::int64_t scale)
    : records_(std::move(records)), lr_(std::move(lr)), hr_(std::move(hr)), scale_(scale) {
    if (!hr_.empty() && hr_.size() != lr_.size()) {
        throw ConfigError("dataset: LR and HR image counts differ");
    }
    for (std::size_t i = 0; i < lr_.size(); ++i) {
        if (lr_[i].dim() != 3 || lr_[i].size(0) != 3) {
            throw ShapeError("dataset: LR image " + std::to_string(i) + " is not 3 x H x W");
        }
        if (hr_.empty()) continue;
        if (hr_[i].size(1) != scale_ * lr_[i].size(1) || hr_[i].size(2) != scale_ * lr_[i].size(2)) {
            throw ShapeError("dataset: HR image " + std::to_string(i) + " (" + shape_string(hr_[i]) +
                             ") is not " + std::to_string(scale_) + "x its LR image (" +
                             shape_string(lr_[i]) + ")");
        }
    }
}

PairedDataset PairedDataset::load(const std::filesystem::path& manifest, std::int64_t scale) {
    std::ifstream in(manifest);
    if (!in) throw ConfigError("cannot open dataset manifest " + manifest.string());
    const auto root = manifest.parent_path();
    std::vector<PairRecord> records;
    std::string line;
    std::size_t line_no = 0;
    bool any_unpaired = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::string lr, hr, extra;
        if (!(fields >> lr)) continue;
        fields >> hr;
        if (fields >> extra) {
            throw ParseError(manifest.string() + ":" + std::to_string(line_no) +
                             ": expected '<lr> [<hr>]'");
        }
        any_unpaired = any_unpaired || hr.empty();
        records.push_back({root / lr, hr.empty() ? std::filesystem::path{} : root / hr});
    }
    if (records.empty()) throw ConfigError("dataset manifest " + manifest.string() + " lists no images");
    const bool paired = !any_unpaired;
    std::vector<torch::Tensor> lr_images;
    std::vector<torch::Tensor> hr_images;
    for (const auto& r : records) {
        lr_images.push_back(read_png(r.lr_path));
        if (paired) hr_images.push_back(read_png(r.hr_path));
    }
    if (scale == 0) {
        scale = paired ? hr_images.front().size(1) / lr_images.front().size(1) : 4;
    }
    return PairedDataset(std::move(records), std::move(lr_images), std::move(hr_images), scale);
}

std::int64_t PairedDataset::min_lr_extent() const {
    std::int64_t m = std::numeric_limits<std::int64_t>::max();
    for (const auto& t : lr_) m = std::min({m, t.size(1), t.size(2)});
    return lr_.empty() ? 0 : m;
}

PairedDataset PairedDataset::slice(std::size_t first, std::size_t count) const {
    if (first + count > size()) throw ConfigError("dataset slice out of range");
    auto cut = [&](const auto& v) {
        using V = std::decay_t<decltype(v)>;
        if (v.empty()) return V{};
        return V(v.begin() + static_cast<std::ptrdiff_t>(first),
                 v.begin() + static_cast<std::ptrdiff_t>(first + count));
    };
    return PairedDataset(cut(records_), cut(lr_), cut(hr_), scale_);
}

void write_manifest(const std::filesystem::path& manifest, const std::vector<PairRecord>& records) {
    const auto root = manifest.parent_path();
    std::ofstream out(manifest);
    if (!out) throw ConfigError("cannot write manifest " + manifest.string());
    // Relative record paths are taken to be relative to the manifest already.
    auto rel = [&root](const std::filesystem::path& p) {
        return (p.is_relative() ? p : std::filesystem::relative(p, root)).generic_string();
    };
    out << "# lr hr\n";
    for (const auto& r : records) {
        out << rel(r.lr_path);
        if (!r.hr_path.empty()) out << ' ' << rel(r.hr_path);
        out << '\n';
    }
}

BatchStream::BatchStream(const PairedDataset& dataset, std::int64_t batch_size, std::int64_t patch_size,
                         std::uint64_t seed)
    : dataset_(&dataset), batch_size_(batch_size), patch_size_(patch_size), seed_(seed) {
    if (dataset.empty()) throw ConfigError("batch stream: dataset is empty");
    if (!dataset.paired()) throw ConfigError("batch stream: training needs a paired dataset");
    if (batch_size < 1) throw ConfigError("batch stream: batch_size must be >= 1");
    if (patch_size < 1 || patch_size > dataset.min_lr_extent()) {
        throw ConfigError("batch stream: patch " + std::to_string(patch_size) + " (HR " +
                          std::to_string(patch_size * dataset.scale()) +
                          ") does not fit the smallest image (LR " +
                          std::to_string(dataset.min_lr_extent()) + ")");
    }
}

std::vector<std::size_t> BatchStream::epoch_order(std::int64_t epoch) const {
    std::vector<std::size_t> order(dataset_->size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(seed_, static_cast<std::uint64_t>(epoch) * 2 + 1));
    // Fisher-Yates with an explicit draw so the order does not depend on the
    // standard library's shuffle implementation.
    for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

BatchStream::Crop BatchStream::crop_for(std::int64_t sample) const {
    const auto n = static_cast<std::int64_t>(dataset_->size());
    const auto order = epoch_order(sample / n);
    Crop crop{};
    crop.image = order[static_cast<std::size_t>(sample % n)];
    const auto& lr = dataset_->lr(crop.image);
    std::mt19937_64 rng(mix_seed(seed_, static_cast<std::uint64_t>(sample) * 2));
    crop.lr_y = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(lr.size(1) - patch_size_ + 1));
    crop.lr_x = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(lr.size(2) - patch_size_ + 1));
    crop.dihedral = static_cast<int>(rng() % 8);
    return crop;
}

Batch BatchStream::batch(std::int64_t iteration) const {
    std::vector<torch::Tensor> lrs;
    std::vector<torch::Tensor> hrs;
    const auto s = dataset_->scale();
    for (std::int64_t slot = 0; slot < batch_size_; ++slot) {
        const auto crop = crop_for(iteration * batch_size_ + slot);
        const auto lr = dataset_->lr(crop.image)
                            .narrow(1, crop.lr_y, patch_size_)
                            .narrow(2, crop.lr_x, patch_size_);
        const auto hr = dataset_->hr(crop.image)
                            .narrow(1, crop.lr_y * s, patch_size_ * s)
                            .narrow(2, crop.lr_x * s, patch_size_ * s);
        lrs.push_back(apply_dihedral(lr, crop.dihedral));
        hrs.push_back(apply_dihedral(hr, crop.dihedral));
    }
    return {torch::stack(lrs), torch::stack(hrs)};
}

}  // namespace criacl
