#include "criacl/trainer.hpp"

#include "criacl/archive.hpp"
#include "criacl/errors.hpp"
#include "criacl/log.hpp"
#include "criacl/metrics.hpp"
#include "criacl/tensor_util.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace criacl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kCheckpointFormat = "criacl-checkpoint";

// ---------------------------------------------------------------------------
// Field registry helpers

json value_json(double v) { return v; }
json value_json(std::int64_t v) { return v; }
json value_json(std::uint64_t v) { return v; }
json value_json(bool v) { return v; }
json value_json(const std::string& v) { return v; }
json value_json(const std::vector<std::int64_t>& v) { return v; }
json value_json(PixelNorm v) { return std::string(to_string(v)); }
json value_json(TrainMode v) { return std::string(to_string(v)); }
json value_json(AnchorChoice v) { return std::string(to_string(v)); }

[[noreturn]] void bad_value(const std::string& name, const json& j, const char* expected) {
    throw ConfigError("config field '" + name + "': expected " + expected + ", got " + j.dump());
}

void assign(double& out, const json& j, const std::string& name) {
    if (!j.is_number()) bad_value(name, j, "a number");
    out = j.get<double>();
}

void assign(std::int64_t& out, const json& j, const std::string& name) {
    if (!j.is_number_integer()) bad_value(name, j, "an integer");
    out = j.get<std::int64_t>();
}

void assign(std::uint64_t& out, const json& j, const std::string& name) {
    if (!j.is_number_unsigned()) bad_value(name, j, "a non-negative integer");
    out = j.get<std::uint64_t>();
}

void assign(bool& out, const json& j, const std::string& name) {
    if (!j.is_boolean()) bad_value(name, j, "true or false");
    out = j.get<bool>();
}

void assign(std::string& out, const json& j, const std::string& name) {
    if (!j.is_string()) bad_value(name, j, "a string");
    out = j.get<std::string>();
}

void assign(std::vector<std::int64_t>& out, const json& j, const std::string& name) {
    if (!j.is_array()) bad_value(name, j, "a list of integers");
    std::vector<std::int64_t> v;
    for (const auto& e : j) {
        if (!e.is_number_integer()) bad_value(name, j, "a list of integers");
        v.push_back(e.get<std::int64_t>());
    }
    out = std::move(v);
}

void assign(PixelNorm& out, const json& j, const std::string& name) {
    if (!j.is_string()) bad_value(name, j, "l1 or l2");
    out = pixel_norm_from_string(j.get<std::string>());
}

void assign(TrainMode& out, const json& j, const std::string& name) {
    if (!j.is_string()) bad_value(name, j, "a mode name");
    out = train_mode_from_string(j.get<std::string>());
}

void assign(AnchorChoice& out, const json& j, const std::string& name) {
    if (!j.is_string()) bad_value(name, j, "pix, per or adv");
    out = anchor_from_string(j.get<std::string>());
}

template <class Access>
ConfigField field(std::string name, std::string help, Access access, bool resumable = false) {
    ConfigField f;
    f.name = name;
    f.help = std::move(help);
    f.resumable_change = resumable;
    f.get = [access](const TrainConfig& c) { return value_json(access(const_cast<TrainConfig&>(c))); };
    f.set = [access, name](TrainConfig& c, const json& j) { assign(access(c), j, name); };
    return f;
}

std::vector<ConfigField> build_registry() {
    std::vector<ConfigField> r;
    r.push_back(field("alpha", "pixel loss weight", [](TrainConfig& c) -> auto& { return c.alpha; }));
    r.push_back(field("beta", "perceptual loss weight", [](TrainConfig& c) -> auto& { return c.beta; }));
    r.push_back(field("gamma", "adversarial loss weight", [](TrainConfig& c) -> auto& { return c.gamma; }));
    r.push_back(field("lambda_a", "alignment term weight", [](TrainConfig& c) -> auto& { return c.lambda_a; }));
    r.push_back(field("lambda_u", "uniformity term weight", [](TrainConfig& c) -> auto& { return c.lambda_u; }));
    r.push_back(field("eta", "alignment exponent (>= 1)", [](TrainConfig& c) -> auto& { return c.eta; }));
    r.push_back(field("t", "uniformity temperature (> 0)", [](TrainConfig& c) -> auto& { return c.t; }));
    r.push_back(field("unif_halving", "halve the uniformity term",
                      [](TrainConfig& c) -> auto& { return c.unif_halving; }));
    r.push_back(field("pixel_norm", "pixel criterion norm: l1 or l2",
                      [](TrainConfig& c) -> auto& { return c.pixel_norm; }));
    r.push_back(field("lr0", "initial learning rate", [](TrainConfig& c) -> auto& { return c.lr0; }));
    r.push_back(field("lr_half_period", "iterations between learning-rate halvings",
                      [](TrainConfig& c) -> auto& { return c.lr_half_period; }));
    r.push_back(field("adam_beta1", "Adam beta1", [](TrainConfig& c) -> auto& { return c.adam_beta1; }));
    r.push_back(field("adam_beta2", "Adam beta2", [](TrainConfig& c) -> auto& { return c.adam_beta2; }));
    r.push_back(field("batch_size", "patches per batch", [](TrainConfig& c) -> auto& { return c.batch_size; }));
    r.push_back(field("patch_size", "LR patch size in pixels",
                      [](TrainConfig& c) -> auto& { return c.patch_size; }));
    r.push_back(field("total_iters", "training iterations",
                      [](TrainConfig& c) -> auto& { return c.total_iters; }, true));
    r.push_back(field("mode", "full, wsum_baseline, +align_only, +unif_only or no_masks",
                      [](TrainConfig& c) -> auto& { return c.mode; }));
    r.push_back(field("anchor", "anchor criterion: pix, per or adv",
                      [](TrainConfig& c) -> auto& { return c.anchor; }));
    r.push_back(field("seed", "global seed", [](TrainConfig& c) -> auto& { return c.seed; }));
    r.push_back(field("deterministic", "single-threaded bit-reproducible execution",
                      [](TrainConfig& c) -> auto& { return c.deterministic; }));
    r.push_back(field("generator.num_rrdb", "RRDB blocks in the trunk",
                      [](TrainConfig& c) -> auto& { return c.generator.num_rrdb; }));
    r.push_back(field("generator.base_channels", "trunk width",
                      [](TrainConfig& c) -> auto& { return c.generator.base_channels; }));
    r.push_back(field("generator.growth_channels", "dense block growth",
                      [](TrainConfig& c) -> auto& { return c.generator.growth_channels; }));
    r.push_back(field("generator.head_channels", "branch head width",
                      [](TrainConfig& c) -> auto& { return c.generator.head_channels; }));
    r.push_back(field("generator.mask_channels", "mask network width",
                      [](TrainConfig& c) -> auto& { return c.generator.mask_channels; }));
    r.push_back(field("generator.scale", "upsampling factor: 2 or 4",
                      [](TrainConfig& c) -> auto& { return c.generator.scale; }));
    r.push_back(field("generator.branch_blocks", "residual blocks per branch head (3)",
                      [](TrainConfig& c) -> auto& { return c.generator.branch_blocks; }));
    r.push_back(field("discriminator.num_layers", "discriminator conv layers (>= 3)",
                      [](TrainConfig& c) -> auto& { return c.discriminator.num_layers; }));
    r.push_back(field("discriminator.base_channels", "discriminator width",
                      [](TrainConfig& c) -> auto& { return c.discriminator.base_channels; }));
    r.push_back(field("extractor.seed", "feature extractor seed",
                      [](TrainConfig& c) -> auto& { return c.extractor.seed; }));
    r.push_back(field("extractor.channel_widths", "feature extractor stage widths",
                      [](TrainConfig& c) -> auto& { return c.extractor.channel_widths; }));
    r.push_back(field("extractor.weights", "optional extractor weight file",
                      [](TrainConfig& c) -> auto& { return c.extractor.weights; }));
    r.push_back(field("checkpoint_every", "iterations between checkpoints (0: final only)",
                      [](TrainConfig& c) -> auto& { return c.checkpoint_every; }, true));
    r.push_back(field("val_every", "iterations between validation passes (0: never)",
                      [](TrainConfig& c) -> auto& { return c.val_every; }, true));
    return r;
}

const ConfigField& find_field(std::string_view name) {
    for (const auto& f : config_fields()) {
        if (f.name == name) return f;
    }
    throw ConfigError("unknown config field '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Training helpers

void set_lr(torch::optim::Adam& opt, double lr) {
    for (auto& group : opt.param_groups()) {
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    }
}

void check_gradients(const torch::nn::Module& module, const char* group, std::int64_t iteration) {
    for (const auto& p : module.named_parameters()) {
        const auto& g = p.value().grad();
        if (g.defined() && !torch::isfinite(g).all().item<bool>()) {
            throw NumericError("non-finite gradient in parameter group '" + std::string(group) + "' (" +
                               p.key() + ") at iteration " + std::to_string(iteration));
        }
    }
}

// Disables discriminator gradients for the generator update and restores
// them on every exit path.
class FreezeGuard {
public:
    explicit FreezeGuard(torch::nn::Module& m) : module_(m) {
        for (auto& p : module_.parameters()) p.set_requires_grad(false);
    }
    ~FreezeGuard() {
        for (auto& p : module_.parameters()) p.set_requires_grad(true);
    }
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

private:
    torch::nn::Module& module_;
};

bool uses_align(TrainMode m) {
    return m == TrainMode::full || m == TrainMode::align_only || m == TrainMode::no_masks;
}
bool uses_unif(TrainMode m) {
    return m == TrainMode::full || m == TrainMode::unif_only || m == TrainMode::no_masks;
}

std::set<CriterionKind> with_anchor(CriterionKind anchor, const std::vector<CriterionKind>& others) {
    std::set<CriterionKind> kinds(others.begin(), others.end());
    kinds.insert(anchor);
    return kinds;
}

std::vector<torch::Tensor> maps_of(const CriteriaEvaluation& ev, const std::vector<CriterionKind>& kinds) {
    std::vector<torch::Tensor> out;
    for (auto k : kinds) out.push_back(ev.at(k).map);
    return out;
}

void require_finite(const torch::Tensor& t, const char* name) {
    if (!std::isfinite(t.item<double>())) {
        throw NumericError("non-finite loss term '" + std::string(name) + "'");
    }
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double mean_validation_psnr(TrainState& state, const PairedDataset& val) {
    double sum = 0.0;
    for (std::size_t i = 0; i < val.size(); ++i) {
        sum += psnr(super_resolve(state, val.lr(i)), val.hr(i));
    }
    return sum / static_cast<double>(val.size());
}

// Keeps the header and the rows of steps before `iteration`.
void truncate_log(const fs::path& path, std::int64_t iteration) {
    std::vector<std::string> kept;
    if (std::ifstream in(path); in) {
        std::string line;
        bool header = true;
        while (std::getline(in, line)) {
            if (header) {
                header = false;
                continue;
            }
            if (line.empty()) continue;
            const auto it = std::stoll(line.substr(0, line.find(',')));
            if (it < iteration) kept.push_back(line);
        }
    }
    std::ofstream out(path, std::ios::trunc);
    out << kMetricsHeader << '\n';
    for (const auto& l : kept) out << l << '\n';
}

std::string checkpoint_name(std::int64_t iteration) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_%07lld.pt", static_cast<long long>(iteration));
    return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

std::string_view to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::full: return "full";
        case TrainMode::wsum_baseline: return "wsum_baseline";
        case TrainMode::align_only: return "+align_only";
        case TrainMode::unif_only: return "+unif_only";
        case TrainMode::no_masks: return "no_masks";
    }
    return "?";
}

TrainMode train_mode_from_string(std::string_view name) {
    for (auto m : {TrainMode::full, TrainMode::wsum_baseline, TrainMode::align_only, TrainMode::unif_only,
                   TrainMode::no_masks}) {
        if (to_string(m) == name) return m;
    }
    throw ConfigError("unknown mode '" + std::string(name) +
                      "' (expected full, wsum_baseline, +align_only, +unif_only or no_masks)");
}

void TrainConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError("config: " + msg);
    };
    for (auto [name, w] : {std::pair{"alpha", alpha}, {"beta", beta}, {"gamma", gamma},
                           {"lambda_a", lambda_a}, {"lambda_u", lambda_u}}) {
        require(w >= 0.0 && std::isfinite(w), std::string(name) + " must be a finite value >= 0");
    }
    comparative().validate();
    require(lr0 > 0.0, "lr0 must be > 0");
    require(lr_half_period >= 1, "lr_half_period must be >= 1");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1 must lie in [0, 1)");
    require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must lie in [0, 1)");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(total_iters >= 1, "total_iters must be >= 1");
    require(checkpoint_every >= 0, "checkpoint_every must be >= 0");
    require(val_every >= 0, "val_every must be >= 0");
    generator.validate();
    discriminator.validate();
    require(!extractor.channel_widths.empty(), "extractor.channel_widths must be non-empty");
    for (auto w : extractor.channel_widths) require(w > 0, "extractor.channel_widths must be positive");
    require(patch_size >= 16, "patch_size must be >= 16 (generator minimum input)");
    const auto hr = patch_size * generator.scale;
    const auto factor = std::int64_t{1} << extractor.channel_widths.size();
    require(hr % 8 == 0, "patch_size * scale must be divisible by 8 (discriminator)");
    require(hr % factor == 0, "patch_size * scale must be divisible by the extractor factor " +
                                  std::to_string(factor));
    partition().validate();
}

const std::vector<ConfigField>& config_fields() {
    static const std::vector<ConfigField> registry = build_registry();
    return registry;
}

json to_json(const TrainConfig& config) {
    json j = json::object();
    for (const auto& f : config_fields()) {
        j[json::json_pointer("/" + [&] {
            std::string p = f.name;
            for (auto& ch : p) {
                if (ch == '.') ch = '/';
            }
            return p;
        }())] = f.get(config);
    }
    return j;
}

TrainConfig config_from_json(const json& j, TrainConfig base) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    std::function<void(const json&, const std::string&)> walk = [&](const json& node, const std::string& prefix) {
        for (const auto& [key, value] : node.items()) {
            const auto name = prefix.empty() ? key : prefix + "." + key;
            if (value.is_object()) {
                walk(value, name);
            } else {
                find_field(name).set(base, value);
            }
        }
    };
    walk(j, "");
    return base;
}

TrainConfig load_config(const fs::path& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j, std::move(base));
}

void set_field(TrainConfig& config, std::string_view name, const std::string& text) {
    const auto& f = find_field(name);
    json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (value.is_discarded()) value = text;
    f.set(config, value);
}

std::vector<std::string> config_diff(const TrainConfig& from, const TrainConfig& to, bool ignore_resumable) {
    std::vector<std::string> out;
    for (const auto& f : config_fields()) {
        if (ignore_resumable && f.resumable_change) continue;
        const auto a = f.get(from);
        const auto b = f.get(to);
        if (a != b) out.push_back(f.name + ": " + a.dump() + " -> " + b.dump());
    }
    return out;
}

double lr_at(const TrainConfig& config, std::int64_t iteration) {
    return config.lr0 * std::pow(0.5, static_cast<double>(iteration / config.lr_half_period));
}

// ---------------------------------------------------------------------------
// Objective

LossTerms total_loss(const torch::Tensor& sr, const torch::Tensor& align, const torch::Tensor& unif,
                     const SpatialMasks& masks, const torch::Tensor& hf, const TrainConfig& config,
                     const FeatureExtractor& extractor, const LogitFn& discriminator) {
    require_same_shape(sr, hf, "total loss (I_SR vs I_hf)");
    require_same_shape(align, hf, "total loss (I_align vs I_hf)");
    require_same_shape(unif, hf, "total loss (I_unif vs I_hf)");
    const CriteriaContext ctx{&extractor, &discriminator, config.pixel_norm};

    LossTerms out;
    const auto main = evaluate_criteria(sr, hf, {CriterionKind::pix, CriterionKind::perc_bottom, CriterionKind::adv},
                                        Branch::composed, ctx);
    out.l_pix = main.at(CriterionKind::pix).map.mean();
    out.l_per = main.at(CriterionKind::perc_bottom).map.mean();
    out.l_adv = main.at(CriterionKind::adv).map.mean();
    out.l_align = torch::zeros({}, sr.options());
    out.l_unif = torch::zeros({}, sr.options());

    const bool want_align = uses_align(config.mode);
    const bool want_unif = uses_unif(config.mode);
    if (want_align || want_unif) {
        const auto part = config.partition();
        const auto cc = config.comparative();
        torch::Tensor align_map = torch::zeros_like(masks.s);
        torch::Tensor unif_map = torch::zeros_like(masks.s_hat);
        if (want_align) {
            const auto ev = evaluate_criteria(align, hf, with_anchor(part.anchor, part.positives), Branch::align, ctx);
            align_map = align_loss(ev.at(part.anchor).map, maps_of(ev, part.positives), cc.eta);
        }
        if (want_unif) {
            const auto ev = evaluate_criteria(unif, hf, with_anchor(part.anchor, part.negatives), Branch::unif, ctx);
            unif_map = unif_loss(ev.at(part.anchor).map, maps_of(ev, part.negatives), cc.t);
        }
        // Without masks the comparative terms cover the whole image.
        const SpatialMasks weights = config.mode == TrainMode::no_masks
                                         ? SpatialMasks{torch::ones_like(masks.s), torch::ones_like(masks.s_hat)}
                                         : masks;
        const auto terms = combine_terms(align_map, unif_map, weights, config.lambda_a, config.lambda_u, cc);
        if (want_align) out.l_align = terms.align;
        if (want_unif) out.l_unif = terms.unif;
    }

    out.total = config.alpha * out.l_pix + config.beta * out.l_per + config.gamma * out.l_adv +
                config.lambda_a * out.l_align + config.lambda_u * out.l_unif;

    require_finite(out.l_pix, "l_pix");
    require_finite(out.l_per, "l_per");
    require_finite(out.l_adv, "l_adv");
    require_finite(out.l_align, "l_align");
    require_finite(out.l_unif, "l_unif");
    require_finite(out.total, "total");
    return out;
}

// ---------------------------------------------------------------------------
// State

TrainState init_state(const TrainConfig& config) {
    config.validate();
    if (config.deterministic) {
        at::set_num_threads(1);
        at::globalContext().setDeterministicAlgorithms(true, false);
    }
    torch::manual_seed(config.seed);

    TrainState st;
    st.config = config;
    st.generator = Generator(config.generator);
    st.mask_net = MaskNet(config.generator);
    st.discriminator = Discriminator(config.discriminator);
    if (config.extractor.weights.empty()) {
        st.extractor = build_extractor(config.extractor.seed, config.extractor.channel_widths);
    } else {
        st.extractor = load_extractor(config.extractor.weights);
        if (st.extractor->channel_widths() != config.extractor.channel_widths) {
            throw ConfigError("extractor weight file " + config.extractor.weights +
                              " does not match extractor.channel_widths");
        }
    }

    const auto adam = torch::optim::AdamOptions(config.lr0).betas({config.adam_beta1, config.adam_beta2});
    auto g_params = st.generator->parameters();
    for (auto& p : st.mask_net->parameters()) g_params.push_back(p);
    st.g_optimizer = std::make_unique<torch::optim::Adam>(g_params, adam);
    st.d_optimizer = std::make_unique<torch::optim::Adam>(st.discriminator->parameters(), adam);
    return st;
}

Forward forward(TrainState& state, const torch::Tensor& lr) {
    Forward out;
    out.branches = state.generator->forward(lr);
    const auto& a = out.branches.align;
    out.masks = state.config.mode == TrainMode::no_masks
                    ? SpatialMasks::uniform(a.size(0), a.size(2), a.size(3), 0.5, a.options())
                    : state.mask_net->forward(lr);
    out.sr = compose(out.branches.align, out.branches.unif, out.masks);
    return out;
}

StepReport train_step(TrainState& state, const Batch& batch) {
    const auto start = std::chrono::steady_clock::now();
    const auto& cfg = state.config;
    StepReport report;
    report.iteration = state.iteration;
    report.lr = lr_at(cfg, state.iteration);
    set_lr(*state.g_optimizer, report.lr);
    set_lr(*state.d_optimizer, report.lr);

    auto fw = forward(state, batch.lr);

    auto d_loss = discriminator_loss(state.discriminator->forward(batch.hr),
                                     state.discriminator->forward(fw.sr.detach()));
    report.d_loss = d_loss.item<double>();
    if (!std::isfinite(report.d_loss)) {
        throw NumericError("non-finite discriminator loss at iteration " + std::to_string(state.iteration));
    }
    state.d_optimizer->zero_grad();
    d_loss.backward();
    check_gradients(*state.discriminator, "discriminator", state.iteration);
    state.d_optimizer->step();

    {
        FreezeGuard frozen(*state.discriminator);
        const LogitFn logits = [&state](const torch::Tensor& x) { return state.discriminator->forward(x); };
        LossTerms terms;
        try {
            terms = total_loss(fw.sr, fw.branches.align, fw.branches.unif, fw.masks, batch.hr, cfg,
                               state.extractor, logits);
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " at iteration " + std::to_string(state.iteration));
        }
        state.g_optimizer->zero_grad();
        terms.total.backward();
        check_gradients(*state.generator, "generator", state.iteration);
        check_gradients(*state.mask_net, "mask_net", state.iteration);
        state.g_optimizer->step();

        report.l_pix = terms.l_pix.item<double>();
        report.l_per = terms.l_per.item<double>();
        report.l_adv = terms.l_adv.item<double>();
        report.l_align = terms.l_align.item<double>();
        report.l_unif = terms.l_unif.item<double>();
        report.total = terms.total.item<double>();
    }
    ++state.iteration;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

torch::Tensor super_resolve(TrainState& state, const torch::Tensor& lr) {
    torch::NoGradGuard guard;
    const bool single = lr.dim() == 3;
    const auto x = single ? lr.unsqueeze(0) : lr;
    auto out = forward(state, x).sr.clamp(0.0, 1.0);
    return single ? out.squeeze(0) : out;
}

std::uint64_t model_checksum(const TrainState& state) {
    std::uint64_t h = parameter_checksum(*state.generator);
    h = h * 31 + parameter_checksum(*state.mask_net);
    h = h * 31 + parameter_checksum(*state.discriminator);
    return h;
}

void save_checkpoint(const TrainState& state, const fs::path& path) {
    json manifest;
    manifest["format"] = kCheckpointFormat;
    manifest["version"] = 1;
    manifest["iteration"] = state.iteration;
    manifest["seed"] = state.config.seed;
    manifest["config"] = to_json(state.config);
    manifest["checksums"] = {{"generator", hex64(parameter_checksum(*state.generator))},
                             {"mask_net", hex64(parameter_checksum(*state.mask_net))},
                             {"discriminator", hex64(parameter_checksum(*state.discriminator))},
                             {"extractor", hex64(parameter_checksum(*state.extractor))},
                             {"model", hex64(model_checksum(state))}};

    torch::serialize::OutputArchive ar;
    archive::write_string(ar, "manifest", manifest.dump());
    archive::write_module(ar, "generator", *state.generator);
    archive::write_module(ar, "mask_net", *state.mask_net);
    archive::write_module(ar, "discriminator", *state.discriminator);
    torch::serialize::OutputArchive g_opt;
    state.g_optimizer->save(g_opt);
    ar.write("g_optimizer", g_opt);
    torch::serialize::OutputArchive d_opt;
    state.d_optimizer->save(d_opt);
    ar.write("d_optimizer", d_opt);

    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const auto tmp = fs::path(path.string() + ".tmp");
    ar.save_to(tmp.string());
    fs::rename(tmp, path);
}

json read_checkpoint_manifest(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("checkpoint " + path.string() + " does not exist");
    json manifest;
    try {
        torch::serialize::InputArchive ar;
        ar.load_from(path.string());
        manifest = json::parse(archive::read_string(ar, "manifest"));
    } catch (const c10::Error&) {
        throw ParseError(path.string() + " is not a checkpoint");
    } catch (const json::exception&) {
        throw ParseError(path.string() + " has a corrupt manifest");
    }
    if (manifest.value("format", "") != kCheckpointFormat) {
        throw ParseError(path.string() + " is not a checkpoint");
    }
    return manifest;
}

TrainState load_checkpoint(const fs::path& path) {
    const auto manifest = read_checkpoint_manifest(path);
    auto state = init_state(config_from_json(manifest.at("config")));
    torch::serialize::InputArchive ar;
    ar.load_from(path.string());
    archive::read_module(ar, "generator", *state.generator);
    archive::read_module(ar, "mask_net", *state.mask_net);
    archive::read_module(ar, "discriminator", *state.discriminator);
    torch::serialize::InputArchive g_opt;
    ar.read("g_optimizer", g_opt);
    state.g_optimizer->load(g_opt);
    torch::serialize::InputArchive d_opt;
    ar.read("d_optimizer", d_opt);
    state.d_optimizer->load(d_opt);
    state.iteration = manifest.at("iteration").get<std::int64_t>();

    const auto& sums = manifest.at("checksums");
    if (sums.at("model").get<std::string>() != hex64(model_checksum(state))) {
        throw ParseError("checkpoint " + path.string() + " failed its parameter checksum");
    }
    if (sums.at("extractor").get<std::string>() != hex64(parameter_checksum(*state.extractor))) {
        throw ConfigError("checkpoint " + path.string() +
                          " was trained with a different feature extractor than its config rebuilds");
    }
    return state;
}

// ---------------------------------------------------------------------------
// Fit

std::string csv_row(const StepReport& r) {
    std::ostringstream out;
    out << r.iteration << ',' << format_double(r.lr) << ',' << format_double(r.l_pix) << ','
        << format_double(r.l_per) << ',' << format_double(r.l_adv) << ',' << format_double(r.l_align) << ','
        << format_double(r.l_unif) << ',' << format_double(r.total) << ',' << format_double(r.d_loss) << ',';
    if (r.psnr_val) out << format_double(*r.psnr_val);
    return out.str();
}

FitResult fit(const TrainConfig& config, const PairedDataset& dataset, const FitOptions& options) {
    config.validate();
    if (options.out_dir.empty()) throw ConfigError("fit: output directory is required");
    const auto ckpt_dir = options.out_dir / "checkpoints";
    fs::create_directories(ckpt_dir);

    TrainState state;
    if (options.resume_from) {
        const auto manifest = read_checkpoint_manifest(*options.resume_from);
        const auto saved = config_from_json(manifest.at("config"));
        const auto diff = config_diff(saved, config, /*ignore_resumable=*/true);
        if (!diff.empty()) {
            std::string msg = "refusing to resume from " + options.resume_from->string() + "; config differs:";
            for (const auto& d : diff) msg += "\n  " + d;
            throw ConfigError(msg);
        }
        state = load_checkpoint(*options.resume_from);
        state.config = config;
        log::info("resuming from ", options.resume_from->string(), " at iteration ", state.iteration);
    } else {
        state = init_state(config);
    }

    const BatchStream stream(dataset, config.batch_size, config.patch_size, config.seed);
    FitResult result;
    result.log_path = options.out_dir / "metrics.csv";
    truncate_log(result.log_path, options.resume_from ? state.iteration : 0);
    std::ofstream log_out(result.log_path, std::ios::app);

    json run;
    run["command"] = "train";
    run["config"] = to_json(config);
    run["seed"] = config.seed;
    run["dataset_size"] = dataset.size();
    run["start_iteration"] = state.iteration;
    run["resumed_from"] = options.resume_from ? options.resume_from->string() : "";
    run["extractor_checksum"] = hex64(parameter_checksum(*state.extractor));
    run["parameters"] = {{"generator", count_parameters(*state.generator)},
                         {"mask_net", count_parameters(*state.mask_net)},
                         {"discriminator", count_parameters(*state.discriminator)}};
    std::ofstream(options.out_dir / "run.json") << run.dump(2) << '\n';

    bool saved_last = false;
    while (state.iteration < config.total_iters) {
        if (options.stop_after && state.iteration >= *options.stop_after) break;
        auto report = train_step(state, stream.batch(state.iteration));
        if (options.validation != nullptr && !options.validation->empty() && config.val_every > 0 &&
            (state.iteration % config.val_every == 0 || state.iteration == config.total_iters)) {
            report.psnr_val = mean_validation_psnr(state, *options.validation);
        }
        log_out << csv_row(report) << '\n';
        log_out.flush();
        if (report.iteration % 50 == 0 || report.psnr_val) {
            log::info("iter ", report.iteration, " lr ", report.lr, " total ", report.total, " pix ",
                      report.l_pix, " d ", report.d_loss,
                      report.psnr_val ? " psnr_val " + std::to_string(*report.psnr_val) : std::string());
        }
        if (options.on_step) options.on_step(report);
        result.last = report;
        saved_last = false;
        if (config.checkpoint_every > 0 && state.iteration % config.checkpoint_every == 0) {
            save_checkpoint(state, ckpt_dir / checkpoint_name(state.iteration));
            saved_last = true;
        }
    }
    const auto last = ckpt_dir / checkpoint_name(state.iteration);
    if (!saved_last) save_checkpoint(state, last);
    result.final_checkpoint = last;
    if (state.iteration >= config.total_iters) {
        fs::copy_file(last, options.out_dir / "model.pt", fs::copy_options::overwrite_existing);
        result.final_checkpoint = options.out_dir / "model.pt";
    }
    result.iterations = state.iteration;
    return result;
}

}  // namespace criacl
