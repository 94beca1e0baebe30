#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oracle {

double Grid::mean() const {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

Grid from_tensor(const torch::Tensor& t) {
    auto c = t.detach().to(torch::kCPU, torch::kFloat64).contiguous();
    if (c.dim() != 4) throw std::invalid_argument("oracle grids are 4-D");
    Grid g(c.size(0), c.size(1), c.size(2), c.size(3));
    const double* p = c.data_ptr<double>();
    std::copy(p, p + c.numel(), g.v.begin());
    return g;
}

torch::Tensor to_tensor(const Grid& g) {
    return torch::tensor(g.v, torch::kFloat64).reshape({g.n, g.c, g.h, g.w});
}

Grid pixel_map(const Grid& pred, const Grid& target, bool l1) {
    Grid out(pred.n, 1, pred.h, pred.w);
    for (std::int64_t i = 0; i < pred.n; ++i)
        for (std::int64_t y = 0; y < pred.h; ++y)
            for (std::int64_t x = 0; x < pred.w; ++x) {
                double acc = 0.0;
                for (std::int64_t ch = 0; ch < pred.c; ++ch) {
                    const double d = pred.at(i, ch, y, x) - target.at(i, ch, y, x);
                    acc += l1 ? std::fabs(d) : d * d;
                }
                out.at(i, 0, y, x) = acc / static_cast<double>(pred.c);
            }
    return out;
}

namespace {

std::int64_t reflect(std::int64_t p, std::int64_t n) {
    if (p < 0) return -p;
    if (p >= n) return 2 * (n - 1) - p;
    return p;
}

}  // namespace

Grid ssim_map(const Grid& a, const Grid& b) {
    constexpr int window = 11;
    constexpr int r = window / 2;
    constexpr double sigma = 1.5;
    constexpr double c1 = 1e-4;
    constexpr double c2 = 9e-4;
    double weights[window][window];
    double total = 0.0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            weights[dy + r][dx + r] = v;
            total += v;
        }
    Grid out(a.n, 1, a.h, a.w);
    for (std::int64_t i = 0; i < a.n; ++i)
        for (std::int64_t y = 0; y < a.h; ++y)
            for (std::int64_t x = 0; x < a.w; ++x) {
                double acc = 0.0;
                for (std::int64_t ch = 0; ch < a.c; ++ch) {
                    double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
                    for (int dy = -r; dy <= r; ++dy)
                        for (int dx = -r; dx <= r; ++dx) {
                            const double wgt = weights[dy + r][dx + r] / total;
                            const auto yy = reflect(y + dy, a.h);
                            const auto xx = reflect(x + dx, a.w);
                            const double p = a.at(i, ch, yy, xx);
                            const double q = b.at(i, ch, yy, xx);
                            mx += wgt * p;
                            my += wgt * q;
                            mxx += wgt * p * p;
                            myy += wgt * q * q;
                            mxy += wgt * p * q;
                        }
                    const double vx = mxx - mx * mx;
                    const double vy = myy - my * my;
                    const double cov = mxy - mx * my;
                    acc += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                }
                out.at(i, 0, y, x) = acc / static_cast<double>(a.c);
            }
    return out;
}

Grid bilinear(const Grid& in, std::int64_t out_h, std::int64_t out_w) {
    Grid out(in.n, in.c, out_h, out_w);
    const double sy = static_cast<double>(in.h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(in.w) / static_cast<double>(out_w);
    for (std::int64_t y = 0; y < out_h; ++y) {
        const double fy = std::max(sy * (y + 0.5) - 0.5, 0.0);
        const auto y0 = static_cast<std::int64_t>(fy);
        const auto y1 = y0 < in.h - 1 ? y0 + 1 : y0;
        const double ly = fy - static_cast<double>(y0);
        for (std::int64_t x = 0; x < out_w; ++x) {
            const double fx = std::max(sx * (x + 0.5) - 0.5, 0.0);
            const auto x0 = static_cast<std::int64_t>(fx);
            const auto x1 = x0 < in.w - 1 ? x0 + 1 : x0;
            const double lx = fx - static_cast<double>(x0);
            for (std::int64_t i = 0; i < in.n; ++i)
                for (std::int64_t ch = 0; ch < in.c; ++ch) {
                    out.at(i, ch, y, x) = (1 - ly) * ((1 - lx) * in.at(i, ch, y0, x0) + lx * in.at(i, ch, y0, x1)) +
                                          ly * ((1 - lx) * in.at(i, ch, y1, x0) + lx * in.at(i, ch, y1, x1));
                }
        }
    }
    return out;
}

Grid perceptual_map(const Grid& fp, const Grid& ft, std::int64_t out_h, std::int64_t out_w) {
    Grid per(fp.n, 1, fp.h, fp.w);
    for (std::int64_t i = 0; i < fp.n; ++i)
        for (std::int64_t y = 0; y < fp.h; ++y)
            for (std::int64_t x = 0; x < fp.w; ++x) {
                double acc = 0.0;
                for (std::int64_t ch = 0; ch < fp.c; ++ch) {
                    const double d = fp.at(i, ch, y, x) - ft.at(i, ch, y, x);
                    acc += d * d;
                }
                per.at(i, 0, y, x) = acc / static_cast<double>(fp.c);
            }
    return bilinear(per, out_h, out_w);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

Grid adversarial_map(const Grid& logits, std::int64_t out_h, std::int64_t out_w) {
    Grid per = logits;
    for (auto& v : per.v) v = softplus(-v);
    return bilinear(per, out_h, out_w);
}

double discriminator_loss(const Grid& real, const Grid& fake) {
    double a = 0.0;
    double b = 0.0;
    for (double v : real.v) a += softplus(-v);
    for (double v : fake.v) b += softplus(v);
    return a / static_cast<double>(real.v.size()) + b / static_cast<double>(fake.v.size());
}

double align(double anchor, const std::vector<double>& positives, double eta) {
    double s = 0.0;
    for (double p : positives) s += std::pow(std::fabs(anchor - p), eta);
    return s;
}

double unif(double anchor, const std::vector<double>& negatives, double t) {
    double s = 0.0;
    for (double q : negatives) s += std::exp(-t * (anchor + q) * (anchor + q));
    return -std::log(std::max(s, 1e-12));
}

Grid align_map(const Grid& anchor, const std::vector<Grid>& positives, double eta) {
    Grid out = anchor;
    for (std::size_t k = 0; k < anchor.v.size(); ++k) {
        std::vector<double> p;
        for (const auto& g : positives) p.push_back(g.v[k]);
        out.v[k] = align(anchor.v[k], p, eta);
    }
    return out;
}

Grid unif_map(const Grid& anchor, const std::vector<Grid>& negatives, double t) {
    Grid out = anchor;
    for (std::size_t k = 0; k < anchor.v.size(); ++k) {
        std::vector<double> q;
        for (const auto& g : negatives) q.push_back(g.v[k]);
        out.v[k] = unif(anchor.v[k], q, t);
    }
    return out;
}

double combine(const Grid& align_map, const Grid& unif_map, const Grid& s, const Grid& s_hat,
               double lambda_a, double lambda_u, bool halving) {
    double acc = 0.0;
    for (std::size_t k = 0; k < align_map.v.size(); ++k) {
        acc += lambda_a * s.v[k] * align_map.v[k] + lambda_u * s_hat.v[k] * unif_map.v[k] * (halving ? 0.5 : 1.0);
    }
    return acc / static_cast<double>(align_map.v.size());
}

namespace {

double keys_cubic(double x) {
    x = std::fabs(x);
    if (x <= 1.0) return 1.5 * x * x * x - 2.5 * x * x + 1.0;
    if (x < 2.0) return -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0;
    return 0.0;
}

std::int64_t mirror(std::int64_t p, std::int64_t n) {
    if (p < 0) p = -p - 1;
    if (p >= n) p = 2 * n - p - 1;
    return std::clamp<std::int64_t>(p, 0, n - 1);
}

}  // namespace

Grid bicubic_downsample(const Grid& in, std::int64_t factor) {
    const double s = static_cast<double>(factor);
    Grid out(in.n, in.c, in.h / factor, in.w / factor);
    for (std::int64_t i = 0; i < in.n; ++i)
        for (std::int64_t ch = 0; ch < in.c; ++ch)
            for (std::int64_t y = 0; y < out.h; ++y)
                for (std::int64_t x = 0; x < out.w; ++x) {
                    const double cy = (y + 0.5) * s - 0.5;
                    const double cx = (x + 0.5) * s - 0.5;
                    double acc = 0.0;
                    double norm = 0.0;
                    for (auto ty = static_cast<std::int64_t>(std::floor(cy - 2 * s));
                         ty <= static_cast<std::int64_t>(std::ceil(cy + 2 * s)); ++ty)
                        for (auto tx = static_cast<std::int64_t>(std::floor(cx - 2 * s));
                             tx <= static_cast<std::int64_t>(std::ceil(cx + 2 * s)); ++tx) {
                            const double wgt = keys_cubic((cy - ty) / s) * keys_cubic((cx - tx) / s);
                            acc += wgt * in.at(i, ch, mirror(ty, in.h), mirror(tx, in.w));
                            norm += wgt;
                        }
                    out.at(i, ch, y, x) = acc / norm;
                }
    return out;
}

torch::Tensor finite_difference(const std::function<double(const torch::Tensor&)>& f,
                                const torch::Tensor& x, double h) {
    auto base = x.detach().to(torch::kFloat64).contiguous().clone();
    auto grad = torch::zeros_like(base);
    auto* p = base.data_ptr<double>();
    auto* g = grad.data_ptr<double>();
    for (std::int64_t k = 0; k < base.numel(); ++k) {
        const double orig = p[k];
        p[k] = orig + h;
        const double up = f(base);
        p[k] = orig - h;
        const double down = f(base);
        p[k] = orig;
        g[k] = (up - down) / (2.0 * h);
    }
    return grad;
}

double max_relative_error(const torch::Tensor& analytic, const torch::Tensor& numeric) {
    const auto a = analytic.detach().to(torch::kFloat64);
    const auto n = numeric.detach().to(torch::kFloat64);
    const double scale = n.abs().max().item<double>();
    const double err = (a - n).abs().max().item<double>();
    return err / std::max(scale, 1e-300);
}

double pointwise_relative_error(const Grid& a, const Grid& b) {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.v.size(); ++k) {
        worst = std::max(worst, std::fabs(a.v[k] - b.v[k]) / std::max(std::fabs(b.v[k]), 1e-12));
    }
    return worst;
}

}  // namespace oracle
