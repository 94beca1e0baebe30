#include "criacl/tensor_util.hpp"

#include "criacl/errors.hpp"

#include <cstdio>

namespace criacl {

namespace F = torch::nn::functional;

std::string shape_string(const torch::Tensor& t) {
    std::string out;
    for (int64_t d = 0; d < t.dim(); ++d) {
        if (d > 0) out += 'x';
        out += std::to_string(t.size(d));
    }
    return out;
}

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, std::string_view what) {
    if (a.sizes() != b.sizes()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " +
                         shape_string(b));
    }
}

void require_4d(const torch::Tensor& t, std::string_view what) {
    if (t.dim() != 4) {
        throw ShapeError(std::string(what) + ": expected a 4-D batch, got " + shape_string(t));
    }
}

torch::Tensor resize_bilinear(const torch::Tensor& t, int64_t height, int64_t width) {
    if (t.size(2) == height && t.size(3) == width) return t;
    return F::interpolate(t, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{height, width})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
}

std::uint64_t fnv1a(const torch::Tensor& t, std::uint64_t seed) {
    const auto c = t.detach().to(torch::kCPU).contiguous();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const auto n = static_cast<std::size_t>(c.numel()) * c.element_size();
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t parameter_checksum(const torch::nn::Module& module) {
    std::uint64_t h = 14695981039346656037ULL;
    auto mix_name = [&h](const std::string& name) {
        for (unsigned char ch : name) {
            h ^= ch;
            h *= 1099511628211ULL;
        }
    };
    for (const auto& item : module.named_parameters(true)) {
        mix_name(item.key());
        h = fnv1a(item.value(), h);
    }
    for (const auto& item : module.named_buffers(true)) {
        mix_name(item.key());
        h = fnv1a(item.value(), h);
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

}  // namespace criacl
