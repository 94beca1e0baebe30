#include "criacl/archive.hpp"

#include "criacl/errors.hpp"
#include "criacl/tensor_util.hpp"

#include <cstring>

namespace criacl::archive {

void write_string(torch::serialize::OutputArchive& ar, const std::string& key,
                  const std::string& value) {
    auto t = torch::empty({static_cast<int64_t>(value.size())}, torch::kChar);
    if (!value.empty()) std::memcpy(t.data_ptr<int8_t>(), value.data(), value.size());
    ar.write(key, t);
}

std::string read_string(torch::serialize::InputArchive& ar, const std::string& key) {
    torch::Tensor t;
    if (!ar.try_read(key, t)) throw ParseError("archive is missing key '" + key + "'");
    t = t.to(torch::kCPU).contiguous();
    std::string out(static_cast<std::size_t>(t.numel()), '\0');
    if (!out.empty()) std::memcpy(out.data(), t.data_ptr<int8_t>(), out.size());
    return out;
}

void write_module(torch::serialize::OutputArchive& ar, const std::string& prefix,
                  const torch::nn::Module& module) {
    for (const auto& item : module.named_parameters(true)) {
        ar.write(prefix + "/" + item.key(), item.value().detach());
    }
    for (const auto& item : module.named_buffers(true)) {
        ar.write(prefix + "/" + item.key(), item.value().detach(), /*is_buffer=*/true);
    }
}

namespace {

void restore(torch::serialize::InputArchive& ar, const std::string& key, torch::Tensor& dst,
             bool is_buffer) {
    torch::Tensor src;
    if (!ar.try_read(key, src, is_buffer)) {
        throw ParseError("archive is missing array '" + key + "'");
    }
    if (src.sizes() != dst.sizes()) {
        throw ShapeError("archive array '" + key + "' has shape " + shape_string(src) +
                         ", expected " + shape_string(dst));
    }
    torch::NoGradGuard no_grad;
    dst.copy_(src);
}

}  // namespace

void read_module(torch::serialize::InputArchive& ar, const std::string& prefix,
                 torch::nn::Module& module) {
    for (auto& item : module.named_parameters(true)) {
        restore(ar, prefix + "/" + item.key(), item.value(), false);
    }
    for (auto& item : module.named_buffers(true)) {
        restore(ar, prefix + "/" + item.key(), item.value(), true);
    }
}

}  // namespace criacl::archive
