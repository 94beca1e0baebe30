#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <string_view>

namespace criacl {

/// "4x3x64x64"
std::string shape_string(const torch::Tensor& t);

/// Throws ShapeError naming `what` when the two tensors differ in shape.
void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, std::string_view what);

/// Throws ShapeError unless `t` is 4-D.
void require_4d(const torch::Tensor& t, std::string_view what);

/// Bilinear resize (half-pixel centers) of a NCHW tensor to (height, width).
torch::Tensor resize_bilinear(const torch::Tensor& t, int64_t height, int64_t width);

/// FNV-1a over the raw bytes of a tensor (made contiguous on CPU).
std::uint64_t fnv1a(const torch::Tensor& t, std::uint64_t seed = 14695981039346656037ULL);

/// Order-sensitive digest of every named parameter and buffer of a module.
std::uint64_t parameter_checksum(const torch::nn::Module& module);

/// Hex rendering used in manifests and logs.
std::string hex64(std::uint64_t value);

}  // namespace criacl
