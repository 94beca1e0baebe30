#pragma once

#include <torch/torch.h>

#include <filesystem>

namespace criacl {

/// Reads an 8-bit PNG (gray, palette and alpha are converted) into a float32
/// 3 x H x W tensor in [0, 1]. Throws ParseError on failure.
torch::Tensor read_png(const std::filesystem::path& path);

/// Writes a 3 x H x W (or 1 x 3 x H x W) tensor as 8-bit RGB PNG; values are
/// clamped to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

}  // namespace criacl
