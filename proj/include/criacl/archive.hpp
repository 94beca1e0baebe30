#pragma once

#include <torch/torch.h>

#include <string>

// Helpers for the tensor archives used by extractor weight files and
// checkpoints: named arrays plus a JSON manifest stored as a byte tensor.

namespace criacl::archive {

void write_string(torch::serialize::OutputArchive& ar, const std::string& key,
                  const std::string& value);

/// Throws ParseError when the key is missing.
std::string read_string(torch::serialize::InputArchive& ar, const std::string& key);

/// Writes every parameter and buffer of `module` under `prefix/<name>`.
void write_module(torch::serialize::OutputArchive& ar, const std::string& prefix,
                  const torch::nn::Module& module);

/// Copies archived values into the module's parameters and buffers in place.
/// Every name must be present with a matching shape.
void read_module(torch::serialize::InputArchive& ar, const std::string& prefix,
                 torch::nn::Module& module);

}  // namespace criacl::archive
