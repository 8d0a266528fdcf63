#pragma once

#include <gzood/networks.hpp>

#include <filesystem>
#include <map>
#include <string>

namespace gzood::nn {

/// Model archive: 8-byte magic "GZOODCKP", u32 version, u64 header length,
/// a JSON header (specs, config, tensor table), then every tensor as raw
/// little-endian float64 in ModelParams::tensors() order.
struct Checkpoint {
  Model model;
  std::map<std::string, std::string> config;  // resolved run configuration
};

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const std::map<std::string, std::string>& config = {});

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gzood::nn
