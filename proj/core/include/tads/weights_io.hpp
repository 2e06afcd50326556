#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tads/mlp.hpp"

namespace tads {

// Versioned binary container for one or more networks.
//
//   bytes 0..7   magic "TADSNET1"
//   u32          format version (1)
//   u32          network count
//   per network: u32 layer count
//     per layer: u32 input dim, u32 output dim, u8 activation
//                output*input f64 weights (row-major), output f64 biases
//
// All integers and floats are little-endian.
inline constexpr std::uint32_t kWeightFormatVersion = 1;

std::string encode_networks(const std::vector<Mlp>& nets);
std::vector<Mlp> decode_networks(const std::string& bytes);

void save_networks(const std::filesystem::path& path, const std::vector<Mlp>& nets);
std::vector<Mlp> load_networks(const std::filesystem::path& path);

}  // namespace tads
