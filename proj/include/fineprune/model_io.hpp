#pragma once

#include "fineprune/network.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fineprune {

// Model file layout (all integers little-endian):
//
//   u64   manifest byte length M
//   M     UTF-8 JSON manifest
//   ...   blob: float32 LE values, for each parameterised layer in order its
//         weight tensor then its bias tensor
//
// The manifest records format_version, input_shape, seed, layer specs, the
// prune mask, blob_bytes, and a tensor index {layer, name, shape, offset,
// bytes} whose byte ranges must tile the blob exactly.
inline constexpr int kModelFormatVersion = 1;

std::vector<std::uint8_t> serialize_model(const Network& net);
Network deserialize_model(const std::vector<std::uint8_t>& bytes);

void save_model(const Network& net, const std::filesystem::path& path);
Network load_model(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

} // namespace fineprune
