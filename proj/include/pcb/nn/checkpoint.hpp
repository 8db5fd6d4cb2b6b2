#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pcb/nn/network.hpp"

namespace pcb::nn {

/// Binary checkpoint, all integers little-endian:
///
///   "PCBN"                      4 bytes
///   u32 version                 = 1
///   u32 conv1, conv2            filter pair
///   u32 num_classes
///   u32 channels, frames, height, width
///   u32 kernel, pool_t, pool_h, pool_w, hidden
///   u32 tensor_count            = 8
///   per tensor: u32 rank, u32 dims[rank], f32 data[numel]
///
/// Tensors follow Network::parameters() order. Identical parameters produce
/// identical bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_network(const Network& net);
Network deserialize_network(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace pcb::nn
