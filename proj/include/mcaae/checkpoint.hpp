#pragma once

// Binary network checkpoints.
//
// One network record, all integers and floats little-endian:
//
//   bytes 0..3   magic "MCAE"
//   u32          format version (currently 1)
//   u32          layer count L
//   L times:
//     u32        in_dim
//     u32        out_dim
//     u8         activation tag (0 identity, 1 relu, 2 sigmoid)
//     f64 x out_dim*in_dim   weights, row-major
//     f64 x out_dim          bias
//
// Multi-network models (the autoencoder) are stored as consecutive records.
// See docs/checkpoint_format.md.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <vector>

#include "mcaae/nncore.hpp"

namespace mcaae {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_network(std::ostream& out, const Network& net);
/// Reads one record. `base_offset` is the stream position used in error messages.
Network read_network(std::istream& in, std::size_t base_offset = 0);

std::vector<std::uint8_t> serialize_networks(const std::vector<Network>& nets);
/// Parses exactly `expected` consecutive records; trailing bytes are an error.
std::vector<Network> deserialize_networks(const std::vector<std::uint8_t>& bytes, std::size_t expected);

void save_networks(const std::filesystem::path& path, const std::vector<Network>& nets);
std::vector<Network> load_networks(const std::filesystem::path& path, std::size_t expected);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace mcaae
