#pragma once

// Binary files for datasets and CONE checkpoints.
//
// Layout (little-endian):
//   magic    8 bytes ("CONEDSET" or "CONECKPT")
//   version  u32
//   size     u64, payload bytes
//   checksum u64, FNV-1a of the payload
//   payload
//
// A short or altered payload fails the checksum before anything is decoded.
// Errors are FormatError with code "format", "version" or "checksum".

#include <cstdint>
#include <string>
#include <vector>

#include "cone/cone_model.hpp"
#include "cone/datagen.hpp"

namespace cone::harness {

constexpr std::uint32_t kDatasetVersion = 1;
constexpr std::uint32_t kCheckpointVersion = 1;

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);

std::vector<std::uint8_t> encode_dataset(const datagen::NetworkedDataset& ds);
datagen::NetworkedDataset decode_dataset(const std::vector<std::uint8_t>& bytes);
void save_dataset(const std::string& path, const datagen::NetworkedDataset& ds);
datagen::NetworkedDataset load_dataset(const std::string& path);

struct Checkpoint {
  model::ConeConfig config;
  std::size_t feature_dim = 0;
  ad::ParamStore params;

  bool operator==(const Checkpoint&) const = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace cone::harness
