#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "emte/tensor.hpp"

namespace emte {

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);
std::uint32_t crc32_of_file(const std::filesystem::path& path);

/// Model checkpoint: a JSON metadata document at `path` and the parameter
/// tensors, in declared order, as little-endian float64 at `path` + ".bin".
/// The metadata records each tensor's shape and the blob's CRC-32.
struct Checkpoint {
  nlohmann::json meta;
  std::vector<Tensor> tensors;
};

void write_checkpoint(const std::filesystem::path& path, nlohmann::json meta,
                      const std::vector<Tensor>& tensors);

/// Throws DataError on missing files, shape inconsistencies, or a checksum
/// mismatch.
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace emte
