#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scg/tensor.hpp"

namespace scg {

// Checkpoint layout, all integers u32 little-endian:
//   "SCGT" | version | tensor count |
//   per tensor: name length | UTF-8 name | rank | dims... | float32 LE payload
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

// Copies loaded values into the targets by name. Every target must be present
// with an identical shape; otherwise IncompatibleError lists each offending
// tensor and no target is modified.
void assign_checkpoint(const std::vector<NamedTensor>& loaded,
                       const std::vector<NamedTensor>& targets);

}  // namespace scg
