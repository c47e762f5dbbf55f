#pragma once

// Binary parameter checkpoints.
//
// Layout (all integers unsigned 32-bit little-endian):
//
//   magic    8 bytes  "EXTSUMCK"
//   version  u32      currently 1
//   count    u32      number of tensors
//   count times:
//     name_len u32, name bytes (UTF-8, no terminator)
//     ndim     u32, ndim x u32 dimensions
//     payload  product(dims) x IEEE-754 binary32, little-endian
//
// Tensors appear in the order they were given to save_checkpoint.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "extsum/tensor.hpp"

namespace extsum {

inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
void write_checkpoint(std::ostream& out, const NamedTensors& tensors);

// Loaded tensors are fresh leaves without gradient slots.
NamedTensors load_checkpoint(const std::filesystem::path& path);
NamedTensors read_checkpoint(std::istream& in);

// Copies values from `source` into same-named tensors of `target`. Every target
// must be present with an identical shape; extra source entries are an error.
void assign_parameters(const NamedTensors& source, NamedTensors& target);

}  // namespace extsum
