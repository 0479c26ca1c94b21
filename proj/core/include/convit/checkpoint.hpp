#pragma once

#include <string>
#include <utility>
#include <vector>

#include "convit/tensor.hpp"

namespace convit {

// "CVIT" binary checkpoint: magic bytes "CVIT", u32 LE format version, then
// one record per tensor: u32 LE name length, name bytes, u32 LE rank,
// u32 LE dims[rank], float32 LE payload. Bit-exact round-trip.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::vector<std::pair<std::string, TensorF>>& tensors,
                     const std::string& path);

// Loads all records in file order. Bad magic, unknown version, or truncation
// raise ParseError; unopenable files raise IoError.
std::vector<std::pair<std::string, TensorF>> load_checkpoint(const std::string& path);

// Copies loaded values into existing named parameters. The name sets must
// match exactly and shapes must agree (ContractError / ShapeError otherwise).
void assign_checkpoint(std::vector<std::pair<std::string, TensorF>>& params,
                       const std::vector<std::pair<std::string, TensorF>>& loaded);

}  // namespace convit
