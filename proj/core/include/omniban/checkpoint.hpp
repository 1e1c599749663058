#pragma once

#include <iosfwd>
#include <string>

#include "omniban/model.hpp"

namespace omniban {

/// Versioned binary checkpoint:
///   "OMNICKPT" | u32 version | u64 config hash | u32 len + canonical config |
///   u32 count | per tensor: u32 len + name, u32 rank, u64 dims[rank],
///   float64 data[numel]
/// Integers and doubles are little-endian. Loading is bit-exact.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const Model& model);
Model read_checkpoint(std::istream& is);
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

/// True when both models have identical configs and bit-identical tensors.
bool same_parameters(const Model& a, const Model& b);

}  // namespace omniban
