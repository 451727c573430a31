#pragma once

#include <string>

#include "sihd/training.hpp"

namespace sihd {

// Binary model file, all integers u64 and all reals f64, little-endian:
//   "SIHDCKPT" | version | config_hash | schedule kind (0 linear, 1 cosine)
//   | K | beta[K] | omega | guidance mode (0 embedding, 1 output) | reg_eta
//   | state_dim | action_dim | r_max | layer count
//   per layer: layer | seq_len | elem_dim | cond_dim | step_dim | hidden
//              | P | params[P] | ema[P] | lo[elem_dim] | hi[elem_dim]
//   | FNV-1a of everything before it
// The condition map and the null embedding are the last 3 * cond_dim entries
// of each parameter block.
inline constexpr std::uint64_t kCheckpointVersion = 1;

std::string checkpoint_bytes(const DiffusionStack& stack);
DiffusionStack parse_checkpoint(const std::string& bytes);

void save_checkpoint(const DiffusionStack& stack, const std::string& path);
DiffusionStack load_checkpoint(const std::string& path);

}  // namespace sihd
