#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtvrp/policy/model.hpp"

namespace mtvrp::policy {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout (all integers and reals little-endian):
//
//   magic        8 bytes  "MTVRPCKP"
//   version      u32
//   stage        u8       0 backbone, 1 expert, 2 unified
//   expert       u8       basis index 1..4, 0xFF when not an expert checkpoint
//   dims         6 x i32  d_model, n_heads, n_layers, d_ff, rank_frozen, rank_free
//   options      4 x u8   activation, routing, expert_kind, adapt flags (bit0 emb, bit1 enc, bit2 dec)
//   reals        3 x f64  lora_beta, logit_clip, norm_softplus_eps
//   count        u32      number of tensors
//   tensors      count x { name_len u32, name bytes, dtype u8 (1 = f64), rank u32,
//                          dims rank x i32, payload f64 x prod(dims) }
//   frozen       ceil(count / 8) bytes, bit i (LSB first) set when tensor i is frozen
//
// Tensors are written in name order. Loading checks every tensor against the shapes implied
// by the header, so a tampered dimension field is rejected.
std::string serialize_checkpoint(const Policy& policy);
Policy parse_checkpoint(const std::string& bytes);

void save_checkpoint(const Policy& policy, const std::filesystem::path& path);
Policy load_checkpoint(const std::filesystem::path& path);

}  // namespace mtvrp::policy
