#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rlad/policy.hpp"
#include "rlad/tensor.hpp"

namespace rlad {

// Self-contained training snapshot. Everything is ordered so that
// save -> load -> save reproduces the file byte for byte.
struct Checkpoint {
  std::uint32_t version = 1;
  std::string method;
  std::uint64_t step = 0;
  std::uint64_t config_hash = 0;
  std::array<std::uint64_t, 4> rng_state{};
  std::vector<std::pair<std::string, std::uint64_t>> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  // Returns nullptr when absent.
  const Tensor* find_tensor(const std::string& name) const;
  const std::uint64_t* find_meta(const std::string& key) const;
};

// Binary layout (all integers little-endian): magic "TRRD", u32 version,
// u64 config hash, method string, u64 step, four u64 rng words, meta pairs,
// then named tensors as (u32 name length + bytes, u32 rank, u64 extents,
// f64 payload). Doubles are moved via their bit patterns, so payloads
// round-trip exactly. Trailing bytes, short reads, a bad magic, or an
// unsupported version are structured errors.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Policy embedding: model geometry in meta, parameters (and for tabular
// policies the probe keys, bitcast into an f64 tensor) under their
// named_tensors() names.
void embed_policy(Checkpoint& ckpt, const PolicyParams& params);
PolicyParams extract_policy(const Checkpoint& ckpt);

}  // namespace rlad
