#pragma once

// Checkpoint container.
//
// Layout (all integers little-endian):
//   magic      8 bytes  "INPCKPT\0"
//   version    u32      currently 1
//   n_meta     u32
//   n_meta x { u32 key_len, key bytes, u32 value_len, value bytes }
//   n_tensors  u32
//   n_tensors x { u32 name_len, name bytes, u32 ndim, ndim x u64 extent,
//                 product(extents) x f64 (IEEE-754, little-endian) }

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "inpaint/layers.hpp"
#include "inpaint/optim.hpp"
#include "inpaint/tensor.hpp"

namespace inpaint {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
/// Throws FormatError (with byte offset) on malformed input.
Checkpoint read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Appends every entry of `params` as `prefix + name`.
void store_parameters(Checkpoint& ckpt, const ParameterSet& params, const std::string& prefix);
/// Copies values into `params` in place; every entry must be present with the same shape.
void restore_parameters(const Checkpoint& ckpt, ParameterSet& params, const std::string& prefix);

void store_optimizer(Checkpoint& ckpt, Adam& opt, const std::string& prefix);
void restore_optimizer(const Checkpoint& ckpt, Adam& opt, const std::string& prefix);

}  // namespace inpaint
