#pragma once

// Binary checkpoint container. All integers and doubles little-endian.
//
//   offset  size        field
//   0       8           magic "SSVICKPT"
//   8       4   u32     format version (1)
//   12      1   u8      task (0 classification, 1 regression)
//   13      4   u32     number of classes
//   17      8   u64     global step
//   25      8   u64     budget s
//   ...     4+n         RNG state (u32 length, then text of the engine state)
//   ...     4+n         effective config text (u32 length, then bytes)
//   ...     4   u32     normalisation dimension k, then k f64 means, k f64 scales
//   ...     4   u32     number of layers L, then per layer:
//                         u32 out, u32 in,
//                         out*in f64 mu, out*in f64 sigma (row-major), out f64 bias,
//                         ceil(out*in/8) bytes of mask bits, row-major, LSB first
//   end-8   8   u64     FNV-1a 64 hash of every preceding byte

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssvi/data.hpp"
#include "ssvi/network.hpp"

namespace ssvi {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  VariationalNet net;
  int num_classes = 0;
  std::uint64_t step = 0;
  std::uint64_t budget = 0;
  std::string rng_state;
  std::string config_text;
  NormStats norm;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// Throws checkpoint_corrupt on any structural problem or hash mismatch.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

// Writes through a temporary file and a rename.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n);

}  // namespace ssvi
