#pragma once

// Versioned binary checkpoint container.
//
// Layout (all integers and floats little-endian):
//   magic        8 bytes  "ADVDCKPT"
//   version      u32      kCheckpointVersion
//   agent_id     u16 length + bytes
//   role         u8       0 victim, 1 adversary
//   reward_kind  u8       0 victim, 1 adv_collision, 2 adv_offroad
//   arch         u16 length + bytes (network architecture name)
//   episodes     i64
//   steps        i64
//   kl_coef      f64
//   adam_step    i64      -1 when no optimizer state is stored
//   n_arrays     u32
//   directory    n_arrays x { u16 name length, name, u8 ndim, ndim x u32 dim }
//   payload      every array's f64 values, in directory order
//   checksum     32 bytes SHA-256 of everything above
//
// Optimizer moments are stored as arrays named "adam.m/<param>" and
// "adam.v/<param>".

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "advdrive/errors.hpp"
#include "advdrive/nn.hpp"
#include "advdrive/world.hpp"

namespace advdrive {

inline constexpr char kCheckpointMagic[8] = {'A', 'D', 'V', 'D', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public Error {
 public:
  using Error::Error;
};

struct Checkpoint {
  std::string agent_id;
  Role role = Role::kVictim;
  RewardKind reward_kind = RewardKind::kVictim;
  NetworkParams params;
  std::optional<AdamState> adam;
  double kl_coef = 0.3;
  std::int64_t episodes = 0;
  std::int64_t steps = 0;
};

std::string EncodeCheckpoint(const Checkpoint& ckpt);
// Throws CheckpointError with kind checkpoint_{format,version,truncated,
// checksum,shape}.
Checkpoint DecodeCheckpoint(const std::string& bytes);

// Atomic: writes a temporary sibling then renames it over `path`.
void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint LoadCheckpoint(const std::string& path);

std::string Sha256Hex(const std::string& bytes);
std::string FileSha256(const std::string& path);
// Digest over parameter names, shapes and values.
std::string ParamsChecksum(const NetworkParams& params);

std::string ReadFile(const std::string& path);
// Atomic write-temp-then-rename.
void WriteFileAtomic(const std::string& path, const std::string& contents);

}  // namespace advdrive
