#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fsl/tensor.hpp"

namespace fsl {

enum class Stage : std::uint8_t { kBackbone = 1, kJoint = 2, kFinetune = 3 };

std::string_view stage_name(Stage stage);
/// Accepts "backbone", "joint", "finetune"; throws ArgumentError otherwise.
Stage parse_stage(std::string_view name);

struct ParamBlock {
  std::string name;
  Shape shape;
  Vector values;
};

/// Named parameter snapshot. Run metadata (seed, epoch, validation metric)
/// travels as reserved "meta.*" blocks in the binary form.
struct Checkpoint {
  Stage stage = Stage::kBackbone;
  std::vector<ParamBlock> blocks;
  std::uint64_t seed = 0;
  int epoch = 0;
  double val_metric = 0.0;

  const ParamBlock* find(std::string_view name) const;
  const ParamBlock& at(std::string_view name) const;
  bool has_prefix(std::string_view prefix) const;
};

inline constexpr std::uint8_t kCheckpointVersion = 1;

std::uint64_t fnv1a64(std::span<const std::uint8_t> data, std::uint64_t hash = 0xcbf29ce484222325ULL);

/// "FSCK", u8 version, u8 stage, u32 block count, blocks (u16 name length,
/// name, u32 ndim, u32 extents, f64 payload), u64 FNV-1a of all payload bytes.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);

/// Rejects bad magic, version, stage tag, checksum and inconsistent shapes
/// with FormatError, and truncation with IoError. Also enforces which blocks
/// each stage must carry.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> data,
                             const std::string& context = "checkpoint");

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// FNV-1a over the full encoded form.
std::uint64_t checkpoint_digest(const Checkpoint& checkpoint);

}  // namespace fsl
