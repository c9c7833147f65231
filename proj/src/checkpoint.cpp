#include "fsl/checkpoint.hpp"

#include <cmath>
#include <set>

#include "fsl/bytes.hpp"
#include "fsl/error.hpp"

namespace fsl {

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::kBackbone: return "backbone";
    case Stage::kJoint: return "joint";
    case Stage::kFinetune: return "finetune";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  if (name == "backbone") return Stage::kBackbone;
  if (name == "joint") return Stage::kJoint;
  if (name == "finetune") return Stage::kFinetune;
  throw ArgumentError("unknown stage '" + std::string(name) + "'");
}

const ParamBlock* Checkpoint::find(std::string_view name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

const ParamBlock& Checkpoint::at(std::string_view name) const {
  const ParamBlock* b = find(name);
  if (!b) throw FormatError("checkpoint: missing block '" + std::string(name) + "'");
  return *b;
}

bool Checkpoint::has_prefix(std::string_view prefix) const {
  for (const auto& b : blocks) {
    if (b.name.starts_with(prefix)) return true;
  }
  return false;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> data, std::uint64_t hash) {
  for (std::uint8_t byte : data) {
    hash ^= byte;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

namespace {

constexpr std::uint32_t kMaxRank = 8;

std::vector<ParamBlock> with_meta(const Checkpoint& c) {
  std::vector<ParamBlock> blocks = c.blocks;
  Vector seed(2);
  seed << static_cast<double>(c.seed >> 32), static_cast<double>(c.seed & 0xffffffffULL);
  blocks.push_back({"meta.seed", {2}, seed});
  blocks.push_back({"meta.epoch", {1}, Vector::Constant(1, c.epoch)});
  blocks.push_back({"meta.val_metric", {1}, Vector::Constant(1, c.val_metric)});
  return blocks;
}

void require_shape(const Checkpoint& c, std::string_view name, const Shape& expected,
                   const std::string& context) {
  const ParamBlock& b = c.at(name);
  if (b.shape != expected) {
    throw FormatError(context + ": block '" + std::string(name) + "' has shape " +
                      shape_string(b.shape) + ", expected " + shape_string(expected));
  }
}

// Structural checks a well-formed checkpoint of each stage satisfies.
void validate_structure(const Checkpoint& c, const std::string& context) {
  Index channels = -1;
  for (int i = 0; i < 4; ++i) {
    const std::string prefix = "backbone.conv" + std::to_string(i);
    const ParamBlock& w = c.at(prefix + ".weight");
    if (w.shape.size() != 4 || w.shape[2] != 3 || w.shape[3] != 3 ||
        (channels >= 0 && w.shape[1] != channels)) {
      throw FormatError(context + ": block '" + w.name + "' has inconsistent shape " +
                        shape_string(w.shape));
    }
    require_shape(c, prefix + ".bias", {w.shape[0]}, context);
    channels = w.shape[0];
  }
  require_shape(c, "asm.alpha", {1}, context);
  require_shape(c, "asm.beta", {1}, context);

  const bool has_head = c.find("head.fc.weight") || c.find("head.fc.bias");
  if (c.stage != Stage::kFinetune && !has_head) {
    throw FormatError(context + ": stage '" + std::string(stage_name(c.stage)) +
                      "' requires a classification head");
  }
  if (has_head) {
    const ParamBlock& w = c.at("head.fc.weight");
    if (w.shape.size() != 2 || w.shape[1] != channels) {
      throw FormatError(context + ": head weight has inconsistent shape " + shape_string(w.shape));
    }
    require_shape(c, "head.fc.bias", {w.shape[0]}, context);
  }
  if (c.stage == Stage::kBackbone && c.has_prefix("mar.")) {
    throw FormatError(context + ": backbone-stage checkpoint must not carry resizer blocks");
  }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  const std::vector<ParamBlock> blocks = with_meta(checkpoint);
  bytes::Writer w;
  bytes::Writer payload;
  w.raw("FSCK");
  w.u8(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(checkpoint.stage));
  w.u32(static_cast<std::uint32_t>(blocks.size()));
  for (const ParamBlock& b : blocks) {
    if (b.values.size() != shape_numel(b.shape)) {
      throw DimensionError("checkpoint block '" + b.name + "' values do not match its shape");
    }
    w.u16(static_cast<std::uint16_t>(b.name.size()));
    w.raw(b.name);
    w.u32(static_cast<std::uint32_t>(b.shape.size()));
    for (Index e : b.shape) w.u32(static_cast<std::uint32_t>(e));
    for (Index i = 0; i < b.values.size(); ++i) {
      w.f64(b.values[i]);
      payload.f64(b.values[i]);
    }
  }
  w.u64(fnv1a64(payload.data()));
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> data, const std::string& context) {
  bytes::Reader r(data, context);
  if (r.str(4) != "FSCK") throw FormatError(context + ": bad magic");
  if (const auto v = r.u8(); v != kCheckpointVersion) {
    throw FormatError(context + ": unsupported version " + std::to_string(v));
  }
  const std::uint8_t tag = r.u8();
  if (tag < 1 || tag > 3) throw FormatError(context + ": invalid stage tag " + std::to_string(tag));
  Checkpoint c;
  c.stage = static_cast<Stage>(tag);

  const std::uint32_t count = r.u32();
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  std::set<std::string> seen;
  std::optional<Vector> seed, epoch, metric;
  for (std::uint32_t i = 0; i < count; ++i) {
    ParamBlock b;
    const std::uint16_t name_len = r.u16();
    if (name_len == 0) throw FormatError(context + ": block " + std::to_string(i) + " has an empty name");
    b.name = r.str(name_len);
    if (!seen.insert(b.name).second) throw FormatError(context + ": duplicate block '" + b.name + "'");
    const std::uint32_t ndim = r.u32();
    if (ndim == 0 || ndim > kMaxRank) {
      throw FormatError(context + ": block '" + b.name + "' has rank " + std::to_string(ndim));
    }
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const std::uint32_t e = r.u32();
      if (e == 0) throw FormatError(context + ": block '" + b.name + "' has a zero extent");
      b.shape.push_back(static_cast<Index>(e));
      if (e > r.remaining() / 8 / n) {
        throw IoError(context + ": block '" + b.name + "' extends past end of file");
      }
      n *= e;
    }
    const auto raw = r.span(static_cast<std::size_t>(n * 8));
    hash = fnv1a64(raw, hash);
    bytes::Reader pr(raw, context);
    b.values.resize(static_cast<Index>(n));
    for (Index k = 0; k < b.values.size(); ++k) b.values[k] = pr.f64();

    if (b.name == "meta.seed") seed = b.values;
    else if (b.name == "meta.epoch") epoch = b.values;
    else if (b.name == "meta.val_metric") metric = b.values;
    else c.blocks.push_back(std::move(b));
  }
  const std::uint64_t stored = r.u64();
  if (r.remaining() != 0) throw FormatError(context + ": trailing bytes after checksum");
  if (stored != hash) throw FormatError(context + ": payload checksum mismatch");
  if (!seed || seed->size() != 2 || !epoch || epoch->size() != 1 || !metric || metric->size() != 1) {
    throw FormatError(context + ": missing or malformed run metadata");
  }
  const auto is_u32 = [](double v) { return v >= 0.0 && v < 4294967296.0 && v == std::floor(v); };
  if (!is_u32((*seed)[0]) || !is_u32((*seed)[1]) || !is_u32((*epoch)[0]) ||
      (*epoch)[0] > 1e9 || !std::isfinite((*metric)[0])) {
    throw FormatError(context + ": run metadata out of range");
  }
  c.seed = (static_cast<std::uint64_t>((*seed)[0]) << 32) | static_cast<std::uint64_t>((*seed)[1]);
  c.epoch = static_cast<int>((*epoch)[0]);
  c.val_metric = (*metric)[0];
  validate_structure(c, context);
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  bytes::write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(bytes::read_file(path), path);
}

std::uint64_t checkpoint_digest(const Checkpoint& checkpoint) {
  return fnv1a64(encode_checkpoint(checkpoint));
}

}  // namespace fsl
