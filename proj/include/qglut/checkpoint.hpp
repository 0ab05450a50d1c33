#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "qglut/backbone.hpp"
#include "qglut/skintone.hpp"

namespace qglut {

inline constexpr int kCheckpointVersion = 1;

struct TrainingMetadata {
  int epochs_completed = 0;
  double final_loss = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const TrainingMetadata&) const = default;
};

/// Everything needed to run or resume a model. The basis grids live in
/// `params` as the tensor "lut3d.basis".
struct ModelCheckpoint {
  ArchitectureConfig arch;
  ParamSet<float> params;
  std::optional<SkinToneCenters> centers;
  TrainingMetadata metadata;
};

/// A freshly initialized (identity) model.
ModelCheckpoint make_checkpoint(const ArchitectureConfig& arch, std::uint64_t seed);

/// Throws ArchitectureMismatch when `wanted` differs from the checkpoint.
void require_architecture(const ModelCheckpoint& ckpt, const ArchitectureConfig& wanted);

nlohmann::json to_json(const ArchitectureConfig& arch);
ArchitectureConfig architecture_from_json(const nlohmann::json& j);

// Layout (see docs/checkpoint_format.md): 8-byte magic "QGLUTCKP", uint64 LE
// header length, UTF-8 JSON header, then float32 LE tensor blocks in
// parameter order. The header carries a CRC-32 of the payload.
std::vector<std::uint8_t> serialize_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace qglut
