#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "lmt/model.hpp"
#include "lmt/optim.hpp"

namespace lmt {

inline constexpr char kCheckpointMagic[4] = {'M', 'T', 'F', 'G'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  /// content_hash() of the subword model the checkpoint was trained with.
  std::string subword_hash;
  std::size_t epochs_completed = 0;
  /// Resolved training configuration (TrainConfig::to_json()).
  nlohmann::json train_config = nlohmann::json::object();
};

struct LoadedCheckpoint {
  TransformerModel<float> model;
  OptimState<float> optim;
  CheckpointMeta meta;
};

/// Layout: magic "MTFG", u32 format version, u64 header length, UTF-8 JSON
/// header (config, tensor manifest, subword hash, training state), then the
/// raw little-endian float32 payloads in manifest order. Written to a
/// temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const TransformerModel<float>& model,
                     const OptimState<float>& optim, const CheckpointMeta& meta);

/// Throws IoError / ParseError.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lmt
