#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lmt/corpus.hpp"
#include "lmt/decode.hpp"
#include "lmt/model.hpp"
#include "lmt/train.hpp"

namespace lmt::cli {

/// Raw "section.key" -> value settings, in the order file first, then overrides.
using RawSettings = std::map<std::string, std::string>;

struct RunConfig {
  std::filesystem::path base_dir;

  std::filesystem::path train_path;
  std::filesystem::path valid_path;
  std::filesystem::path test_path;
  std::filesystem::path subword_model_path;
  std::filesystem::path output_dir;
  std::filesystem::path checkpoint_path;

  std::optional<CorpusFormat> format;  // unset: guessed from the extension
  CleaningPolicy policy = CleaningPolicy::drop;

  std::size_t subword_vocab_size = 32000;

  ModelConfig model;
  bool model_vocab_explicit = false;
  TrainConfig train;
  DecodeConfig decode;
  std::size_t threads = 1;

  /// Keys present in the raw settings, for callers that need to know what was explicit.
  RawSettings raw;
};

/// Reads an INI file into "section.key" settings. Keys outside a section are rejected.
RawSettings read_ini(const std::filesystem::path& path);

/// Parses "section.key=value".
std::pair<std::string, std::string> parse_override(const std::string& text);

/// Builds a typed configuration. `default_preset` applies when train.preset is
/// absent. Relative paths are resolved against `base_dir`. Unknown keys and
/// malformed values raise ConfigError.
RunConfig resolve(const RawSettings& raw, const std::filesystem::path& base_dir, Preset default_preset);

/// Applies the model.* keys of `raw` onto `model`.
void apply_model_keys(const RawSettings& raw, ModelConfig& model);

/// Fully resolved settings in INI form (readable back through read_ini/resolve).
std::string to_ini(const RunConfig& cfg);
void write_snapshot(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace lmt::cli
