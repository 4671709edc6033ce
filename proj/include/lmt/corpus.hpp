#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lmt/subword.hpp"

namespace lmt {

enum class Split { train, validation, test };
enum class CorpusFormat { tsv, jsonl };
/// strict: malformed lines raise ParseError. drop: skipped and counted.
enum class CleaningPolicy { strict, drop };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);
CorpusFormat parse_format(std::string_view name);
CleaningPolicy parse_policy(std::string_view name);
/// Guesses from the extension: ".jsonl"/".json" -> jsonl, anything else -> tsv.
CorpusFormat format_for_path(const std::filesystem::path& path);

struct SentencePair {
  std::size_t id = 0;
  std::string source;
  std::string target;
};

struct ParallelCorpus {
  std::vector<SentencePair> pairs;
  Split split = Split::train;
  std::string source_lang = "en";
  std::string target_lang = "hi";

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  /// Builds a corpus from raw strings, normalizing and assigning dense ids.
  static ParallelCorpus from_pairs(const std::vector<std::pair<std::string, std::string>>& raw,
                                   Split split = Split::train);
};

struct LoadOptions {
  CorpusFormat format = CorpusFormat::tsv;
  CleaningPolicy policy = CleaningPolicy::drop;
  Split split = Split::train;
};

struct LoadResult {
  ParallelCorpus corpus;
  std::size_t dropped = 0;
  std::vector<std::string> warnings;
};

LoadResult load_parallel(const std::filesystem::path& path, const LoadOptions& options);

/// Lines of a UTF-8 text file with a leading BOM and trailing CRs removed.
/// Throws IoError if the file cannot be opened.
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Strips control characters, applies NFC, collapses whitespace runs to one
/// space and trims. Idempotent.
std::string normalize_text(std::string_view text);

/// Row-major matrix of token ids.
struct TokenMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<TokenId> ids;

  TokenId at(std::size_t r, std::size_t c) const { return ids[r * cols + c]; }
  TokenId& at(std::size_t r, std::size_t c) { return ids[r * cols + c]; }
  /// mask[r*cols+c] == 1 exactly where the id is not padding.
  std::vector<std::uint8_t> mask() const;
  /// Row without trailing padding.
  TokenSequence row(std::size_t r) const;
};

TokenMatrix pad_rows(const std::vector<TokenSequence>& rows);

struct Batch {
  TokenMatrix source;
  TokenMatrix target;
  std::vector<std::uint8_t> source_mask;
  std::vector<std::uint8_t> target_mask;
  /// Corpus id of each row.
  std::vector<std::size_t> pair_ids;

  std::size_t size() const { return source.rows; }
};

inline constexpr std::size_t kBucketWindow = 1024;

/// Tokenizes with bos/eos markers, truncates to `max_len` (eos forced at the
/// cap), sorts by source length within windows of kBucketWindow pairs and
/// pads each batch to its longest row. With a seed, pair order is shuffled
/// before bucketing and the batch order is shuffled afterwards.
std::vector<Batch> make_batches(const ParallelCorpus& corpus, const SubwordModel& model, std::size_t batch_size,
                                std::size_t max_len, std::optional<std::uint64_t> shuffle_seed = std::nullopt);

}  // namespace lmt
