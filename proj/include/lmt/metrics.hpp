#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace lmt::metrics {

struct EvalPair {
  std::string hypothesis;
  std::string reference;
};

/// Whitespace split; punctuation characters inside a mixed token become their
/// own tokens. Tokens made only of punctuation are kept whole.
std::vector<std::string> mt_tokenize(std::string_view text);

inline constexpr std::string_view kTokenizerTag = "ws+punct-v1";

// BLEU

struct BleuStats {
  std::vector<std::size_t> matches;  // clipped n-gram matches per order
  std::vector<std::size_t> totals;   // hypothesis n-grams per order
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
};

BleuStats bleu_stats(const std::vector<std::string>& hyp, const std::vector<std::string>& ref, std::size_t max_n);
/// Unsmoothed corpus BLEU. Orders with no hypothesis n-grams anywhere in the
/// corpus are left out of the geometric mean.
double bleu_corpus(const std::vector<EvalPair>& pairs, std::size_t max_n = 4);
/// Sentence BLEU with exponential smoothing of zero precisions.
double sentence_bleu(const EvalPair& pair, std::size_t max_n = 4);

// chrF++

struct ChrfParams {
  std::size_t char_order = 6;
  std::size_t word_order = 2;
  double beta = 2.0;
};

double chrf_pp(const std::vector<EvalPair>& pairs, const ChrfParams& params = {});

// TER

struct TerParams {
  std::size_t max_shift_size = 10;
  /// Shift iterations are capped at this many times the reference length.
  std::size_t max_shift_factor = 10;
};

struct TerResult {
  std::size_t edits = 0;   // insertions + deletions + substitutions + shifts
  std::size_t shifts = 0;
  std::size_t ref_len = 0;
};

std::size_t levenshtein(const std::vector<int>& a, const std::vector<int>& b);
/// Token-level TER of one pair: greedy shifts then edit distance.
TerResult ter_tokens(const std::vector<std::string>& hyp, const std::vector<std::string>& ref,
                     const TerParams& params = {});
/// Corpus TER × 100.
double ter(const std::vector<EvalPair>& pairs, const TerParams& params = {});

// ROUGE

struct PrfScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

PrfScore rouge_n(const std::vector<EvalPair>& pairs, std::size_t n);
PrfScore rouge_l(const std::vector<EvalPair>& pairs);
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

// METEOR (exact-match module only)

struct MeteorParams {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
};

struct MeteorStats {
  std::size_t matches = 0;
  std::size_t chunks = 0;
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
};

/// Aligned (hyp index, ref index) pairs: maximum size, fewest crossings among those.
std::vector<std::pair<std::size_t, std::size_t>> meteor_align(const std::vector<std::string>& hyp,
                                                              const std::vector<std::string>& ref);
std::size_t count_crossings(const std::vector<std::pair<std::size_t, std::size_t>>& links);
MeteorStats meteor_stats(const std::vector<std::string>& hyp, const std::vector<std::string>& ref);
double meteor_score(const MeteorStats& stats, const MeteorParams& params = {});
double meteor(const std::vector<EvalPair>& pairs, const MeteorParams& params = {});

// Reports

struct SentenceScores {
  double bleu = 0.0;
  double chrf_pp = 0.0;
  double ter = 0.0;
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double meteor = 0.0;
};

struct EvalReport {
  double bleu = 0.0;
  double chrf_pp = 0.0;
  double ter = 0.0;
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double meteor = 0.0;
  std::optional<std::vector<SentenceScores>> per_sentence;
  nlohmann::json metadata;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

struct EvalOptions {
  std::size_t bleu_max_n = 4;
  ChrfParams chrf;
  TerParams ter;
  MeteorParams meteor;
  bool per_sentence = false;
};

/// Throws Error on an empty corpus or an empty reference.
EvalReport evaluate(const std::vector<EvalPair>& pairs, const EvalOptions& options = {});
/// Throws Error naming both counts when the files are not line-aligned.
EvalReport evaluate_files(const std::filesystem::path& hyp_file, const std::filesystem::path& ref_file,
                          const EvalOptions& options = {});

struct TableRow {
  std::string model;
  std::string fine_tuned;
  EvalReport report;
};

/// Plain-text table: Model, Fine-Tuned, BLEU, chrF++, TER, ROUGE-1, ROUGE-2,
/// ROUGE-L, BERTScore (F1), METEOR, COMET. ROUGE and METEOR are shown × 100;
/// the neural metrics are always "n/a".
std::string render_table(const std::vector<TableRow>& rows);

}  // namespace lmt::metrics
