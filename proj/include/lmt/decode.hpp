#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lmt/model.hpp"
#include "lmt/subword.hpp"

namespace lmt {

enum class DecodeStrategy { greedy, beam };

std::string_view to_string(DecodeStrategy s);
DecodeStrategy parse_strategy(std::string_view name);

struct DecodeConfig {
  DecodeStrategy strategy = DecodeStrategy::beam;
  std::size_t beam_size = 4;
  double length_penalty_alpha = 0.6;
  /// Maximum number of generated tokens (eos included). Unset means the model's max_len.
  std::optional<std::size_t> max_len;

  void validate() const;
  nlohmann::json to_json() const;
  static DecodeConfig from_json(const nlohmann::json& j);
};

/// Generated ids exclude the leading bos and include eos when one was produced.
struct Hypothesis {
  TokenSequence ids;
  double log_prob = 0.0;
  bool finished = false;

  double score(double alpha) const;
};

/// Next-token log-probabilities for a set of prefixes (each prefix excludes bos).
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::vector<std::vector<double>> next_log_probs(const std::vector<TokenSequence>& prefixes) = 0;
};

/// Scores prefixes with a frozen model against one encoded source sentence.
class TransformerScorer : public StepScorer {
 public:
  TransformerScorer(const TransformerModel<float>& model, const TokenSequence& source);

  std::size_t vocab_size() const override;
  std::vector<std::vector<double>> next_log_probs(const std::vector<TokenSequence>& prefixes) override;

 private:
  const TransformerModel<float>& model_;
  TransformerModel<float>::EncoderOutput encoded_;
};

Hypothesis greedy_decode(StepScorer& scorer, std::size_t max_len);
std::vector<Hypothesis> beam_search(StepScorer& scorer, std::size_t beam_size, double alpha, std::size_t max_len);

Hypothesis greedy_decode(const TransformerModel<float>& model, const TokenSequence& source, const DecodeConfig& cfg);
std::vector<Hypothesis> beam_search(const TransformerModel<float>& model, const TokenSequence& source,
                                    const DecodeConfig& cfg);

/// Sum of per-step log-probabilities of `ids` under the scorer.
double sequence_log_prob(StepScorer& scorer, const TokenSequence& ids);

struct TranslationResult {
  std::vector<std::string> lines;
  std::size_t failures = 0;
};

/// Normalizes, encodes, decodes and detokenizes each sentence. A sentence that
/// throws yields an empty line and is counted in `failures`.
TranslationResult translate_corpus(const TransformerModel<float>& model, const SubwordModel& subword,
                                   const std::vector<std::string>& sentences, const DecodeConfig& cfg,
                                   std::size_t threads = 1);

}  // namespace lmt
