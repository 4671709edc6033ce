#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "lmt/corpus.hpp"
#include "lmt/decode.hpp"
#include "lmt/model.hpp"
#include "lmt/rng.hpp"
#include "lmt/subword.hpp"
#include "lmt/train.hpp"

namespace lmt::testing {

/// Synthetic copy corpus: sentences of 4-8 words drawn from a random
/// 100-word lexicon over a-z; target equals source.
inline ParallelCorpus copy_corpus(std::size_t pairs = 64, std::uint64_t seed = 7) {
  Rng rng(seed);
  std::vector<std::string> lexicon;
  for (int i = 0; i < 100; ++i) {
    std::string w;
    const std::size_t len = 3 + rng.below(4);
    for (std::size_t k = 0; k < len; ++k) w += static_cast<char>('a' + rng.below(26));
    lexicon.push_back(std::move(w));
  }
  std::vector<std::pair<std::string, std::string>> raw;
  for (std::size_t i = 0; i < pairs; ++i) {
    std::string s;
    const std::size_t n = 4 + rng.below(5);
    for (std::size_t k = 0; k < n; ++k) {
      if (k) s += ' ';
      s += lexicon[rng.below(lexicon.size())];
    }
    raw.emplace_back(s, s);
  }
  return ParallelCorpus::from_pairs(raw);
}

inline std::vector<std::string> corpus_texts(const ParallelCorpus& corpus) {
  std::vector<std::string> texts;
  for (const auto& p : corpus.pairs) texts.push_back(p.source);
  for (const auto& p : corpus.pairs) texts.push_back(p.target);
  return texts;
}

inline SubwordModel toy_subword(const ParallelCorpus& corpus, std::size_t vocab_size = 200) {
  const auto texts = corpus_texts(corpus);
  return SubwordModel::train(texts, vocab_size);
}

/// Reduced configuration for the copy experiment.
inline ModelConfig toy_model_config(std::size_t vocab_size) {
  ModelConfig c;
  c.num_layers = 2;
  c.num_heads = 4;
  c.d_model = 64;
  c.d_ff = 256;
  c.vocab_size = vocab_size;
  c.max_len = 64;
  c.dropout = 0.0;
  c.label_smoothing = 0.0;
  return c;
}

inline TrainConfig toy_train_config(std::size_t epochs) {
  TrainConfig t;
  t.schedule = Schedule::constant;
  t.learning_rate = 3e-3;
  t.batch_size = 32;
  t.max_len = 64;
  t.max_epochs = epochs;
  t.seed = 1;
  return t;
}

/// Very small model for gradient and determinism checks.
inline ModelConfig tiny_model_config(std::size_t vocab_size = 13) {
  ModelConfig c;
  c.num_layers = 2;
  c.num_heads = 2;
  c.d_model = 8;
  c.d_ff = 16;
  c.vocab_size = vocab_size;
  c.max_len = 16;
  c.dropout = 0.0;
  c.label_smoothing = 0.0;
  return c;
}

/// Scorer with hand-set logits that depend on the step and the previous token.
/// Vocabulary: pad, unk, bos, eos, A (4), B (5).
class HandWiredScorer : public StepScorer {
 public:
  std::size_t vocab_size() const override { return 6; }

  std::vector<std::vector<double>> next_log_probs(const std::vector<TokenSequence>& prefixes) override {
    std::vector<std::vector<double>> out;
    for (const auto& p : prefixes) out.push_back(log_softmax(logits(p)));
    return out;
  }

  static std::vector<double> logits(const TokenSequence& prefix) {
    // Step 0 prefers A slightly, but A leads to a flat distribution while B
    // leads to a confident eos: greedy and beam disagree.
    if (prefix.empty()) return {-9.0, -6.0, -9.0, -1.5, 0.4, 0.0};
    const TokenId last = prefix.back();
    if (prefix.size() == 1) {
      if (last == 4) return {-9.0, -7.0, -9.0, 0.1, 0.0, 0.05};
      if (last == 5) return {-9.0, -7.0, -9.0, 2.5, -0.5, -1.0};
      return {-9.0, -5.0, -9.0, 0.0, -1.0, -1.0};
    }
    if (last == 4) return {-8.0, -6.0, -8.0, 0.3, -0.2, 0.7};
    if (last == 5) return {-8.0, -6.0, -8.0, 1.2, 0.9, -0.4};
    return {-8.0, -4.0, -8.0, 0.5, -2.0, -2.0};
  }

  static std::vector<double> log_softmax(const std::vector<double>& x) {
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : x) z += std::exp(v - mx);
    std::vector<double> out;
    for (double v : x) out.push_back(v - mx - std::log(z));
    return out;
  }
};

struct EnumeratedHypothesis {
  TokenSequence ids;
  double log_prob;
};

/// Every sequence the scorer can generate with at most `max_len` tokens:
/// sequences end at the first eos or at max_len.
inline std::vector<EnumeratedHypothesis> enumerate_sequences(StepScorer& scorer, std::size_t max_len) {
  std::vector<EnumeratedHypothesis> done;
  std::vector<EnumeratedHypothesis> open{{{}, 0.0}};
  for (std::size_t t = 0; t < max_len; ++t) {
    std::vector<EnumeratedHypothesis> next;
    for (const auto& h : open) {
      const auto lp = scorer.next_log_probs({h.ids})[0];
      for (std::size_t v = 0; v < lp.size(); ++v) {
        EnumeratedHypothesis e{h.ids, h.log_prob + lp[v]};
        e.ids.push_back(static_cast<TokenId>(v));
        if (static_cast<TokenId>(v) == SubwordModel::kEos || e.ids.size() == max_len) {
          done.push_back(std::move(e));
        } else {
          next.push_back(std::move(e));
        }
      }
    }
    open = std::move(next);
  }
  return done;
}

}  // namespace lmt::testing
