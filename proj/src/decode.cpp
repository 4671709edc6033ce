#include "lmt/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "lmt/corpus.hpp"
#include "lmt/error.hpp"

namespace lmt {

std::string_view to_string(DecodeStrategy s) { return s == DecodeStrategy::greedy ? "greedy" : "beam"; }

DecodeStrategy parse_strategy(std::string_view name) {
  if (name == "greedy") return DecodeStrategy::greedy;
  if (name == "beam") return DecodeStrategy::beam;
  throw ConfigError("unknown decode strategy '" + std::string(name) + "' (expected greedy or beam)");
}

void DecodeConfig::validate() const {
  if (beam_size == 0) throw ConfigError("beam_size must be at least 1");
  if (!(length_penalty_alpha >= 0.0)) throw ConfigError("length_penalty_alpha must be non-negative");
  if (max_len && *max_len == 0) throw ConfigError("decode max_len must be at least 1");
}

nlohmann::json DecodeConfig::to_json() const {
  return {{"strategy", to_string(strategy)},
          {"beam_size", beam_size},
          {"length_penalty_alpha", length_penalty_alpha},
          {"max_len", max_len ? nlohmann::json(*max_len) : nlohmann::json(nullptr)}};
}

DecodeConfig DecodeConfig::from_json(const nlohmann::json& j) {
  DecodeConfig c;
  c.strategy = parse_strategy(j.at("strategy").get<std::string>());
  c.beam_size = j.at("beam_size").get<std::size_t>();
  c.length_penalty_alpha = j.at("length_penalty_alpha").get<double>();
  if (j.contains("max_len") && !j["max_len"].is_null()) c.max_len = j["max_len"].get<std::size_t>();
  return c;
}

double Hypothesis::score(double alpha) const {
  const double len = static_cast<double>(std::max<std::size_t>(ids.size(), 1));
  return log_prob / std::pow(len, alpha);
}

TransformerScorer::TransformerScorer(const TransformerModel<float>& model, const TokenSequence& source)
    : model_(model) {
  TokenMatrix src = pad_rows({source});
  encoded_ = model_.encode(src, src.mask());
}

std::size_t TransformerScorer::vocab_size() const { return model_.config().vocab_size; }

std::vector<std::vector<double>> TransformerScorer::next_log_probs(const std::vector<TokenSequence>& prefixes) {
  std::vector<TokenSequence> rows;
  rows.reserve(prefixes.size());
  for (const auto& p : prefixes) {
    TokenSequence row{SubwordModel::kBos};
    row.insert(row.end(), p.begin(), p.end());
    rows.push_back(std::move(row));
  }
  const TokenMatrix tgt = pad_rows(rows);
  const auto encoded = prefixes.size() == 1 ? encoded_ : encoded_.repeat(prefixes.size());
  const Tensor<float> logits = model_.decode(encoded, tgt, tgt.mask());
  const std::size_t V = vocab_size();
  const auto data = logits.data();
  std::vector<std::vector<double>> out(prefixes.size(), std::vector<double>(V));
  for (std::size_t b = 0; b < prefixes.size(); ++b) {
    const std::size_t t = rows[b].size() - 1;
    const float* row = data.data() + (b * tgt.cols + t) * V;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < V; ++v) mx = std::max(mx, static_cast<double>(row[v]));
    double z = 0.0;
    for (std::size_t v = 0; v < V; ++v) z += std::exp(static_cast<double>(row[v]) - mx);
    const double lz = mx + std::log(z);
    for (std::size_t v = 0; v < V; ++v) out[b][v] = static_cast<double>(row[v]) - lz;
  }
  return out;
}

namespace {

TokenId argmax_lowest(const std::vector<double>& xs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (xs[i] > xs[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

std::size_t resolve_max_len(const TransformerModel<float>& model, const DecodeConfig& cfg) {
  cfg.validate();
  // The decoder input is bos plus all but the last generated token.
  return std::min(cfg.max_len.value_or(model.config().max_len), model.config().max_len);
}

}  // namespace

Hypothesis greedy_decode(StepScorer& scorer, std::size_t max_len) {
  Hypothesis h;
  while (h.ids.size() < max_len) {
    const auto lp = scorer.next_log_probs({h.ids})[0];
    const TokenId next = argmax_lowest(lp);
    h.ids.push_back(next);
    h.log_prob += lp[static_cast<std::size_t>(next)];
    if (next == SubwordModel::kEos) break;
  }
  h.finished = true;
  return h;
}

std::vector<Hypothesis> beam_search(StepScorer& scorer, std::size_t beam_size, double alpha, std::size_t max_len) {
  if (beam_size == 0) throw ConfigError("beam_size must be at least 1");
  struct Candidate {
    double log_prob;
    std::size_t beam;
    TokenId token;
  };
  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<Hypothesis> completed;
  if (max_len == 0) return {};
  while (!live.empty()) {
    std::vector<TokenSequence> prefixes;
    prefixes.reserve(live.size());
    for (const auto& h : live) prefixes.push_back(h.ids);
    const auto lps = scorer.next_log_probs(prefixes);
    std::vector<Candidate> cands;
    cands.reserve(live.size() * scorer.vocab_size());
    for (std::size_t b = 0; b < live.size(); ++b) {
      for (std::size_t v = 0; v < lps[b].size(); ++v) {
        cands.push_back({live[b].log_prob + lps[b][v], b, static_cast<TokenId>(v)});
      }
    }
    const std::size_t keep = std::min(beam_size, cands.size());
    const auto better = [](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      if (a.beam != b.beam) return a.beam < b.beam;
      return a.token < b.token;
    };
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), better);
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      Hypothesis h = live[cands[i].beam];
      h.ids.push_back(cands[i].token);
      h.log_prob = cands[i].log_prob;
      if (cands[i].token == SubwordModel::kEos || h.ids.size() >= max_len) {
        h.finished = true;
        completed.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }
  std::stable_sort(completed.begin(), completed.end(), [alpha](const Hypothesis& a, const Hypothesis& b) {
    const double sa = a.score(alpha), sb = b.score(alpha);
    if (sa != sb) return sa > sb;
    return a.ids < b.ids;
  });
  if (completed.size() > beam_size) completed.resize(beam_size);
  return completed;
}

Hypothesis greedy_decode(const TransformerModel<float>& model, const TokenSequence& source, const DecodeConfig& cfg) {
  TransformerScorer scorer(model, source);
  return greedy_decode(scorer, resolve_max_len(model, cfg));
}

std::vector<Hypothesis> beam_search(const TransformerModel<float>& model, const TokenSequence& source,
                                    const DecodeConfig& cfg) {
  TransformerScorer scorer(model, source);
  return beam_search(scorer, cfg.beam_size, cfg.length_penalty_alpha, resolve_max_len(model, cfg));
}

double sequence_log_prob(StepScorer& scorer, const TokenSequence& ids) {
  double total = 0.0;
  TokenSequence prefix;
  for (TokenId id : ids) {
    total += scorer.next_log_probs({prefix})[0].at(static_cast<std::size_t>(id));
    prefix.push_back(id);
  }
  return total;
}

TranslationResult translate_corpus(const TransformerModel<float>& model, const SubwordModel& subword,
                                   const std::vector<std::string>& sentences, const DecodeConfig& cfg,
                                   std::size_t threads) {
  cfg.validate();
  TranslationResult result;
  result.lines.resize(sentences.size());
  std::vector<std::uint8_t> failed(sentences.size(), 0);
  const auto translate_one = [&](std::size_t i) {
    try {
      const TokenSequence src = subword.encode(normalize_text(sentences[i]), true, model.config().max_len);
      Hypothesis best;
      if (cfg.strategy == DecodeStrategy::greedy) {
        best = greedy_decode(model, src, cfg);
      } else {
        auto hyps = beam_search(model, src, cfg);
        if (hyps.empty()) throw Error("beam search produced no hypothesis");
        best = std::move(hyps.front());
      }
      if (!best.ids.empty() && best.ids.back() == SubwordModel::kEos) best.ids.pop_back();
      result.lines[i] = subword.decode(best.ids);
    } catch (const std::exception&) {
      result.lines[i].clear();
      failed[i] = 1;
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, sentences.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < sentences.size(); ++i) translate_one(i);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < sentences.size(); i += workers) translate_one(i);
      });
    }
  }
  for (auto f : failed) result.failures += f;
  return result;
}

}  // namespace lmt
