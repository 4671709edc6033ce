#include <cmath>

#include "common.hpp"
#include "lmt/error.hpp"
#include "lmt/metrics.hpp"

namespace lmt::metrics {

BleuStats bleu_stats(const std::vector<std::string>& hyp, const std::vector<std::string>& ref, std::size_t max_n) {
  BleuStats s;
  s.matches.assign(max_n, 0);
  s.totals.assign(max_n, 0);
  s.hyp_len = hyp.size();
  s.ref_len = ref.size();
  for (std::size_t n = 1; n <= max_n; ++n) {
    const auto h = detail::ngrams(hyp, n);
    s.matches[n - 1] = detail::clipped_overlap(h, detail::ngrams(ref, n));
    s.totals[n - 1] = hyp.size() >= n ? hyp.size() - n + 1 : 0;
  }
  return s;
}

namespace {

double brevity_penalty(std::size_t hyp_len, std::size_t ref_len) {
  if (hyp_len == 0) return 0.0;
  if (hyp_len >= ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

}  // namespace

double bleu_corpus(const std::vector<EvalPair>& pairs, std::size_t max_n) {
  if (pairs.empty()) throw ConfigError("BLEU needs at least one pair");
  if (max_n == 0) throw ConfigError("BLEU max_n must be at least 1");
  BleuStats pooled;
  pooled.matches.assign(max_n, 0);
  pooled.totals.assign(max_n, 0);
  for (const auto& p : pairs) {
    const auto s = bleu_stats(mt_tokenize(p.hypothesis), mt_tokenize(p.reference), max_n);
    for (std::size_t n = 0; n < max_n; ++n) {
      pooled.matches[n] += s.matches[n];
      pooled.totals[n] += s.totals[n];
    }
    pooled.hyp_len += s.hyp_len;
    pooled.ref_len += s.ref_len;
  }
  if (pooled.hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  std::size_t orders = 0;
  for (std::size_t n = 0; n < max_n; ++n) {
    if (pooled.totals[n] == 0) continue;
    if (pooled.matches[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(pooled.matches[n]) / static_cast<double>(pooled.totals[n]));
    ++orders;
  }
  return 100.0 * brevity_penalty(pooled.hyp_len, pooled.ref_len) * std::exp(log_sum / static_cast<double>(orders));
}

double sentence_bleu(const EvalPair& pair, std::size_t max_n) {
  if (max_n == 0) throw ConfigError("BLEU max_n must be at least 1");
  const auto hyp = mt_tokenize(pair.hypothesis);
  if (hyp.empty()) return 0.0;
  const auto s = bleu_stats(hyp, mt_tokenize(pair.reference), max_n);
  double log_sum = 0.0;
  double smooth = 1.0;
  for (std::size_t n = 0; n < max_n; ++n) {
    double p;
    if (s.matches[n] == 0) {
      smooth *= 2.0;
      p = 1.0 / (smooth * static_cast<double>(std::max<std::size_t>(s.totals[n], 1)));
    } else {
      p = static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]);
    }
    log_sum += std::log(p);
  }
  return 100.0 * brevity_penalty(s.hyp_len, s.ref_len) * std::exp(log_sum / static_cast<double>(max_n));
}

}  // namespace lmt::metrics
