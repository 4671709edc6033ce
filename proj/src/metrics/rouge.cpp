#include "common.hpp"
#include "lmt/error.hpp"
#include "lmt/metrics.hpp"
#include "lmt/unicode.hpp"

namespace lmt::metrics {

namespace {

std::vector<std::string> rouge_tokens(std::string_view text) { return mt_tokenize(unicode::lower_latin(text)); }

PrfScore mean_scores(std::vector<double> p, std::vector<double> r, std::vector<double> f) {
  return {detail::stable_mean(std::move(p)), detail::stable_mean(std::move(r)), detail::stable_mean(std::move(f))};
}

}  // namespace

PrfScore rouge_n(const std::vector<EvalPair>& pairs, std::size_t n) {
  if (n == 0) throw ConfigError("ROUGE-N order must be at least 1");
  std::vector<double> ps, rs, fs;
  for (const auto& pair : pairs) {
    const auto ref = detail::ngrams(rouge_tokens(pair.reference), n);
    const std::size_t ref_total = detail::total_count(ref);
    if (ref_total == 0) continue;
    const auto hyp = detail::ngrams(rouge_tokens(pair.hypothesis), n);
    const std::size_t hyp_total = detail::total_count(hyp);
    const double overlap = static_cast<double>(detail::clipped_overlap(hyp, ref));
    const double p = hyp_total > 0 ? overlap / static_cast<double>(hyp_total) : 0.0;
    const double r = overlap / static_cast<double>(ref_total);
    ps.push_back(p);
    rs.push_back(r);
    fs.push_back(detail::f1(p, r));
  }
  return mean_scores(std::move(ps), std::move(rs), std::move(fs));
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

PrfScore rouge_l(const std::vector<EvalPair>& pairs) {
  if (pairs.empty()) throw ConfigError("ROUGE-L needs at least one pair");
  std::vector<double> ps, rs, fs;
  for (const auto& pair : pairs) {
    const auto ref = rouge_tokens(pair.reference);
    if (ref.empty()) continue;
    const auto hyp = rouge_tokens(pair.hypothesis);
    if (hyp.empty()) {
      ps.push_back(0.0);
      rs.push_back(0.0);
      fs.push_back(0.0);
      continue;
    }
    const double l = static_cast<double>(lcs_length(hyp, ref));
    const double p = l / static_cast<double>(hyp.size());
    const double r = l / static_cast<double>(ref.size());
    ps.push_back(p);
    rs.push_back(r);
    fs.push_back(detail::f1(p, r));
  }
  return mean_scores(std::move(ps), std::move(rs), std::move(fs));
}

}  // namespace lmt::metrics
