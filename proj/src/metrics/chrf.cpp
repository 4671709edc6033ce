#include "common.hpp"
#include "lmt/error.hpp"
#include "lmt/metrics.hpp"
#include "lmt/unicode.hpp"

namespace lmt::metrics {

namespace {

std::vector<std::string> characters_without_space(std::string_view text) {
  std::vector<std::string> chars;
  for (char32_t cp : unicode::decode(text)) {
    if (unicode::is_space(cp)) continue;
    std::string s;
    unicode::append(s, cp);
    chars.push_back(std::move(s));
  }
  return chars;
}

struct OrderStats {
  std::size_t matches = 0;
  std::size_t hyp = 0;
  std::size_t ref = 0;
};

void accumulate(OrderStats& stats, const std::vector<std::string>& hyp, const std::vector<std::string>& ref,
                std::size_t n) {
  const auto h = detail::ngrams(hyp, n);
  const auto r = detail::ngrams(ref, n);
  stats.matches += detail::clipped_overlap(h, r);
  stats.hyp += detail::total_count(h);
  stats.ref += detail::total_count(r);
}

}  // namespace

double chrf_pp(const std::vector<EvalPair>& pairs, const ChrfParams& params) {
  if (pairs.empty()) throw ConfigError("chrF++ needs at least one pair");
  std::vector<OrderStats> orders(params.char_order + params.word_order);
  for (const auto& p : pairs) {
    const auto hc = characters_without_space(p.hypothesis);
    const auto rc = characters_without_space(p.reference);
    for (std::size_t n = 1; n <= params.char_order; ++n) accumulate(orders[n - 1], hc, rc, n);
    const auto hw = mt_tokenize(p.hypothesis);
    const auto rw = mt_tokenize(p.reference);
    for (std::size_t n = 1; n <= params.word_order; ++n) accumulate(orders[params.char_order + n - 1], hw, rw, n);
  }
  double p_sum = 0.0, r_sum = 0.0;
  std::size_t used = 0;
  for (const auto& o : orders) {
    if (o.ref == 0) continue;
    p_sum += o.hyp > 0 ? static_cast<double>(o.matches) / static_cast<double>(o.hyp) : 0.0;
    r_sum += static_cast<double>(o.matches) / static_cast<double>(o.ref);
    ++used;
  }
  if (used == 0) return 0.0;
  const double P = p_sum / static_cast<double>(used);
  const double R = r_sum / static_cast<double>(used);
  const double b2 = params.beta * params.beta;
  const double denom = b2 * P + R;
  return denom > 0.0 ? 100.0 * (1.0 + b2) * P * R / denom : 0.0;
}

}  // namespace lmt::metrics
