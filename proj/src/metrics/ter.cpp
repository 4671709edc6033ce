#include <algorithm>
#include <set>
#include <unordered_map>

#include "lmt/error.hpp"
#include "lmt/metrics.hpp"

namespace lmt::metrics {

std::size_t levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace {

std::vector<int> shifted(const std::vector<int>& seq, std::size_t start, std::size_t len, std::size_t dest) {
  std::vector<int> rest;
  rest.reserve(seq.size());
  rest.insert(rest.end(), seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(start));
  rest.insert(rest.end(), seq.begin() + static_cast<std::ptrdiff_t>(start + len), seq.end());
  std::vector<int> out;
  out.reserve(seq.size());
  out.insert(out.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(dest));
  out.insert(out.end(), seq.begin() + static_cast<std::ptrdiff_t>(start),
             seq.begin() + static_cast<std::ptrdiff_t>(start + len));
  out.insert(out.end(), rest.begin() + static_cast<std::ptrdiff_t>(dest), rest.end());
  return out;
}

}  // namespace

TerResult ter_tokens(const std::vector<std::string>& hyp_tokens, const std::vector<std::string>& ref_tokens,
                     const TerParams& params) {
  std::unordered_map<std::string, int> ids;
  const auto intern = [&](const std::vector<std::string>& tokens) {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(ids.emplace(t, static_cast<int>(ids.size())).first->second);
    return out;
  };
  std::vector<int> hyp = intern(hyp_tokens);
  const std::vector<int> ref = intern(ref_tokens);

  // Only blocks that also occur somewhere in the reference are worth moving.
  std::set<std::vector<int>> ref_blocks;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    for (std::size_t len = 1; len <= params.max_shift_size && i + len <= ref.size(); ++len) {
      ref_blocks.emplace(ref.begin() + static_cast<std::ptrdiff_t>(i),
                         ref.begin() + static_cast<std::ptrdiff_t>(i + len));
    }
  }

  TerResult result;
  result.ref_len = ref.size();
  std::size_t current = levenshtein(hyp, ref);
  const std::size_t cap = params.max_shift_factor * ref.size();
  while (result.shifts < cap && current > 1) {
    // A shift costs one edit, so it must cut the edit distance by at least two.
    std::size_t best_net = 0;
    std::size_t best_ed = current;
    std::vector<int> best_seq;
    const std::size_t n = hyp.size();
    for (std::size_t len = 1; len <= std::min(params.max_shift_size, n); ++len) {
      for (std::size_t start = 0; start + len <= n; ++start) {
        const std::vector<int> block(hyp.begin() + static_cast<std::ptrdiff_t>(start),
                                     hyp.begin() + static_cast<std::ptrdiff_t>(start + len));
        if (!ref_blocks.contains(block)) continue;
        for (std::size_t dest = 0; dest + len <= n; ++dest) {
          if (dest == start) continue;
          auto candidate = shifted(hyp, start, len, dest);
          const std::size_t ed = levenshtein(candidate, ref);
          if (ed + 1 >= current) continue;
          const std::size_t net = current - ed - 1;
          if (net > best_net) {
            best_net = net;
            best_ed = ed;
            best_seq = std::move(candidate);
          }
        }
      }
    }
    if (best_net == 0) break;
    hyp = std::move(best_seq);
    current = best_ed;
    ++result.shifts;
  }
  result.edits = current + result.shifts;
  return result;
}

double ter(const std::vector<EvalPair>& pairs, const TerParams& params) {
  if (pairs.empty()) throw ConfigError("TER needs at least one pair");
  std::size_t edits = 0, ref_len = 0;
  for (const auto& p : pairs) {
    const auto r = ter_tokens(mt_tokenize(p.hypothesis), mt_tokenize(p.reference), params);
    edits += r.edits;
    ref_len += r.ref_len;
  }
  if (ref_len == 0) throw ConfigError("TER needs non-empty references");
  return 100.0 * static_cast<double>(edits) / static_cast<double>(ref_len);
}

}  // namespace lmt::metrics
