#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "lmt/error.hpp"
#include "lmt/metrics.hpp"

namespace lmt::metrics {

namespace {

using Link = std::pair<std::size_t, std::size_t>;

constexpr std::size_t kExhaustiveLimit = 5000;

// One word type: the shorter position list is matched in order against a
// chosen subset of the longer one.
struct TypeGroup {
  std::vector<std::size_t> hyp;
  std::vector<std::size_t> ref;
  bool hyp_is_short() const { return hyp.size() <= ref.size(); }
  const std::vector<std::size_t>& shorter() const { return hyp_is_short() ? hyp : ref; }
  const std::vector<std::size_t>& longer() const { return hyp_is_short() ? ref : hyp; }
};

std::size_t saturating_choose(std::size_t n, std::size_t k, std::size_t limit) {
  k = std::min(k, n - k);
  double c = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
    if (c > static_cast<double>(limit)) return limit + 1;
  }
  return static_cast<std::size_t>(std::llround(c));
}

void add_links(const TypeGroup& g, const std::vector<std::size_t>& chosen, std::vector<Link>& links) {
  const auto& s = g.shorter();
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (g.hyp_is_short()) {
      links.emplace_back(s[i], g.ref[chosen[i]]);
    } else {
      links.emplace_back(g.hyp[chosen[i]], s[i]);
    }
  }
}

// Monotone assignment minimising total relative-position distance.
std::vector<std::size_t> closest_subset(const TypeGroup& g, double hyp_len, double ref_len) {
  const auto& s = g.shorter();
  const auto& l = g.longer();
  const double s_len = g.hyp_is_short() ? hyp_len : ref_len;
  const double l_len = g.hyp_is_short() ? ref_len : hyp_len;
  const std::size_t k = s.size(), n = l.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> cost(k + 1, std::vector<double>(n + 1, inf));
  for (std::size_t j = 0; j <= n; ++j) cost[0][j] = 0.0;
  for (std::size_t i = 1; i <= k; ++i) {
    for (std::size_t j = i; j <= n; ++j) {
      const double d = std::abs(static_cast<double>(s[i - 1]) / s_len - static_cast<double>(l[j - 1]) / l_len);
      cost[i][j] = std::min(cost[i][j - 1], cost[i - 1][j - 1] + d);
    }
  }
  std::vector<std::size_t> chosen(k);
  std::size_t j = n;
  for (std::size_t i = k; i > 0; --i) {
    while (j > i && cost[i][j] == cost[i][j - 1]) --j;
    chosen[i - 1] = j - 1;
    --j;
  }
  return chosen;
}

class Search {
 public:
  explicit Search(const std::vector<TypeGroup>& groups) : groups_(groups), choice_(groups.size()) {}

  std::vector<Link> run() {
    recurse(0);
    return best_;
  }

 private:
  void recurse(std::size_t g) {
    if (g == groups_.size()) {
      std::vector<Link> links;
      for (std::size_t i = 0; i < groups_.size(); ++i) add_links(groups_[i], choice_[i], links);
      const std::size_t c = count_crossings(links);
      if (c < best_crossings_) {
        best_crossings_ = c;
        best_ = std::move(links);
      }
      return;
    }
    const std::size_t k = groups_[g].shorter().size();
    const std::size_t n = groups_[g].longer().size();
    choice_[g].assign(k, 0);
    combine(g, 0, 0, k, n);
  }

  void combine(std::size_t g, std::size_t slot, std::size_t from, std::size_t k, std::size_t n) {
    if (slot == k) {
      recurse(g + 1);
      return;
    }
    for (std::size_t j = from; j + (k - slot) <= n; ++j) {
      choice_[g][slot] = j;
      combine(g, slot + 1, j + 1, k, n);
    }
  }

  const std::vector<TypeGroup>& groups_;
  std::vector<std::vector<std::size_t>> choice_;
  std::vector<Link> best_;
  std::size_t best_crossings_ = std::numeric_limits<std::size_t>::max();
};

}  // namespace

std::size_t count_crossings(const std::vector<Link>& links) {
  std::size_t crossings = 0;
  for (std::size_t a = 0; a < links.size(); ++a) {
    for (std::size_t b = a + 1; b < links.size(); ++b) {
      const bool h = links[a].first < links[b].first;
      const bool r = links[a].second < links[b].second;
      if (h != r) ++crossings;
    }
  }
  return crossings;
}

std::vector<Link> meteor_align(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  std::map<std::string, TypeGroup> by_word;
  for (std::size_t i = 0; i < hyp.size(); ++i) by_word[hyp[i]].hyp.push_back(i);
  for (std::size_t j = 0; j < ref.size(); ++j) {
    const auto it = by_word.find(ref[j]);
    if (it != by_word.end()) it->second.ref.push_back(j);
  }
  std::vector<TypeGroup> groups;
  std::size_t combinations = 1;
  for (auto& [word, g] : by_word) {
    if (g.ref.empty()) continue;
    const std::size_t c = saturating_choose(g.longer().size(), g.shorter().size(), kExhaustiveLimit);
    combinations = c > kExhaustiveLimit ? kExhaustiveLimit + 1 : std::min(combinations * c, kExhaustiveLimit + 1);
    groups.push_back(std::move(g));
  }
  std::vector<Link> links;
  if (combinations <= kExhaustiveLimit) {
    links = Search(groups).run();
  } else {
    for (const auto& g : groups) {
      add_links(g, closest_subset(g, static_cast<double>(std::max<std::size_t>(hyp.size(), 1)),
                                  static_cast<double>(std::max<std::size_t>(ref.size(), 1))),
                links);
    }
  }
  std::sort(links.begin(), links.end());
  return links;
}

MeteorStats meteor_stats(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  MeteorStats s;
  s.hyp_len = hyp.size();
  s.ref_len = ref.size();
  const auto links = meteor_align(hyp, ref);
  s.matches = links.size();
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (i == 0 || links[i].first != links[i - 1].first + 1 || links[i].second != links[i - 1].second + 1) {
      ++s.chunks;
    }
  }
  return s;
}

double meteor_score(const MeteorStats& s, const MeteorParams& params) {
  if (s.matches == 0) return 0.0;
  const double m = static_cast<double>(s.matches);
  const double p = m / static_cast<double>(s.hyp_len);
  const double r = m / static_cast<double>(s.ref_len);
  const double fmean = p * r / (params.alpha * p + (1.0 - params.alpha) * r);
  const double penalty = params.gamma * std::pow(static_cast<double>(s.chunks) / m, params.beta);
  return fmean * (1.0 - penalty);
}

double meteor(const std::vector<EvalPair>& pairs, const MeteorParams& params) {
  if (pairs.empty()) throw ConfigError("METEOR needs at least one pair");
  MeteorStats pooled;
  for (const auto& p : pairs) {
    const auto s = meteor_stats(mt_tokenize(p.hypothesis), mt_tokenize(p.reference));
    pooled.matches += s.matches;
    pooled.chunks += s.chunks;
    pooled.hyp_len += s.hyp_len;
    pooled.ref_len += s.ref_len;
  }
  return meteor_score(pooled, params);
}

}  // namespace lmt::metrics
