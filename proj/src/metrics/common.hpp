#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

namespace lmt::metrics::detail {

using NgramCounts = std::map<std::string, std::size_t>;

// Joins tokens with a unit separator so n-grams of different splits never collide.
inline NgramCounts ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  NgramCounts counts;
  if (n == 0 || tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (std::size_t k = 1; k < n; ++k) {
      key += '\x1f';
      key += tokens[i + k];
    }
    ++counts[key];
  }
  return counts;
}

inline std::size_t clipped_overlap(const NgramCounts& hyp, const NgramCounts& ref) {
  std::size_t total = 0;
  for (const auto& [gram, count] : hyp) {
    const auto it = ref.find(gram);
    if (it != ref.end()) total += std::min(count, it->second);
  }
  return total;
}

inline std::size_t total_count(const NgramCounts& counts) {
  std::size_t total = 0;
  for (const auto& [gram, count] : counts) total += count;
  return total;
}

// Order-independent mean: values are summed in sorted order.
inline double stable_mean(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

inline double f1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace lmt::metrics::detail
