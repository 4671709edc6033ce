#include "lmt/metrics.hpp"

#include "lmt/unicode.hpp"

namespace lmt::metrics {

std::vector<std::string> mt_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  const std::u32string cps = unicode::decode(text);
  std::size_t i = 0;
  while (i < cps.size()) {
    while (i < cps.size() && unicode::is_space(cps[i])) ++i;
    if (i == cps.size()) break;
    std::size_t j = i;
    bool all_punct = true;
    while (j < cps.size() && !unicode::is_space(cps[j])) {
      all_punct = all_punct && unicode::is_punct(cps[j]);
      ++j;
    }
    if (all_punct) {
      tokens.push_back(unicode::encode(cps.substr(i, j - i)));
    } else {
      std::string word;
      for (std::size_t k = i; k < j; ++k) {
        if (unicode::is_punct(cps[k])) {
          if (!word.empty()) tokens.push_back(std::move(word));
          word.clear();
          std::string p;
          unicode::append(p, cps[k]);
          tokens.push_back(std::move(p));
        } else {
          unicode::append(word, cps[k]);
        }
      }
      if (!word.empty()) tokens.push_back(std::move(word));
    }
    i = j;
  }
  return tokens;
}

}  // namespace lmt::metrics
