#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lmt/decode.hpp"
#include "lmt/error.hpp"
#include "support/toy.hpp"

using namespace lmt;
using namespace lmt::testing;

namespace {

TokenSequence random_source(Rng& rng, std::size_t vocab, std::size_t max_len) {
  TokenSequence s{SubwordModel::kBos};
  const std::size_t n = 1 + rng.below(max_len - 2);
  for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<TokenId>(4 + rng.below(vocab - 4)));
  s.push_back(SubwordModel::kEos);
  return s;
}

std::vector<EnumeratedHypothesis> ranked(std::vector<EnumeratedHypothesis> all, double alpha) {
  const auto score = [&](const EnumeratedHypothesis& h) {
    return h.log_prob / std::pow(static_cast<double>(std::max<std::size_t>(h.ids.size(), 1)), alpha);
  };
  std::stable_sort(all.begin(), all.end(), [&](const auto& a, const auto& b) {
    if (score(a) != score(b)) return score(a) > score(b);
    return a.ids < b.ids;
  });
  return all;
}

}  // namespace

TEST_SUITE("decode") {
  TEST_CASE("config validation and json") {
    DecodeConfig c;
    c.beam_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = DecodeConfig{};
    c.length_penalty_alpha = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = DecodeConfig{};
    c.max_len = 20;
    const auto back = DecodeConfig::from_json(c.to_json());
    CHECK(back.max_len == c.max_len);
    CHECK(back.beam_size == 4);
    CHECK(back.length_penalty_alpha == 0.6);
    CHECK(parse_strategy("greedy") == DecodeStrategy::greedy);
    CHECK_THROWS_AS(parse_strategy("sample"), ConfigError);
  }

  TEST_CASE("hand-wired scorer: greedy and beam disagree as designed") {
    HandWiredScorer s;
    const auto g = greedy_decode(s, 3);
    CHECK(g.finished);
    REQUIRE(!g.ids.empty());
    CHECK(g.ids.front() == 4);
    const auto beams = beam_search(s, 2, 0.0, 3);
    REQUIRE(!beams.empty());
    CHECK(beams.front().ids == TokenSequence{5, SubwordModel::kEos});
    CHECK(beams.front().log_prob > g.log_prob);
  }

  TEST_CASE("wide beam reproduces exhaustive enumeration") {
    HandWiredScorer s;
    for (double alpha : {0.0, 0.6, 1.0}) {
      const auto all = ranked(enumerate_sequences(s, 3), alpha);
      REQUIRE(all.size() == 1 + 5 + 150);
      const auto beams = beam_search(s, 40, alpha, 3);
      REQUIRE(beams.size() == 40);
      for (std::size_t i = 0; i < beams.size(); ++i) {
        CHECK(beams[i].ids == all[i].ids);
        CHECK(beams[i].log_prob == doctest::Approx(all[i].log_prob).epsilon(1e-12));
        CHECK(beams[i].finished);
      }
    }
  }

  TEST_CASE("alpha 0 ranks by raw log-probability") {
    HandWiredScorer s;
    const auto beams = beam_search(s, 5, 0.0, 3);
    for (std::size_t i = 1; i < beams.size(); ++i) CHECK(beams[i - 1].log_prob >= beams[i].log_prob);
  }

  TEST_CASE("hypotheses end with eos or at max_len") {
    HandWiredScorer s;
    for (std::size_t beam : {1, 2, 3, 6}) {
      for (const auto& h : beam_search(s, beam, 0.6, 3)) {
        CHECK(h.finished);
        CHECK((h.ids.back() == SubwordModel::kEos || h.ids.size() == 3));
        CHECK(h.log_prob <= 0.0);
      }
    }
    const auto one = greedy_decode(s, 1);
    CHECK(one.ids.size() == 1);
    CHECK(one.finished);
  }

  TEST_CASE("beam size 1 equals greedy on random model inputs") {
    const TransformerModel<float> m(tiny_model_config(13), 21);
    Rng rng(77);
    DecodeConfig g{DecodeStrategy::greedy, 1, 0.6, std::nullopt};
    DecodeConfig b{DecodeStrategy::beam, 1, 0.6, std::nullopt};
    for (int i = 0; i < 20; ++i) {
      const auto src = random_source(rng, 13, 16);
      const auto gh = greedy_decode(m, src, g);
      const auto bh = beam_search(m, src, b);
      REQUIRE(bh.size() == 1);
      CHECK(bh[0].ids == gh.ids);
      CHECK(gh.ids.size() <= 16);
    }
  }

  TEST_CASE("returned log-probabilities match a fresh forward pass") {
    const TransformerModel<float> m(tiny_model_config(13), 22);
    Rng rng(78);
    DecodeConfig cfg{DecodeStrategy::beam, 3, 0.6, 8};
    for (int i = 0; i < 5; ++i) {
      const auto src = random_source(rng, 13, 10);
      for (const auto& h : beam_search(m, src, cfg)) {
        TransformerScorer fresh(m, src);
        CHECK(std::abs(sequence_log_prob(fresh, h.ids) - h.log_prob) < 1e-4);
      }
      TransformerScorer fresh(m, src);
      const auto gh = greedy_decode(m, src, cfg);
      CHECK(std::abs(sequence_log_prob(fresh, gh.ids) - gh.log_prob) < 1e-4);
    }
  }

  TEST_CASE("wider beams do not lower the best score on the reference cases") {
    HandWiredScorer s;
    double prev = -1e300;
    for (std::size_t beam = 1; beam <= 8; ++beam) {
      const double best = beam_search(s, beam, 0.6, 3).front().score(0.6);
      CHECK(best >= prev);
      prev = best;
    }
  }

  TEST_CASE("greedy is deterministic and respects max_len") {
    const TransformerModel<float> m(tiny_model_config(13), 23);
    const TokenSequence src{2, 5, 6, 7, 3};
    DecodeConfig cfg{DecodeStrategy::greedy, 1, 0.6, 4};
    const auto a = greedy_decode(m, src, cfg);
    const auto b = greedy_decode(m, src, cfg);
    CHECK(a.ids == b.ids);
    CHECK(a.ids.size() <= 4);
  }

  TEST_CASE("translate_corpus preserves alignment") {
    const auto corpus = copy_corpus(8);
    const auto sp = toy_subword(corpus);
    auto mc = toy_model_config(sp.vocab_size());
    mc.max_len = 12;
    const TransformerModel<float> m(mc, 5);
    DecodeConfig cfg{DecodeStrategy::greedy, 1, 0.6, std::nullopt};
    CHECK(translate_corpus(m, sp, {}, cfg).lines.empty());
    std::vector<std::string> inputs;
    for (const auto& p : corpus.pairs) inputs.push_back(p.source);
    inputs.push_back("");
    inputs.push_back("  qqq   zzz ");
    const auto one = translate_corpus(m, sp, inputs, cfg, 1);
    CHECK(one.lines.size() == inputs.size());
    CHECK(one.failures == 0);
    const auto many = translate_corpus(m, sp, inputs, cfg, 4);
    CHECK(many.lines == one.lines);
    cfg.strategy = DecodeStrategy::beam;
    cfg.beam_size = 2;
    CHECK(translate_corpus(m, sp, inputs, cfg, 3).lines.size() == inputs.size());
  }
}
