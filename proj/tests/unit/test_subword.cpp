#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "lmt/corpus.hpp"
#include "lmt/error.hpp"
#include "lmt/rng.hpp"
#include "lmt/subword.hpp"
#include "lmt/unicode.hpp"

namespace fs = std::filesystem;
using namespace lmt;

namespace {

std::vector<std::string> legal_texts() {
  return {"the appeal is dismissed with costs",
          "the court held that the contract was void",
          "अपील लागत सहित खारिज की जाती है",
          "न्यायालय ने माना कि अनुबंध शून्य था",
          "the petitioner filed a writ petition",
          "याचिकाकर्ता ने रिट याचिका दायर की",
          "section 302 of the penal code, read with section 34."};
}

std::string random_text(Rng& rng, const std::vector<std::string>& alphabet) {
  std::string s;
  const std::size_t words = 1 + rng.below(6);
  for (std::size_t w = 0; w < words; ++w) {
    if (w) s += ' ';
    const std::size_t len = 1 + rng.below(7);
    for (std::size_t k = 0; k < len; ++k) s += alphabet[rng.below(alphabet.size())];
  }
  return s;
}

}  // namespace

TEST_SUITE("subword") {
  TEST_CASE("first learned merge on aa aa ab joins the repeated pair") {
    const std::vector<std::string> texts{"aa aa ab"};
    // Base: "▁", "▁a", "a", "b".
    const auto m = SubwordModel::train(texts, 4 + 4 + 1);
    CHECK(m.base_size() == 4);
    REQUIRE(m.merges().size() == 1);
    CHECK(m.merges()[0].left == "▁a");
    CHECK(m.merges()[0].right == "a");
    CHECK(m.vocab_size() == 9);
    CHECK(m.piece(8) == "▁aa");
  }

  TEST_CASE("single-character words learn no merges") {
    const std::vector<std::string> texts{"a a a"};
    const auto m = SubwordModel::train(texts, 100);
    CHECK(m.merges().empty());
    CHECK(m.vocab_size() == SubwordModel::kNumSpecials + m.base_size());
  }

  TEST_CASE("vocab_size not above specials plus base is a configuration error") {
    const std::vector<std::string> texts{"aa aa ab"};
    CHECK_THROWS_AS(SubwordModel::train(texts, 8), ConfigError);
    CHECK_THROWS_AS(SubwordModel::train(std::vector<std::string>{}, 100), ConfigError);
  }

  TEST_CASE("ids are dense, specials first, merged pieces are unique concatenations") {
    const auto texts = legal_texts();
    const auto m = SubwordModel::train(texts, 150);
    CHECK(m.piece(SubwordModel::kPad) == "<pad>");
    CHECK(m.piece(SubwordModel::kUnk) == "<unk>");
    CHECK(m.piece(SubwordModel::kBos) == "<s>");
    CHECK(m.piece(SubwordModel::kEos) == "</s>");
    std::set<std::string> distinct(m.pieces().begin(), m.pieces().end());
    CHECK(distinct.size() == m.vocab_size());
    const std::size_t first_merged = SubwordModel::kNumSpecials + m.base_size();
    REQUIRE(m.vocab_size() == first_merged + m.merges().size());
    for (std::size_t i = 0; i < m.merges().size(); ++i) {
      const auto& mg = m.merges()[i];
      CHECK(m.piece(static_cast<TokenId>(first_merged + i)) == mg.left + mg.right);
      CHECK(m.find(mg.left).has_value());
      CHECK(m.find(mg.right).has_value());
    }
  }

  TEST_CASE("round trip on unk-free text") {
    const auto texts = legal_texts();
    const auto m = SubwordModel::train(texts, 120);
    for (const auto& t : texts) CHECK(m.decode(m.encode(t)) == t);
    std::vector<std::string> alphabet;
    for (const auto& t : texts) {
      for (auto& cp : unicode::split_code_points(t)) {
        if (cp != " ") alphabet.push_back(cp);
      }
    }
    Rng rng(5);
    for (int i = 0; i < 300; ++i) {
      const auto s = normalize_text(random_text(rng, alphabet));
      const auto ids = m.encode(s);
      REQUIRE(std::find(ids.begin(), ids.end(), SubwordModel::kUnk) == ids.end());
      CHECK(m.decode(ids) == s);
    }
  }

  TEST_CASE("unseen characters map to unk and decode to the replacement marker") {
    const auto texts = legal_texts();
    const auto m = SubwordModel::train(texts, 120);
    const auto ids = m.encode("the zebra");
    CHECK(std::find(ids.begin(), ids.end(), SubwordModel::kUnk) != ids.end());
    CHECK(m.decode(ids).find("⁇") != std::string::npos);
  }

  TEST_CASE("markers, truncation and specials on decode") {
    const auto texts = legal_texts();
    const auto m = SubwordModel::train(texts, 120);
    const std::vector<TokenId> only_specials{SubwordModel::kBos, SubwordModel::kEos};
    CHECK(m.decode(only_specials) == "");
    const auto plain = m.encode("the court");
    const auto marked = m.encode("the court", true);
    REQUIRE(marked.size() == plain.size() + 2);
    CHECK(marked.front() == SubwordModel::kBos);
    CHECK(marked.back() == SubwordModel::kEos);
    CHECK(std::equal(plain.begin(), plain.end(), marked.begin() + 1));

    std::string longline;
    for (int i = 0; i < 100; ++i) longline += "the court ";
    const auto full = m.encode(normalize_text(longline), true);
    REQUIRE(full.size() >= 300);
    const auto cut = m.encode(normalize_text(longline), true, 128);
    CHECK(cut.size() == 128);
    CHECK(cut.back() == SubwordModel::kEos);
    CHECK(std::equal(cut.begin(), cut.end() - 1, full.begin()));
  }

  TEST_CASE("decode rejects out-of-range ids") {
    const auto texts = legal_texts();
    const auto m = SubwordModel::train(texts, 120);
    const std::vector<TokenId> bad{static_cast<TokenId>(m.vocab_size())};
    CHECK_THROWS_AS(m.decode(bad), std::out_of_range);
    const std::vector<TokenId> neg{-1};
    CHECK_THROWS_AS(m.decode(neg), std::out_of_range);
  }

  TEST_CASE("training is deterministic") {
    const auto texts = legal_texts();
    const auto a = SubwordModel::train(texts, 140);
    const auto b = SubwordModel::train(texts, 140);
    CHECK(a.merges() == b.merges());
    CHECK(a.serialize() == b.serialize());
    CHECK(a.content_hash() == b.content_hash());
  }

  TEST_CASE("growing the vocabulary never lengthens a training sentence") {
    const auto texts = legal_texts();
    std::vector<std::size_t> previous(texts.size(), SIZE_MAX);
    const std::size_t floor = SubwordModel::kNumSpecials + SubwordModel::train(texts, 1000).base_size();
    for (std::size_t v = floor + 1; v <= floor + 120; v += 7) {
      const auto m = SubwordModel::train(texts, v);
      for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto len = m.encode(texts[i]).size();
        CHECK(len <= previous[i]);
        previous[i] = len;
      }
    }
  }

  TEST_CASE("file format round trip") {
    const auto texts = legal_texts();
    const auto m = SubwordModel::train(texts, 130);
    const auto text = m.serialize();
    std::istringstream in(text);
    std::string header;
    std::getline(in, header);
    CHECK(header == "subword v1 " + std::to_string(m.vocab_size()));
    CHECK(text.find("\n#merges\n") != std::string::npos);

    const auto dir = fs::temp_directory_path() / "lmt_subword_tests";
    fs::create_directories(dir);
    m.save(dir / "m.model");
    const auto back = SubwordModel::load(dir / "m.model");
    CHECK(back.pieces() == m.pieces());
    CHECK(back.merges() == m.merges());
    CHECK(back.base_size() == m.base_size());
    CHECK(back.content_hash() == m.content_hash());
    for (const auto& t : texts) CHECK(back.encode(t) == m.encode(t));
    CHECK_THROWS(SubwordModel::parse("not a model\n"));
  }

  TEST_CASE("fnv1a matches published vectors") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
  }
}
