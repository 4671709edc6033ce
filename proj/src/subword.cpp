#include "lmt/subword.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "lmt/error.hpp"
#include "lmt/unicode.hpp"

namespace lmt {
namespace {

constexpr std::string_view kSpecialPieces[] = {"<pad>", "<unk>", "<s>", "</s>"};

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  const std::u32string cps = unicode::decode(text);
  // Work on byte offsets so the returned views alias the input.
  std::size_t byte = 0;
  std::size_t start = std::string_view::npos;
  for (char32_t cp : cps) {
    const std::size_t width = cp < 0x80 ? 1 : cp < 0x800 ? 2 : cp < 0x10000 ? 3 : 4;
    if (unicode::is_space(cp)) {
      if (start != std::string_view::npos) words.push_back(text.substr(start, byte - start));
      start = std::string_view::npos;
    } else if (start == std::string_view::npos) {
      start = byte;
    }
    byte += width;
  }
  if (start != std::string_view::npos) words.push_back(text.substr(start, text.size() - start));
  return words;
}

// Symbols of one word before any merge.
std::vector<std::string> initial_symbols(std::string_view word) {
  std::vector<std::string> syms = unicode::split_code_points(word);
  if (!syms.empty()) syms.front().insert(0, SubwordModel::kBoundary);
  return syms;
}

// Lexicographic comparison of a1+a2 against b1+b2 without allocating.
int compare_concat(std::string_view a1, std::string_view a2, std::string_view b1, std::string_view b2) {
  const std::size_t na = a1.size() + a2.size();
  const std::size_t nb = b1.size() + b2.size();
  const auto at = [](std::string_view x, std::string_view y, std::size_t i) {
    return static_cast<unsigned char>(i < x.size() ? x[i] : y[i - x.size()]);
  };
  for (std::size_t i = 0; i < std::min(na, nb); ++i) {
    const unsigned char ca = at(a1, a2, i);
    const unsigned char cb = at(b1, b2, i);
    if (ca != cb) return ca < cb ? -1 : 1;
  }
  return na == nb ? 0 : (na < nb ? -1 : 1);
}

std::uint64_t pair_key(TokenId l, TokenId r) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(l)) << 32) | static_cast<std::uint32_t>(r);
}

class BpeTrainer {
 public:
  BpeTrainer(std::span<const std::string> texts) {
    std::map<std::string_view, std::int64_t> word_freq;
    for (const auto& text : texts) {
      for (std::string_view w : split_words(text)) ++word_freq[w];
    }
    std::set<std::string> alphabet;
    std::vector<std::vector<std::string>> word_syms;
    for (const auto& [word, freq] : word_freq) {
      auto syms = initial_symbols(word);
      alphabet.insert(syms.begin(), syms.end());
      // The bare form too, so the character is encodable mid-word.
      alphabet.insert(syms.front().substr(SubwordModel::kBoundary.size()));
      word_syms.push_back(std::move(syms));
      freqs_.push_back(freq);
    }
    for (auto sp : kSpecialPieces) add_piece(std::string(sp));
    add_piece(std::string(SubwordModel::kBoundary));
    for (const auto& sym : alphabet) {
      if (!index_.contains(sym)) add_piece(sym);
    }
    base_size_ = pieces_.size() - SubwordModel::kNumSpecials;
    for (const auto& syms : word_syms) {
      std::vector<TokenId> ids;
      ids.reserve(syms.size());
      for (const auto& s : syms) ids.push_back(index_.at(s));
      words_.push_back(std::move(ids));
    }
  }

  std::size_t base_size() const { return base_size_; }

  void run(std::size_t vocab_size, std::vector<std::string>& pieces, std::vector<SubwordModel::Merge>& merges) {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      const auto& ids = words_[w];
      for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
        const auto key = pair_key(ids[i], ids[i + 1]);
        counts_[key] += freqs_[w];
        where_[key].push_back(static_cast<std::uint32_t>(w));
      }
    }
    for (const auto& [key, count] : counts_) heap_.push(Entry{count, key});

    std::vector<std::uint32_t> stamp(words_.size(), 0);
    std::uint32_t generation = 0;
    while (pieces_.size() < vocab_size) {
      std::optional<Entry> best;
      while (!heap_.empty()) {
        Entry top = heap_.top();
        heap_.pop();
        auto it = counts_.find(top.key);
        if (it != counts_.end() && it->second == top.count) {
          best = top;
          break;
        }
      }
      if (!best || best->count < 2) break;

      const TokenId left = static_cast<TokenId>(best->key >> 32);
      const TokenId right = static_cast<TokenId>(best->key & 0xFFFFFFFFu);
      merges.push_back({pieces_[left], pieces_[right]});
      const std::string merged = pieces_[left] + pieces_[right];
      TokenId result;
      if (auto found = index_.find(merged); found != index_.end()) {
        result = found->second;
      } else {
        result = add_piece(merged);
      }

      ++generation;
      std::unordered_set<std::uint64_t> touched;
      const std::vector<std::uint32_t> affected = std::move(where_[best->key]);
      where_.erase(best->key);
      for (std::uint32_t w : affected) {
        if (stamp[w] == generation) continue;
        stamp[w] = generation;
        auto& ids = words_[w];
        const std::int64_t f = freqs_[w];
        bool present = false;
        for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
          if (ids[i] == left && ids[i + 1] == right) present = true;
        }
        if (!present) continue;
        for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
          const auto key = pair_key(ids[i], ids[i + 1]);
          counts_[key] -= f;
          touched.insert(key);
        }
        std::vector<TokenId> next;
        next.reserve(ids.size());
        for (std::size_t i = 0; i < ids.size();) {
          if (i + 1 < ids.size() && ids[i] == left && ids[i + 1] == right) {
            next.push_back(result);
            i += 2;
          } else {
            next.push_back(ids[i]);
            ++i;
          }
        }
        ids = std::move(next);
        for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
          const auto key = pair_key(ids[i], ids[i + 1]);
          counts_[key] += f;
          touched.insert(key);
          if (ids[i] == result || ids[i + 1] == result) where_[key].push_back(w);
        }
      }
      for (auto key : touched) {
        auto it = counts_.find(key);
        if (it->second <= 0) {
          counts_.erase(it);
        } else {
          heap_.push(Entry{it->second, key});
        }
      }
    }
    pieces = pieces_;
  }

 private:
  struct Entry {
    std::int64_t count;
    std::uint64_t key;
  };

  TokenId add_piece(std::string piece) {
    const auto id = static_cast<TokenId>(pieces_.size());
    index_.emplace(piece, id);
    pieces_.push_back(std::move(piece));
    return id;
  }

  // Max-heap order: higher count first, then smaller merged string, then smaller left piece.
  struct Worse {
    const std::vector<std::string>* pieces;
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.count != b.count) return a.count < b.count;
      const auto& p = *pieces;
      const auto& al = p[a.key >> 32];
      const auto& ar = p[a.key & 0xFFFFFFFFu];
      const auto& bl = p[b.key >> 32];
      const auto& br = p[b.key & 0xFFFFFFFFu];
      const int c = compare_concat(al, ar, bl, br);
      if (c != 0) return c > 0;
      return al > bl;
    }
  };

  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t base_size_ = 0;
  std::vector<std::vector<TokenId>> words_;
  std::vector<std::int64_t> freqs_;
  std::unordered_map<std::uint64_t, std::int64_t> counts_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> where_;
  std::priority_queue<Entry, std::vector<Entry>, Worse> heap_{Worse{&pieces_}};
};

}  // namespace

SubwordModel SubwordModel::train(std::span<const std::string> texts, std::size_t vocab_size) {
  if (texts.empty()) throw ConfigError("cannot train a subword model on an empty corpus");
  BpeTrainer trainer(texts);
  const std::size_t floor = kNumSpecials + trainer.base_size();
  if (vocab_size <= floor) {
    throw ConfigError("vocab_size " + std::to_string(vocab_size) + " must exceed " + std::to_string(floor) +
                      " (4 specials + " + std::to_string(trainer.base_size()) + " base symbols)");
  }
  SubwordModel model;
  trainer.run(vocab_size, model.pieces_, model.merges_);
  model.base_size_ = trainer.base_size();
  model.rebuild_index();
  return model;
}

void SubwordModel::rebuild_index() {
  piece_index_.clear();
  merge_index_.clear();
  for (std::size_t i = 0; i < pieces_.size(); ++i) piece_index_.emplace(pieces_[i], static_cast<TokenId>(i));
  for (std::size_t rank = 0; rank < merges_.size(); ++rank) {
    const auto& m = merges_[rank];
    const auto l = find(m.left);
    const auto r = find(m.right);
    const auto out = find(m.left + m.right);
    if (!l || !r || !out) throw ParseError("merge references unknown piece: " + m.left + " " + m.right, rank + 1);
    merge_index_.try_emplace({*l, *r}, rank, *out);
  }
}

const std::string& SubwordModel::piece(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(pieces_.size()));
  }
  return pieces_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> SubwordModel::find(std::string_view piece) const {
  auto it = piece_index_.find(piece);
  if (it == piece_index_.end()) return std::nullopt;
  return it->second;
}

std::vector<TokenId> SubwordModel::encode_word(std::string_view word) const {
  std::vector<TokenId> ids;
  bool first = true;
  for (const auto& cp : unicode::split_code_points(word)) {
    if (first) {
      first = false;
      if (auto id = find(std::string(kBoundary) + cp)) {
        ids.push_back(*id);
      } else {
        ids.push_back(*find(kBoundary));
        ids.push_back(find(cp).value_or(kUnk));
      }
      continue;
    }
    ids.push_back(find(cp).value_or(kUnk));
  }
  while (ids.size() > 1) {
    std::size_t best_rank = merges_.size();
    std::pair<TokenId, TokenId> best_pair{};
    TokenId best_out = 0;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
      auto it = merge_index_.find({ids[i], ids[i + 1]});
      if (it != merge_index_.end() && it->second.first < best_rank) {
        best_rank = it->second.first;
        best_pair = it->first;
        best_out = it->second.second;
      }
    }
    if (best_rank == merges_.size()) break;
    std::vector<TokenId> next;
    next.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size();) {
      if (i + 1 < ids.size() && ids[i] == best_pair.first && ids[i + 1] == best_pair.second) {
        next.push_back(best_out);
        i += 2;
      } else {
        next.push_back(ids[i++]);
      }
    }
    ids = std::move(next);
  }
  return ids;
}

void truncate_with_eos(TokenSequence& ids, std::size_t max_len) {
  if (ids.size() <= max_len) return;
  ids.resize(max_len);
  if (max_len > 0) ids.back() = SubwordModel::kEos;
}

TokenSequence SubwordModel::encode(std::string_view text, bool add_markers, std::optional<std::size_t> max_len) const {
  TokenSequence out;
  if (add_markers) out.push_back(kBos);
  for (std::string_view word : split_words(text)) {
    auto ids = encode_word(word);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  if (add_markers) out.push_back(kEos);
  if (max_len) {
    if (add_markers) {
      truncate_with_eos(out, *max_len);
    } else if (out.size() > *max_len) {
      out.resize(*max_len);
    }
  }
  return out;
}

std::string SubwordModel::decode(std::span<const TokenId> ids) const {
  std::string joined;
  for (TokenId id : ids) {
    const std::string& p = piece(id);
    if (id == kPad || id == kBos || id == kEos) continue;
    joined += (id == kUnk) ? std::string(kUnkSurface) : p;
  }
  std::string out;
  out.reserve(joined.size());
  for (std::size_t i = 0; i < joined.size();) {
    if (joined.compare(i, kBoundary.size(), kBoundary) == 0) {
      if (!out.empty()) out.push_back(' ');
      i += kBoundary.size();
    } else {
      out.push_back(joined[i++]);
    }
  }
  return out;
}

std::string SubwordModel::serialize() const {
  std::ostringstream os;
  os << "subword v1 " << pieces_.size() << '\n';
  for (std::size_t i = 0; i < pieces_.size(); ++i) os << i << '\t' << pieces_[i] << '\n';
  os << "#merges\n";
  for (const auto& m : merges_) os << m.left << '\t' << m.right << '\n';
  return os.str();
}

SubwordModel SubwordModel::parse(std::string_view text) {
  SubwordModel model;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    const auto end = text.find('\n', pos);
    line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() : end + 1;
    ++line_no;
    return true;
  };
  std::string_view line;
  if (!next_line(line) || !line.starts_with("subword v1 ")) throw ParseError("missing 'subword v1' header", 1);
  std::size_t declared = 0;
  try {
    declared = std::stoul(std::string(line.substr(11)));
  } catch (const std::exception&) {
    throw ParseError("bad vocabulary size in header", 1);
  }
  bool in_merges = false;
  while (next_line(line)) {
    if (!in_merges && line == "#merges") {
      in_merges = true;
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw ParseError("expected a tab-separated line", line_no);
    if (in_merges) {
      model.merges_.push_back({std::string(line.substr(0, tab)), std::string(line.substr(tab + 1))});
    } else {
      if (std::stoul(std::string(line.substr(0, tab))) != model.pieces_.size()) {
        throw ParseError("piece ids must be dense and ordered", line_no);
      }
      model.pieces_.emplace_back(line.substr(tab + 1));
    }
  }
  if (!in_merges) throw ParseError("missing #merges section", line_no);
  if (model.pieces_.size() != declared) throw ParseError("header vocabulary size disagrees with piece count", 1);
  if (model.pieces_.size() < kNumSpecials + 1) throw ParseError("model has no base pieces", 1);
  for (std::size_t i = 0; i < kNumSpecials; ++i) {
    if (model.pieces_[i] != kSpecialPieces[i]) throw ParseError("special pieces must occupy ids 0-3", i + 2);
  }
  model.rebuild_index();
  if (model.merges_.empty()) {
    model.base_size_ = model.pieces_.size() - kNumSpecials;
  } else {
    const auto& m = model.merges_.front();
    model.base_size_ = static_cast<std::size_t>(*model.find(m.left + m.right)) - kNumSpecials;
  }
  return model;
}

void SubwordModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write subword model " + path.string());
  out << serialize();
  if (!out) throw IoError("failed writing subword model " + path.string());
}

SubwordModel SubwordModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read subword model " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
    h >>= 4;
  }
  return out;
}

std::string SubwordModel::content_hash() const { return fnv1a_hex(serialize()); }

}  // namespace lmt
