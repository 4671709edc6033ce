#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lmt {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

/// Byte-pair-encoding subword model over Unicode code points.
///
/// Words are whitespace-separated; the first code point of each word carries
/// the boundary marker U+2581 ("▁") so that whitespace is recoverable on
/// decode without being a token itself. Ids 0-3 are reserved for
/// pad/unk/bos/eos, followed by the base alphabet (the bare marker first,
/// then every observed symbol in byte order), followed by merged pieces in
/// merge-rank order.
class SubwordModel {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kBos = 2;
  static constexpr TokenId kEos = 3;
  static constexpr std::size_t kNumSpecials = 4;
  static constexpr std::string_view kBoundary = "▁";
  static constexpr std::string_view kUnkSurface = "⁇";

  struct Merge {
    std::string left;
    std::string right;
    friend bool operator==(const Merge&, const Merge&) = default;
  };

  SubwordModel() = default;

  /// Greedy BPE: merges the most frequent adjacent pair until `vocab_size`
  /// pieces exist or no pair occurs at least twice. Ties go to the
  /// lexicographically smallest merged string, then the smallest left piece.
  /// Texts are expected to be normalized already.
  static SubwordModel train(std::span<const std::string> texts, std::size_t vocab_size);

  TokenSequence encode(std::string_view text, bool add_markers = false,
                       std::optional<std::size_t> max_len = std::nullopt) const;
  /// Throws std::out_of_range on an invalid id.
  std::string decode(std::span<const TokenId> ids) const;

  std::size_t vocab_size() const { return pieces_.size(); }
  std::size_t base_size() const { return base_size_; }
  const std::string& piece(TokenId id) const;
  std::optional<TokenId> find(std::string_view piece) const;
  const std::vector<std::string>& pieces() const { return pieces_; }
  const std::vector<Merge>& merges() const { return merges_; }

  /// Text model format: header, one `<id>\t<piece>` per line, `#merges`,
  /// one `<left>\t<right>` per merge in rank order.
  std::string serialize() const;
  static SubwordModel parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static SubwordModel load(const std::filesystem::path& path);

  /// 64-bit FNV-1a of the serialized model, as 16 hex digits.
  std::string content_hash() const;

 private:
  void rebuild_index();
  std::vector<TokenId> encode_word(std::string_view word) const;

  std::vector<std::string> pieces_;
  std::size_t base_size_ = 0;
  std::vector<Merge> merges_;

  std::map<std::string, TokenId, std::less<>> piece_index_;
  // (left id, right id) -> (rank, result id)
  std::map<std::pair<TokenId, TokenId>, std::pair<std::size_t, TokenId>> merge_index_;
};

/// Truncates keeping the prefix; the final kept position becomes eos.
void truncate_with_eos(TokenSequence& ids, std::size_t max_len);

std::string fnv1a_hex(std::string_view bytes);

}  // namespace lmt
