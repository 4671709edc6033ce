#include "lmt/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "lmt/error.hpp"
#include "lmt/rng.hpp"
#include "lmt/unicode.hpp"

namespace lmt {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "validation" || name == "valid" || name == "dev") return Split::validation;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(name) + "' (expected train, validation or test)");
}

CorpusFormat parse_format(std::string_view name) {
  if (name == "tsv") return CorpusFormat::tsv;
  if (name == "jsonl") return CorpusFormat::jsonl;
  throw ConfigError("unknown corpus format '" + std::string(name) + "' (expected tsv or jsonl)");
}

CleaningPolicy parse_policy(std::string_view name) {
  if (name == "strict") return CleaningPolicy::strict;
  if (name == "drop") return CleaningPolicy::drop;
  throw ConfigError("unknown cleaning policy '" + std::string(name) + "' (expected strict or drop)");
}

CorpusFormat format_for_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".jsonl" || ext == ".json") ? CorpusFormat::jsonl : CorpusFormat::tsv;
}

std::string normalize_text(std::string_view text) {
  std::u32string kept;
  for (char32_t cp : unicode::decode(text)) {
    // Tab/LF/CR are whitespace and survive until the collapse step.
    if (unicode::is_control(cp) && !unicode::is_space(cp)) continue;
    kept.push_back(cp);
  }
  const std::u32string composed = unicode::decode(unicode::nfc(unicode::encode(kept)));
  std::u32string out;
  out.reserve(composed.size());
  bool pending_space = false;
  for (char32_t cp : composed) {
    if (unicode::is_space(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(cp);
  }
  return unicode::encode(out);
}

ParallelCorpus ParallelCorpus::from_pairs(const std::vector<std::pair<std::string, std::string>>& raw, Split split) {
  ParallelCorpus corpus;
  corpus.split = split;
  for (const auto& [src, tgt] : raw) {
    corpus.pairs.push_back({corpus.pairs.size(), normalize_text(src), normalize_text(tgt)});
  }
  return corpus;
}

namespace {

struct RawPair {
  std::string source;
  std::string target;
};

// Returns an error message, or empty on success.
std::string parse_line(std::string_view line, CorpusFormat format, RawPair& out) {
  if (format == CorpusFormat::tsv) {
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) return "expected 2 tab-separated fields, found 1";
    if (line.find('\t', tab + 1) != std::string_view::npos) return "expected 2 tab-separated fields, found more";
    out.source = std::string(line.substr(0, tab));
    out.target = std::string(line.substr(tab + 1));
    return {};
  }
  const auto obj = nlohmann::json::parse(line, nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) return "line is not a JSON object";
  if (!obj.contains("source") || !obj.contains("target")) return "JSON object lacks \"source\"/\"target\"";
  if (!obj["source"].is_string() || !obj["target"].is_string()) return "\"source\"/\"target\" must be strings";
  out.source = obj["source"].get<std::string>();
  out.target = obj["target"].get<std::string>();
  return {};
}

}  // namespace

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (lines.empty() && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

LoadResult load_parallel(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file " + path.string());

  LoadResult result;
  result.corpus.split = options.split;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    RawPair raw;
    std::string problem = line.empty() ? "empty line" : parse_line(line, options.format, raw);
    std::string source;
    std::string target;
    if (problem.empty()) {
      source = normalize_text(raw.source);
      target = normalize_text(raw.target);
      if (source.empty()) problem = "empty source after normalization";
      else if (target.empty()) problem = "empty target after normalization";
    }
    if (!problem.empty()) {
      if (options.policy == CleaningPolicy::strict) throw ParseError(path.string() + ": " + problem, line_no);
      ++result.dropped;
      result.warnings.push_back("line " + std::to_string(line_no) + ": " + problem);
      continue;
    }
    result.corpus.pairs.push_back({result.corpus.pairs.size(), std::move(source), std::move(target)});
  }
  if (in.bad()) throw IoError("read error in " + path.string());
  return result;
}

std::vector<std::uint8_t> TokenMatrix::mask() const {
  std::vector<std::uint8_t> m(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) m[i] = ids[i] != SubwordModel::kPad ? 1 : 0;
  return m;
}

TokenSequence TokenMatrix::row(std::size_t r) const {
  TokenSequence out(ids.begin() + static_cast<std::ptrdiff_t>(r * cols),
                    ids.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
  while (!out.empty() && out.back() == SubwordModel::kPad) out.pop_back();
  return out;
}

TokenMatrix pad_rows(const std::vector<TokenSequence>& rows) {
  TokenMatrix m;
  m.rows = rows.size();
  for (const auto& r : rows) m.cols = std::max(m.cols, r.size());
  m.ids.assign(m.rows * m.cols, SubwordModel::kPad);
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), m.ids.begin() + static_cast<std::ptrdiff_t>(r * m.cols));
  return m;
}

std::vector<Batch> make_batches(const ParallelCorpus& corpus, const SubwordModel& model, std::size_t batch_size,
                                std::size_t max_len, std::optional<std::uint64_t> shuffle_seed) {
  if (corpus.empty()) throw ConfigError("cannot batch an empty corpus");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (max_len < 2) throw ConfigError("max_len must be at least 2 to hold begin/end markers");

  std::vector<TokenSequence> src(corpus.size());
  std::vector<TokenSequence> tgt(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    src[i] = model.encode(corpus.pairs[i].source, true, max_len);
    tgt[i] = model.encode(corpus.pairs[i].target, true, max_len);
  }

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::optional<Rng> rng;
  if (shuffle_seed) {
    rng.emplace(*shuffle_seed);
    rng->shuffle(std::span(order));
  }
  for (std::size_t start = 0; start < order.size(); start += kBucketWindow) {
    const auto first = order.begin() + static_cast<std::ptrdiff_t>(start);
    const auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + kBucketWindow));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) { return src[a].size() < src[b].size(); });
  }

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::vector<TokenSequence> s;
    std::vector<TokenSequence> t;
    Batch batch;
    for (std::size_t k = start; k < end; ++k) {
      s.push_back(src[order[k]]);
      t.push_back(tgt[order[k]]);
      batch.pair_ids.push_back(corpus.pairs[order[k]].id);
    }
    batch.source = pad_rows(s);
    batch.target = pad_rows(t);
    batch.source_mask = batch.source.mask();
    batch.target_mask = batch.target.mask();
    batches.push_back(std::move(batch));
  }
  if (rng) rng->shuffle(std::span(batches));
  return batches;
}

}  // namespace lmt
