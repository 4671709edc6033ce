#include <algorithm>
#include <cstdio>
#include <sstream>

#include "lmt/corpus.hpp"
#include "lmt/error.hpp"
#include "lmt/metrics.hpp"

namespace lmt::metrics {

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["scores"] = {{"bleu", bleu},     {"chrf_pp", chrf_pp}, {"ter", ter},       {"rouge1", rouge1},
                 {"rouge2", rouge2}, {"rougeL", rougeL},   {"meteor", meteor}};
  j["metadata"] = metadata;
  j["warnings"] = warnings;
  if (per_sentence) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : *per_sentence) {
      rows.push_back({{"bleu", s.bleu},     {"chrf_pp", s.chrf_pp}, {"ter", s.ter},       {"rouge1", s.rouge1},
                      {"rouge2", s.rouge2}, {"rougeL", s.rougeL},   {"meteor", s.meteor}});
    }
    j["per_sentence"] = std::move(rows);
  }
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  const auto& s = j.at("scores");
  r.bleu = s.at("bleu").get<double>();
  r.chrf_pp = s.at("chrf_pp").get<double>();
  r.ter = s.at("ter").get<double>();
  r.rouge1 = s.at("rouge1").get<double>();
  r.rouge2 = s.at("rouge2").get<double>();
  r.rougeL = s.at("rougeL").get<double>();
  r.meteor = s.at("meteor").get<double>();
  r.metadata = j.value("metadata", nlohmann::json::object());
  r.warnings = j.value("warnings", std::vector<std::string>{});
  if (j.contains("per_sentence")) {
    std::vector<SentenceScores> rows;
    for (const auto& row : j["per_sentence"]) {
      rows.push_back({row.at("bleu").get<double>(), row.at("chrf_pp").get<double>(), row.at("ter").get<double>(),
                      row.at("rouge1").get<double>(), row.at("rouge2").get<double>(), row.at("rougeL").get<double>(),
                      row.at("meteor").get<double>()});
    }
    r.per_sentence = std::move(rows);
  }
  return r;
}

EvalReport evaluate(const std::vector<EvalPair>& pairs, const EvalOptions& options) {
  if (pairs.empty()) throw Error("cannot evaluate an empty corpus");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (mt_tokenize(pairs[i].reference).empty()) throw Error("empty reference at line " + std::to_string(i + 1));
  }
  EvalReport r;
  r.bleu = bleu_corpus(pairs, options.bleu_max_n);
  r.chrf_pp = chrf_pp(pairs, options.chrf);
  r.ter = ter(pairs, options.ter);
  r.rouge1 = rouge_n(pairs, 1).f1;
  r.rouge2 = rouge_n(pairs, 2).f1;
  r.rougeL = rouge_l(pairs).f1;
  r.meteor = meteor(pairs, options.meteor);
  if (std::all_of(pairs.begin(), pairs.end(), [](const EvalPair& p) { return mt_tokenize(p.hypothesis).empty(); })) {
    r.warnings.push_back("all hypotheses are empty; BLEU is 0");
  }
  if (options.per_sentence) {
    std::vector<SentenceScores> rows;
    rows.reserve(pairs.size());
    for (const auto& p : pairs) {
      const std::vector<EvalPair> one{p};
      SentenceScores s;
      s.bleu = sentence_bleu(p, options.bleu_max_n);
      s.chrf_pp = chrf_pp(one, options.chrf);
      s.ter = ter(one, options.ter);
      s.rouge1 = rouge_n(one, 1).f1;
      s.rouge2 = rouge_n(one, 2).f1;
      s.rougeL = rouge_l(one).f1;
      s.meteor = meteor(one, options.meteor);
      rows.push_back(s);
    }
    r.per_sentence = std::move(rows);
  }
  r.metadata = {
      {"tokenization", kTokenizerTag},
      {"corpus_size", pairs.size()},
      {"bleu", {{"max_n", options.bleu_max_n}, {"corpus_smoothing", "none"}, {"sentence_smoothing", "exp"}}},
      {"chrf_pp",
       {{"char_order", options.chrf.char_order}, {"word_order", options.chrf.word_order}, {"beta", options.chrf.beta},
        {"whitespace", "removed"}}},
      {"ter",
       {{"case_sensitive", true},
        {"max_shift_size", options.ter.max_shift_size},
        {"max_shift_iterations", std::to_string(options.ter.max_shift_factor) + "*ref_len"},
        {"scale", 100}}},
      {"rouge", {{"lowercase", "latin"}, {"aggregate", "mean_of_pairs"}, {"reported", "f1"}}},
      {"meteor",
       {{"alpha", options.meteor.alpha},
        {"beta", options.meteor.beta},
        {"gamma", options.meteor.gamma},
        {"modules", {"exact"}},
        {"case_sensitive", true},
        {"aggregate", "pooled"}}},
      {"references", 1},
  };
  return r;
}

EvalReport evaluate_files(const std::filesystem::path& hyp_file, const std::filesystem::path& ref_file,
                          const EvalOptions& options) {
  const auto hyps = read_lines(hyp_file);
  const auto refs = read_lines(ref_file);
  if (hyps.size() != refs.size()) {
    throw Error("line count mismatch: " + hyp_file.string() + " has " + std::to_string(hyps.size()) + " lines, " +
                ref_file.string() + " has " + std::to_string(refs.size()));
  }
  std::vector<EvalPair> pairs;
  pairs.reserve(hyps.size());
  for (std::size_t i = 0; i < hyps.size(); ++i) pairs.push_back({hyps[i], refs[i]});
  EvalReport r = evaluate(pairs, options);
  r.metadata["hypothesis_file"] = hyp_file.string();
  r.metadata["reference_file"] = ref_file.string();
  return r;
}

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string render_table(const std::vector<TableRow>& rows) {
  const std::vector<std::string> header{"Model",   "Fine-Tuned", "BLEU",           "chrF++", "TER",  "ROUGE-1",
                                        "ROUGE-2", "ROUGE-L",    "BERTScore (F1)", "METEOR", "COMET"};
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& row : rows) {
    const auto& r = row.report;
    cells.push_back({row.model, row.fine_tuned, fixed2(r.bleu), fixed2(r.chrf_pp), fixed2(r.ter),
                     fixed2(100.0 * r.rouge1), fixed2(100.0 * r.rouge2), fixed2(100.0 * r.rougeL), "n/a",
                     fixed2(100.0 * r.meteor), "n/a"});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream out;
  const auto emit = [&](const std::vector<std::string>& line) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c > 0) out << " | ";
      if (c < 2) {
        out << line[c] << std::string(width[c] - line[c].size(), ' ');
      } else {
        out << std::string(width[c] - line[c].size(), ' ') << line[c];
      }
    }
    out << '\n';
  };
  emit(cells[0]);
  for (std::size_t c = 0; c < width.size(); ++c) {
    if (c > 0) out << "-+-";
    out << std::string(width[c], '-');
  }
  out << '\n';
  for (std::size_t i = 1; i < cells.size(); ++i) emit(cells[i]);
  return out.str();
}

}  // namespace lmt::metrics
