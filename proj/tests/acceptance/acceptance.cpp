// Acceptance checks: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "commands.hpp"
#include "lmt/checkpoint.hpp"
#include "lmt/decode.hpp"
#include "lmt/metrics.hpp"
#include "lmt/train.hpp"
#include "run_config.hpp"
#include "support/metric_cases.hpp"
#include "support/op_gradients.hpp"
#include "support/ter_oracle.hpp"
#include "support/toy.hpp"

namespace fs = std::filesystem;
using namespace lmt;
using namespace lmt::testing;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "lmt_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int cli_run(std::vector<std::string> args) {
  args.insert(args.begin(), "lmt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

Verdict gradients() {
  Verdict v;
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0;
  for (const auto& [name, r] : check_all_op_gradients()) {
    checked += r.checked;
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = name;
    }
    v.require(r.checked > 0 && r.max_rel_error < 1e-4, name);
  }
  const double secs = seconds_since(t0);
  v.require(secs < 120.0, "runtime");
  v.detail << std::setprecision(3) << checked << " elements, max rel err " << worst << " (" << worst_name << "), "
           << secs << " s";
  return v;
}

Verdict golden() {
  Verdict v;
  const auto r = metrics::evaluate(golden_pairs());
  const GoldenCorpusScores g;
  const std::pair<const char*, std::pair<double, double>> rows[] = {
      {"bleu", {r.bleu, g.bleu}},       {"chrf_pp", {r.chrf_pp, g.chrf_pp}}, {"ter", {r.ter, g.ter}},
      {"rouge1", {r.rouge1, g.rouge1}}, {"rouge2", {r.rouge2, g.rouge2}},    {"rougeL", {r.rougeL, g.rougeL}},
      {"meteor", {r.meteor, g.meteor}}};
  double worst = 0.0;
  for (const auto& [name, vals] : rows) {
    const double diff = std::abs(vals.first - vals.second);
    worst = std::max(worst, diff);
    v.require(diff <= 0.01, name);
  }
  v.detail << std::fixed << std::setprecision(4) << "BLEU " << r.bleu << " chrF++ " << r.chrf_pp << " TER " << r.ter
           << " R1 " << r.rouge1 << " R2 " << r.rouge2 << " RL " << r.rougeL << " METEOR " << r.meteor
           << "; max |diff| " << std::scientific << std::setprecision(2) << worst;
  return v;
}

Verdict identity() {
  Verdict v;
  static const std::vector<std::string> vocab{"the", "court", "appeal", "अदालत", "ने", "अपील", "है", "।", ",", "is", "x"};
  Rng rng(2024);
  for (std::size_t n : {1, 10, 100}) {
    std::vector<metrics::EvalPair> pairs;
    std::size_t tokens = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::string s;
      const std::size_t len = 3 + rng.below(10);
      for (std::size_t k = 0; k < len; ++k) s += (k ? " " : "") + vocab[rng.below(vocab.size())];
      tokens += metrics::mt_tokenize(s).size();
      pairs.push_back({s, s});
    }
    const auto r = metrics::evaluate(pairs);
    const double expected_meteor = 1.0 - 0.5 * std::pow(double(n) / double(tokens), 3.0);
    const std::string tag = "n=" + std::to_string(n);
    v.require(r.bleu == 100.0, tag + " bleu");
    v.require(r.chrf_pp == 100.0, tag + " chrf");
    v.require(r.ter == 0.0, tag + " ter");
    v.require(r.rouge1 == 1.0 && r.rouge2 == 1.0 && r.rougeL == 1.0, tag + " rouge");
    v.require(std::abs(r.meteor - expected_meteor) <= 1e-9, tag + " meteor");
    v.detail << tag << " METEOR " << std::setprecision(10) << r.meteor << " vs " << expected_meteor << "; ";
  }
  return v;
}

Verdict bounds_and_order() {
  Verdict v;
  Rng rng(99);
  std::size_t out_of_range = 0, order_changes = 0;
  for (int i = 0; i < 1000; ++i) {
    auto pairs = random_corpus(rng);
    const auto a = metrics::evaluate(pairs);
    const bool in_range = a.bleu >= 0 && a.bleu <= 100 && a.chrf_pp >= 0 && a.chrf_pp <= 100 && a.ter >= 0 &&
                          a.rouge1 >= 0 && a.rouge1 <= 1 && a.rouge2 >= 0 && a.rouge2 <= 1 && a.rougeL >= 0 &&
                          a.rougeL <= 1 && a.meteor >= 0 && a.meteor <= 1;
    out_of_range += !in_range;
    rng.shuffle(std::span<metrics::EvalPair>(pairs));
    const auto b = metrics::evaluate(pairs);
    const bool same = a.bleu == b.bleu && a.chrf_pp == b.chrf_pp && a.ter == b.ter && a.rouge1 == b.rouge1 &&
                      a.rouge2 == b.rouge2 && a.rougeL == b.rougeL && a.meteor == b.meteor;
    order_changes += !same;
  }
  v.require(out_of_range == 0, "bounds");
  v.require(order_changes == 0, "order invariance");
  v.detail << "1000 corpora, " << out_of_range << " out of range, " << order_changes << " order-dependent";
  return v;
}

Verdict ter_oracle() {
  Verdict v;
  std::vector<std::vector<int>> all{{}};
  for (std::size_t len = 1; len <= 6; ++len) {
    std::vector<std::vector<int>> grown;
    for (const auto& s : all) {
      if (s.size() != len - 1) continue;
      for (int c = 0; c < 3; ++c) {
        auto t = s;
        t.push_back(c);
        grown.push_back(std::move(t));
      }
    }
    all.insert(all.end(), grown.begin(), grown.end());
  }
  const auto words = [](const std::vector<int>& s) {
    std::vector<std::string> w;
    for (int c : s) w.emplace_back(1, static_cast<char>('a' + c));
    return w;
  };
  std::size_t pairs = 0, violations = 0, improved = 0;
  for (const auto& ref : all) {
    if (ref.empty()) continue;
    const auto rw = words(ref);
    for (const auto& hyp : all) {
      const auto res = metrics::ter_tokens(words(hyp), rw);
      const auto lev = edit_distance_oracle(hyp, ref);
      ++pairs;
      violations += res.edits > lev;
      improved += res.edits < lev;
    }
  }
  v.require(violations == 0, "TER above Levenshtein");

  std::size_t curated = 0, mismatches = 0;
  for (const auto& [h, r] : curated_shift_cases()) {
    const auto hw = metrics::mt_tokenize(h), rw = metrics::mt_tokenize(r);
    std::map<std::string, int> ids;
    const auto sym = [&](const std::vector<std::string>& w) {
      std::vector<int> out;
      for (const auto& t : w) out.push_back(ids.emplace(t, static_cast<int>(ids.size())).first->second);
      return out;
    };
    const auto hs = sym(hw), rs = sym(rw);
    ++curated;
    if (metrics::ter_tokens(hw, rw).edits != exhaustive_ter_edits(hs, rs, 3)) {
      ++mismatches;
      v.detail << "mismatch on '" << h << "'; ";
    }
  }
  v.require(mismatches == 0, "curated oracle");
  v.detail << pairs << " pairs, " << violations << " above Levenshtein, " << improved << " improved by shifts; "
           << curated - mismatches << "/" << curated << " curated cases equal the exhaustive oracle";
  return v;
}

struct ToyRun {
  std::vector<EpochRecord> history;
  std::size_t exact = 0;
  std::size_t total = 0;
  std::size_t vocab = 0;
  double seconds = 0.0;
};

ToyRun run_toy() {
  ToyRun run;
  const auto t0 = Clock::now();
  const auto corpus = copy_corpus(64);
  const auto sp = toy_subword(corpus);
  run.vocab = sp.vocab_size();
  TransformerModel<float> model(toy_model_config(sp.vocab_size()), 1);
  run.history = train(model, sp, corpus, nullptr, toy_train_config(300));
  std::vector<std::string> sources;
  for (const auto& p : corpus.pairs) sources.push_back(p.source);
  const DecodeConfig greedy{DecodeStrategy::greedy, 1, 0.6, std::nullopt};
  const auto out = translate_corpus(model, sp, sources, greedy);
  for (std::size_t i = 0; i < corpus.size(); ++i) run.exact += out.lines[i] == corpus.pairs[i].target;
  run.total = corpus.size();
  run.seconds = seconds_since(t0);
  return run;
}

Verdict toy_overfit(const ToyRun& run) {
  Verdict v;
  double best = 1e300;
  std::size_t first_below = 0;
  for (const auto& r : run.history) {
    if (r.train_loss < 0.5 && first_below == 0) first_below = r.epoch + 1;
    best = std::min(best, r.train_loss);
  }
  const double rate = double(run.exact) / double(run.total);
  v.require(run.vocab == 200, "vocab 200");
  v.require(run.history.size() == 300 && best < 0.5, "loss below 0.5");
  v.require(rate >= 0.95, "95% exact");
  v.require(run.seconds < 600.0, "runtime");
  v.detail << std::setprecision(4) << "vocab " << run.vocab << ", final loss " << run.history.back().train_loss
           << " (below 0.5 from epoch " << first_below << "), exact " << run.exact << "/" << run.total << ", "
           << std::setprecision(3) << run.seconds << " s";
  return v;
}

Verdict initial_loss() {
  Verdict v;
  {
    const auto corpus = copy_corpus(64);
    const auto sp = toy_subword(corpus);
    const TransformerModel<float> model(toy_model_config(sp.vocab_size()), 1);
    const auto batches = make_batches(corpus, sp, 32, 64);
    const double loss = batch_loss(model, batches[0], 0.0, false, nullptr).item();
    const double target = std::log(double(sp.vocab_size()));
    v.require(std::abs(loss - target) <= 0.2, "toy");
    v.detail << std::setprecision(5) << "toy V=" << sp.vocab_size() << " loss " << loss << " vs ln V " << target << "; ";
  }
  {
    ModelConfig cfg;
    cfg.label_smoothing = 0.0;
    const TransformerModel<float> model(cfg, 1);
    Rng rng(5);
    std::vector<TokenSequence> src, tgt;
    for (int i = 0; i < 8; ++i) {
      TokenSequence s{SubwordModel::kBos}, t{SubwordModel::kBos};
      for (int k = 0; k < 20; ++k) s.push_back(static_cast<TokenId>(4 + rng.below(cfg.vocab_size - 4)));
      for (int k = 0; k < 20; ++k) t.push_back(static_cast<TokenId>(4 + rng.below(cfg.vocab_size - 4)));
      s.push_back(SubwordModel::kEos);
      t.push_back(SubwordModel::kEos);
      src.push_back(s);
      tgt.push_back(t);
    }
    Batch b;
    b.source = pad_rows(src);
    b.target = pad_rows(tgt);
    b.source_mask = b.source.mask();
    b.target_mask = b.target.mask();
    const double loss = batch_loss(model, b, 0.0, false, nullptr).item();
    const double target = std::log(double(cfg.vocab_size));
    v.require(std::abs(loss - target) <= 0.2, "full");
    v.detail << "full V=" << cfg.vocab_size << " loss " << loss << " vs ln V " << target;
  }
  return v;
}

Verdict decoding() {
  Verdict v;
  const TransformerModel<float> model(tiny_model_config(13), 31);
  Rng rng(8);
  std::size_t equal = 0;
  const DecodeConfig g{DecodeStrategy::greedy, 1, 0.6, std::nullopt};
  const DecodeConfig b{DecodeStrategy::beam, 1, 0.6, std::nullopt};
  for (int i = 0; i < 100; ++i) {
    TokenSequence src{SubwordModel::kBos};
    const std::size_t n = 1 + rng.below(12);
    for (std::size_t k = 0; k < n; ++k) src.push_back(static_cast<TokenId>(4 + rng.below(9)));
    src.push_back(SubwordModel::kEos);
    const auto gh = greedy_decode(model, src, g);
    const auto bh = beam_search(model, src, b);
    equal += bh.size() == 1 && bh[0].ids == gh.ids;
  }
  v.require(equal == 100, "beam 1 == greedy");

  HandWiredScorer scorer;
  std::size_t checked = 0, mismatched = 0;
  for (double alpha : {0.0, 0.6, 1.0}) {
    auto all = enumerate_sequences(scorer, 3);
    const auto score = [&](const EnumeratedHypothesis& h) {
      return h.log_prob / std::pow(double(std::max<std::size_t>(h.ids.size(), 1)), alpha);
    };
    std::stable_sort(all.begin(), all.end(), [&](const auto& x, const auto& y) {
      return score(x) != score(y) ? score(x) > score(y) : x.ids < y.ids;
    });
    const auto beams = beam_search(scorer, all.size(), alpha, 3);
    mismatched += beams.size() != all.size();
    for (std::size_t i = 0; i < std::min(beams.size(), all.size()); ++i) {
      ++checked;
      mismatched += beams[i].ids != all[i].ids || std::abs(beams[i].log_prob - all[i].log_prob) > 1e-12;
    }
  }
  v.require(mismatched == 0, "enumeration");
  v.detail << equal << "/100 beam-1 outputs equal greedy; " << checked << " ranked hypotheses vs enumeration, "
           << mismatched << " mismatches";
  return v;
}

Verdict determinism() {
  Verdict v;
  const auto corpus = copy_corpus(32, 11);
  std::vector<fs::path> dirs;
  for (int run = 0; run < 2; ++run) {
    const auto dir = scratch_dir("determinism" + std::to_string(run));
    std::ofstream tsv(dir / "train.tsv");
    for (const auto& p : corpus.pairs) tsv << p.source << '\t' << p.target << '\n';
    tsv.close();
    std::ofstream(dir / "run.ini") << "[paths]\ntrain = train.tsv\nsubword_model = subword.model\noutput_dir = out\n"
                                      "[subword]\nvocab_size = 150\n"
                                      "[model]\nlayers = 2\nheads = 4\nd_model = 32\nd_ff = 64\n"
                                      "[train]\nmax_epochs = 2\nbatch_size = 8\n";
    const auto cfg = (dir / "run.ini").string();
    v.require(cli_run({"tokenizer-train", "-c", cfg}) == 0, "tokenizer-train");
    v.require(cli_run({"train", "-c", cfg}) == 0, "train");
    dirs.push_back(dir);
  }
  const bool tok_same = slurp(dirs[0] / "subword.model") == slurp(dirs[1] / "subword.model");
  const bool ckpt_same = slurp(dirs[0] / "out" / "checkpoint_last.mtfg") == slurp(dirs[1] / "out" / "checkpoint_last.mtfg");
  const bool ckpt_nonempty = fs::exists(dirs[0] / "out" / "checkpoint_last.mtfg");
  v.require(tok_same, "tokenizer bytes");
  v.require(ckpt_same && ckpt_nonempty, "checkpoint bytes");

  // Save after 2 of 4 epochs, reload, and compare the remaining losses.
  const auto sp = toy_subword(corpus, 150);
  auto mc = toy_model_config(sp.vocab_size());
  mc.dropout = 0.1;
  auto tc = toy_train_config(4);
  tc.batch_size = 8;
  TransformerModel<float> straight(mc, 5);
  const auto full = train(straight, sp, corpus, nullptr, tc);
  const auto dir = scratch_dir("resume");
  TransformerModel<float> first(mc, 5);
  auto half = tc;
  half.max_epochs = 2;
  train(first, sp, corpus, nullptr, half, [&](const EpochRecord&, const Trainer& t) {
    save_checkpoint(dir / "mid.mtfg", t.model(), t.optim_state(), t.checkpoint_meta());
  });
  auto loaded = load_checkpoint(dir / "mid.mtfg");
  Trainer resumed(loaded.model, sp, tc);
  resumed.resume(loaded.optim, loaded.meta.epochs_completed);
  const auto rest = resumed.run(corpus);
  bool same_losses = rest.size() == 2;
  for (std::size_t i = 0; same_losses && i < 2; ++i) same_losses = rest[i].train_loss == full[i + 2].train_loss;
  v.require(same_losses, "resumed loss sequence");
  v.detail << "tokenizer files " << (tok_same ? "identical" : "differ") << ", checkpoint files "
           << (ckpt_same ? "identical" : "differ") << ", resumed losses " << (same_losses ? "identical" : "differ");
  return v;
}

Verdict preset_fidelity() {
  Verdict v;
  const auto dir = scratch_dir("presets");
  v.require(cli_run({"train", "--dry-run", "--set", "paths.output_dir=" + dir.string()}) == 0, "train dry run");
  v.require(cli_run({"continue", "--dry-run", "--set", "paths.output_dir=" + dir.string()}) == 0, "continue dry run");
  const auto load = [&](const fs::path& p, Preset preset) { return cli::resolve(cli::read_ini(p), dir, preset); };
  const auto s = load(dir / "train.resolved.ini", Preset::scratch);
  const auto c = load(dir / "continue.resolved.ini", Preset::continued);
  v.require(c.train.preset == Preset::continued && c.train.learning_rate == 2e-5 && c.train.weight_decay == 0.01 &&
                c.train.batch_size == 32 && c.train.max_len == 128,
            "continued");
  v.require(s.train.preset == Preset::scratch && s.model.num_layers == 4 && s.model.num_heads == 8 &&
                s.model.d_model == 128 && s.model.dropout == 0.1 && s.model.max_len == 256 &&
                s.model.vocab_size == 32000 && s.train.batch_size == 32,
            "scratch");
  v.detail << "continued: lr " << c.train.learning_rate << " wd " << c.train.weight_decay << " batch "
           << c.train.batch_size << " max_len " << c.train.max_len << "; scratch: layers " << s.model.num_layers
           << " heads " << s.model.num_heads << " d_model " << s.model.d_model << " dropout " << s.model.dropout
           << " max_len " << s.model.max_len << " vocab " << s.model.vocab_size << " batch " << s.train.batch_size;
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gradient correctness", gradients},
      {"metric golden suite", golden},
      {"identity suite", identity},
      {"metric bounds and order invariance", bounds_and_order},
      {"TER oracle", ter_oracle},
      {"toy overfit", [] { return toy_overfit(run_toy()); }},
      {"initial loss", initial_loss},
      {"decoding equivalences", decoding},
      {"determinism and checkpointing", determinism},
      {"preset fidelity", preset_fidelity},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << "exception: " << e.what();
    }
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << name << ": " << v.detail.str() << std::endl;
    failures += !v.pass;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
