#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "lmt/corpus.hpp"
#include "run_config.hpp"
#include "support/toy.hpp"

namespace fs = std::filesystem;
using namespace lmt;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome lmt_run(std::vector<std::string> args) {
  args.insert(args.begin(), "lmt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_lines(const fs::path& p) {
  const auto s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// A workspace with a small copy corpus and a config that trains a tiny model.
struct Workspace {
  fs::path dir;

  explicit Workspace(const std::string& name) : dir(fs::temp_directory_path() / "lmt_cli_tests" / name) {
    fs::remove_all(dir);
    fs::create_directories(dir / "data");
    const auto corpus = testing::copy_corpus(24, 3);
    std::ofstream tsv(dir / "data" / "train.tsv");
    for (const auto& p : corpus.pairs) tsv << p.source << '\t' << p.target << '\n';
    std::ofstream valid(dir / "data" / "valid.tsv");
    for (std::size_t i = 0; i < 5; ++i) valid << corpus.pairs[i].source << '\t' << corpus.pairs[i].target << '\n';
    std::ofstream src(dir / "data" / "src.txt");
    for (std::size_t i = 0; i < 6; ++i) src << corpus.pairs[i].source << '\n';
    std::ofstream(dir / "run.ini") << "[paths]\n"
                                      "train = data/train.tsv\n"
                                      "valid = data/valid.tsv\n"
                                      "subword_model = out/subword.model\n"
                                      "output_dir = out\n"
                                      "[subword]\n"
                                      "vocab_size = 120\n"
                                      "[model]\n"
                                      "layers = 1\n"
                                      "heads = 2\n"
                                      "d_model = 16\n"
                                      "d_ff = 32\n"
                                      "max_len = 256\n"
                                      "dropout = 0.0\n"
                                      "[train]\n"
                                      "max_epochs = 2\n"
                                      "batch_size = 8\n"
                                      "[decode]\n"
                                      "max_len = 12\n";
  }

  std::string config() const { return (dir / "run.ini").string(); }
  fs::path out() const { return dir / "out"; }
};

cli::RunConfig snapshot(const fs::path& ini, Preset preset) {
  return cli::resolve(cli::read_ini(ini), ini.parent_path(), preset);
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit with 2") {
    CHECK(lmt_run({}).code == 2);
    CHECK(lmt_run({"frobnicate"}).code == 2);
    CHECK(lmt_run({"--version"}).code == 0);
    CHECK(lmt_run({"--help"}).code == 0);
  }

  TEST_CASE("unknown or malformed keys are configuration errors") {
    Workspace ws("keys");
    auto r = lmt_run({"tokenizer-train", "-c", ws.config(), "--set", "model.layerz=3"});
    CHECK(r.code == 2);
    CHECK(r.err.find("layerz") != std::string::npos);
    CHECK(lmt_run({"tokenizer-train", "-c", ws.config(), "--set", "train.batch_size=many"}).code == 2);
    CHECK(lmt_run({"tokenizer-train", "-c", ws.config(), "--set", "no_section=1"}).code == 2);
    std::ofstream(ws.dir / "top.ini") << "vocab_size = 3\n";
    CHECK(lmt_run({"tokenizer-train", "-c", (ws.dir / "top.ini").string()}).code == 2);
    CHECK(lmt_run({"tokenizer-train", "-c", (ws.dir / "missing.ini").string()}).code == 2);
  }

  TEST_CASE("tokenizer-train writes a deterministic model, stats and snapshot") {
    Workspace ws("tok");
    auto r = lmt_run({"tokenizer-train", "-c", ws.config()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("vocab_size 120") != std::string::npos);
    CHECK(r.out.find("coverage") != std::string::npos);
    const auto model = ws.out() / "subword.model";
    REQUIRE(fs::exists(model));
    CHECK(fs::exists(ws.out() / "tokenizer-train.resolved.ini"));
    const auto first = slurp(model);
    REQUIRE(lmt_run({"tokenizer-train", "-c", ws.config()}).code == 0);
    CHECK(slurp(model) == first);

    auto small = lmt_run({"tokenizer-train", "-c", ws.config(), "--set", "subword.vocab_size=10"});
    CHECK(small.code == 2);
    CHECK(small.err.find("vocab_size") != std::string::npos);
  }

  TEST_CASE("corpus-stats prints split and count") {
    Workspace ws("stats");
    const auto r = lmt_run({"corpus-stats", "-c", ws.config()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("split") != std::string::npos);
    CHECK(r.out.find("train       24") != std::string::npos);
    CHECK(r.out.find("validation  5") != std::string::npos);
  }

  TEST_CASE("train, continue, translate, evaluate and report") {
    Workspace ws("pipeline");
    REQUIRE(lmt_run({"tokenizer-train", "-c", ws.config()}).code == 0);

    auto tr = lmt_run({"train", "-c", ws.config()});
    INFO(tr.err);
    REQUIRE(tr.code == 0);
    CHECK(fs::exists(ws.out() / "checkpoint_epoch0001.mtfg"));
    CHECK(fs::exists(ws.out() / "checkpoint_epoch0002.mtfg"));
    CHECK(fs::exists(ws.out() / "checkpoint_last.mtfg"));
    CHECK(count_lines(ws.out() / "train_log.jsonl") == 2);
    const auto resolved = snapshot(ws.out() / "train.resolved.ini", Preset::scratch);
    CHECK(resolved.model.vocab_size == 120);
    CHECK(resolved.model.num_layers == 1);
    CHECK(resolved.train.max_epochs == 2);
    CHECK(resolved.train_path == fs::absolute(ws.dir / "data" / "train.tsv"));

    const auto ckpt = (ws.out() / "checkpoint_last.mtfg").string();
    CHECK(lmt_run({"continue", "-c", ws.config(), "--set", "paths.output_dir=cont"}).code == 2);
    CHECK(lmt_run({"continue", "-c", ws.config(), "--checkpoint", (ws.dir / "nope.mtfg").string()}).code == 2);
    CHECK(lmt_run({"continue", "-c", ws.config(), "--checkpoint", ckpt, "--set", "model.d_model=32",
                   "paths.output_dir=cont"})
              .code == 2);
    auto cont = lmt_run({"continue", "-c", ws.config(), "--checkpoint", ckpt, "--set", "paths.output_dir=cont",
                         "train.max_epochs=1"});
    INFO(cont.err);
    REQUIRE(cont.code == 0);
    const auto cres = snapshot(ws.dir / "cont" / "continue.resolved.ini", Preset::continued);
    CHECK(cres.train.learning_rate == 2e-5);
    CHECK(cres.train.weight_decay == 0.01);
    CHECK(cres.train.optimizer == OptimizerKind::adamw);
    CHECK(cres.train.max_len == 128);
    CHECK(cres.train.max_epochs == 1);
    CHECK(fs::exists(ws.dir / "cont" / "checkpoint_epoch0001.mtfg"));

    const auto src = (ws.dir / "data" / "src.txt").string();
    const auto greedy = (ws.dir / "hyp_greedy.txt").string();
    const auto beam = (ws.dir / "hyp_beam.txt").string();
    REQUIRE(lmt_run({"translate", "-c", ws.config(), "--checkpoint", ckpt, "-i", src, "-o", greedy, "--strategy",
                     "greedy"})
                .code == 0);
    REQUIRE(lmt_run({"translate", "-c", ws.config(), "--checkpoint", ckpt, "-i", src, "-o", beam, "--strategy", "beam",
                     "--beam-size", "3"})
                .code == 0);
    CHECK(count_lines(greedy) == 6);
    CHECK(count_lines(beam) == 6);
    CHECK(fs::exists(greedy + ".resolved.ini"));
    std::ofstream(ws.dir / "empty.txt").close();
    const auto empty_out = (ws.dir / "empty_out.txt").string();
    CHECK(lmt_run({"translate", "-c", ws.config(), "--checkpoint", ckpt, "-i", (ws.dir / "empty.txt").string(), "-o",
                   empty_out})
              .code == 0);
    CHECK(fs::exists(empty_out));
    CHECK(fs::file_size(empty_out) == 0);

    // A different tokenizer must be refused.
    REQUIRE(lmt_run({"tokenizer-train", "-c", ws.config(), "--set", "subword.vocab_size=110",
                     "paths.subword_model=other/subword.model", "paths.output_dir=other"})
                .code == 0);
    CHECK(lmt_run({"translate", "-c", ws.config(), "--checkpoint", ckpt, "--set",
                   "paths.subword_model=other/subword.model", "-i", src, "-o", greedy})
              .code == 2);

    const auto e1 = lmt_run({"evaluate", "--hyp", src, "--ref", src, "-o", (ws.dir / "ident").string(), "--name",
                             "identity"});
    REQUIRE(e1.code == 0);
    CHECK(e1.out.find("100.00") != std::string::npos);
    CHECK(e1.out.find("0.00") != std::string::npos);
    CHECK(fs::exists(ws.dir / "ident.json"));
    CHECK(fs::exists(ws.dir / "ident.txt"));
    CHECK(fs::exists(ws.dir / "ident.resolved.ini"));
    const auto e2 = lmt_run({"evaluate", "--hyp", greedy, "--ref", src, "-o", (ws.dir / "model").string(), "--name",
                             "toy", "--fine-tuned"});
    REQUIRE(e2.code == 0);

    const auto mis = lmt_run({"evaluate", "--hyp", (ws.dir / "data" / "valid.tsv").string(), "--ref", src, "-o",
                              (ws.dir / "bad").string()});
    CHECK(mis.code == 1);
    CHECK(mis.err.find('5') != std::string::npos);
    CHECK(mis.err.find('6') != std::string::npos);

    const auto rep = lmt_run({"report", (ws.dir / "model.json").string(), (ws.dir / "ident.json").string(), "-o",
                              (ws.dir / "table.txt").string()});
    REQUIRE(rep.code == 0);
    CHECK(rep.out.find("toy") < rep.out.find("identity"));
    CHECK(rep.out.find("BLEU") < rep.out.find("chrF++"));
    CHECK(rep.out.find("ROUGE-L") < rep.out.find("METEOR"));
    CHECK(slurp(ws.dir / "table.txt") == rep.out);
  }

  TEST_CASE("a diverging run exits 1 and keeps the last good checkpoint") {
    Workspace ws("diverge");
    REQUIRE(lmt_run({"tokenizer-train", "-c", ws.config()}).code == 0);
    const auto r = lmt_run({"train", "-c", ws.config(), "--set", "train.learning_rate=1e30", "train.grad_clip_norm=0",
                            "train.batch_size=32", "train.max_epochs=5"});
    CHECK(r.code == 1);
    CHECK(r.err.find("non-finite") != std::string::npos);
    CHECK(fs::exists(ws.out() / "checkpoint_epoch0001.mtfg"));
    CHECK(load_checkpoint(ws.out() / "checkpoint_last.mtfg").meta.epochs_completed >= 1);
  }

  TEST_CASE("dry runs snapshot the presets") {
    Workspace ws("dry");
    const auto out = (ws.dir / "dry").string();
    REQUIRE(lmt_run({"train", "--dry-run", "--set", "paths.output_dir=" + out}).code == 0);
    const auto s = snapshot(fs::path(out) / "train.resolved.ini", Preset::scratch);
    CHECK(s.model.num_layers == 4);
    CHECK(s.model.num_heads == 8);
    CHECK(s.model.d_model == 128);
    CHECK(s.model.vocab_size == 32000);
    CHECK(s.train.batch_size == 32);
    REQUIRE(lmt_run({"continue", "--dry-run", "--set", "paths.output_dir=" + out}).code == 0);
    const auto c = snapshot(fs::path(out) / "continue.resolved.ini", Preset::continued);
    CHECK(c.train.max_len == 128);
    CHECK(c.train.weight_decay == 0.01);
    CHECK(lmt_run({"train", "--dry-run", "--set", "paths.output_dir=" + out, "train.preset=continued"}).code == 2);
  }

  TEST_CASE("ini snapshot round trips") {
    cli::RawSettings raw{{"train.preset", "continued"}, {"decode.strategy", "greedy"}, {"run.seed", "9"}};
    const auto cfg = cli::resolve(raw, fs::temp_directory_path(), Preset::scratch);
    const auto path = fs::temp_directory_path() / "lmt_cli_tests" / "round.ini";
    fs::create_directories(path.parent_path());
    cli::write_snapshot(cfg, path);
    const auto back = snapshot(path, Preset::scratch);
    CHECK(cli::to_ini(back) == cli::to_ini(cfg));
    CHECK(back.train.seed == 9);
    CHECK(back.decode.strategy == DecodeStrategy::greedy);
  }
}
