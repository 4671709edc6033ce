#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "lmt/checkpoint.hpp"
#include "lmt/error.hpp"
#include "lmt/metrics.hpp"

namespace lmt::cli {

namespace fs = std::filesystem;

RunConfig load_run_config(const ConfigSource& source, Preset default_preset) {
  RawSettings raw;
  fs::path base = fs::current_path();
  if (!source.file.empty()) {
    raw = read_ini(source.file);
    base = fs::absolute(source.file).parent_path();
  }
  for (const auto& o : source.overrides) {
    auto [key, value] = parse_override(o);
    raw[key] = value;
  }
  return resolve(raw, base, default_preset);
}

namespace {

void require_set(const fs::path& p, const std::string& key) {
  if (p.empty()) throw ConfigError(key + " is required");
}

void require_file(const fs::path& p, const std::string& key) {
  require_set(p, key);
  if (!fs::is_regular_file(p)) throw ConfigError(key + " does not exist: " + p.string());
}

ParallelCorpus load_corpus(const RunConfig& cfg, const fs::path& path, Split split, std::ostream& out) {
  LoadOptions opts;
  opts.format = cfg.format.value_or(format_for_path(path));
  opts.policy = cfg.policy;
  opts.split = split;
  auto result = load_parallel(path, opts);
  if (result.dropped > 0) out << "dropped " << result.dropped << " malformed lines from " << path.string() << "\n";
  if (result.corpus.empty()) throw Error("corpus " + path.string() + " has no usable pairs");
  return std::move(result.corpus);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot write " + tmp.string());
    f << text;
    if (!f) throw IoError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string epoch_name(std::size_t epoch) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "checkpoint_epoch%04zu.mtfg", epoch);
  return buf;
}

// Writes a checkpoint and a JSON log line after every epoch.
Trainer::EpochCallback checkpoint_writer(const fs::path& dir, std::ostream& out) {
  return [dir, &out](const EpochRecord& record, const Trainer& trainer) {
    const fs::path ckpt = dir / epoch_name(record.epoch + 1);
    save_checkpoint(ckpt, trainer.model(), trainer.optim_state(), trainer.checkpoint_meta());
    save_checkpoint(dir / "checkpoint_last.mtfg", trainer.model(), trainer.optim_state(), trainer.checkpoint_meta());
    std::ofstream log(dir / "train_log.jsonl", std::ios::app | std::ios::binary);
    log << record.to_json().dump() << "\n";
    if (!log) throw IoError("cannot append to " + (dir / "train_log.jsonl").string());
    out << "epoch " << record.epoch + 1 << " step " << record.step << " train_loss " << record.train_loss;
    if (record.valid_loss) out << " valid_loss " << *record.valid_loss;
    out << " lr " << record.lr << "\n";
  };
}

}  // namespace

void cmd_corpus_stats(const RunConfig& cfg, std::ostream& out) {
  std::vector<std::pair<Split, fs::path>> splits;
  if (!cfg.train_path.empty()) splits.emplace_back(Split::train, cfg.train_path);
  if (!cfg.valid_path.empty()) splits.emplace_back(Split::validation, cfg.valid_path);
  if (!cfg.test_path.empty()) splits.emplace_back(Split::test, cfg.test_path);
  if (splits.empty()) throw ConfigError("corpus-stats needs at least one of paths.train, paths.valid, paths.test");
  std::vector<std::pair<std::string, std::string>> rows{{"split", "pairs"}};
  for (const auto& [split, path] : splits) {
    require_file(path, "paths." + std::string(to_string(split)));
    LoadOptions opts;
    opts.format = cfg.format.value_or(format_for_path(path));
    opts.policy = cfg.policy;
    opts.split = split;
    const auto result = load_parallel(path, opts);
    rows.emplace_back(std::string(to_string(split)), std::to_string(result.corpus.size()));
    if (result.dropped > 0) out << "dropped " << result.dropped << " malformed lines from " << path.string() << "\n";
  }
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.first.size());
  for (const auto& [name, count] : rows) out << name << std::string(width - name.size() + 2, ' ') << count << "\n";
}

void cmd_tokenizer_train(const RunConfig& cfg, std::ostream& out) {
  require_file(cfg.train_path, "paths.train");
  require_set(cfg.subword_model_path, "paths.subword_model");
  const auto corpus = load_corpus(cfg, cfg.train_path, Split::train, out);
  std::vector<std::string> texts;
  texts.reserve(2 * corpus.size());
  for (const auto& p : corpus.pairs) texts.push_back(p.source);
  for (const auto& p : corpus.pairs) texts.push_back(p.target);
  const auto model = SubwordModel::train(texts, cfg.subword_vocab_size);
  if (cfg.subword_model_path.has_parent_path()) fs::create_directories(cfg.subword_model_path.parent_path());
  model.save(cfg.subword_model_path);

  const ParallelCorpus* probe = &corpus;
  ParallelCorpus valid;
  if (!cfg.valid_path.empty()) {
    valid = load_corpus(cfg, cfg.valid_path, Split::validation, out);
    probe = &valid;
  }
  std::size_t tokens = 0, unknown = 0;
  for (const auto& p : probe->pairs) {
    for (const auto* text : {&p.source, &p.target}) {
      for (TokenId id : model.encode(*text)) {
        ++tokens;
        unknown += id == SubwordModel::kUnk;
      }
    }
  }
  const double coverage = tokens ? 1.0 - static_cast<double>(unknown) / static_cast<double>(tokens) : 1.0;
  out << "vocab_size " << model.vocab_size() << " (base " << model.base_size() << ", merges "
      << model.merges().size() << ")\n";
  out << "coverage " << coverage << " on " << (probe == &valid ? "validation" : "training") << " text (" << unknown
      << " unk of " << tokens << " tokens)\n";
  out << "hash " << model.content_hash() << "\n";
  const fs::path dir = cfg.output_dir.empty() ? cfg.subword_model_path.parent_path() : cfg.output_dir;
  write_snapshot(cfg, dir / "tokenizer-train.resolved.ini");
}

void cmd_train(RunConfig cfg, std::ostream& out, bool dry_run) {
  if (cfg.train.preset != Preset::scratch) throw ConfigError("train requires train.preset = scratch; use continue");
  if (dry_run) {
    require_set(cfg.output_dir, "paths.output_dir");
    if (!cfg.model_vocab_explicit && fs::is_regular_file(cfg.subword_model_path)) {
      cfg.model.vocab_size = SubwordModel::load(cfg.subword_model_path).vocab_size();
    }
    fs::create_directories(cfg.output_dir);
    write_snapshot(cfg, cfg.output_dir / "train.resolved.ini");
    out << "resolved configuration written to " << (cfg.output_dir / "train.resolved.ini").string() << "\n";
    return;
  }
  require_file(cfg.train_path, "paths.train");
  require_file(cfg.subword_model_path, "paths.subword_model");
  require_set(cfg.output_dir, "paths.output_dir");
  const auto subword = SubwordModel::load(cfg.subword_model_path);
  if (!cfg.model_vocab_explicit) cfg.model.vocab_size = subword.vocab_size();
  if (cfg.model.vocab_size != subword.vocab_size()) {
    throw ConfigError("model.vocab_size " + std::to_string(cfg.model.vocab_size) + " does not match the subword model (" +
                      std::to_string(subword.vocab_size()) + ")");
  }
  if (cfg.train.max_len > cfg.model.max_len) throw ConfigError("train.max_len exceeds model.max_len");
  fs::create_directories(cfg.output_dir);
  write_snapshot(cfg, cfg.output_dir / "train.resolved.ini");

  const auto corpus = load_corpus(cfg, cfg.train_path, Split::train, out);
  ParallelCorpus valid;
  if (!cfg.valid_path.empty()) valid = load_corpus(cfg, cfg.valid_path, Split::validation, out);
  TransformerModel<float> model(cfg.model, cfg.train.seed);
  out << "parameters " << count_parameters(cfg.model) << "\n";
  train(model, subword, corpus, valid.empty() ? nullptr : &valid, cfg.train, checkpoint_writer(cfg.output_dir, out));
}

void cmd_continue(RunConfig cfg, std::ostream& out, bool dry_run) {
  if (cfg.train.preset != Preset::continued) throw ConfigError("continue requires train.preset = continued");
  if (dry_run) {
    require_set(cfg.output_dir, "paths.output_dir");
    fs::create_directories(cfg.output_dir);
    write_snapshot(cfg, cfg.output_dir / "continue.resolved.ini");
    out << "resolved configuration written to " << (cfg.output_dir / "continue.resolved.ini").string() << "\n";
    return;
  }
  require_file(cfg.checkpoint_path, "checkpoint");
  require_file(cfg.train_path, "paths.train");
  require_file(cfg.subword_model_path, "paths.subword_model");
  require_set(cfg.output_dir, "paths.output_dir");
  auto loaded = load_checkpoint(cfg.checkpoint_path);
  const auto subword = SubwordModel::load(cfg.subword_model_path);
  if (loaded.meta.subword_hash != subword.content_hash()) {
    throw ConfigError("subword model " + cfg.subword_model_path.string() + " (hash " + subword.content_hash() +
                      ") does not match the checkpoint (hash " + loaded.meta.subword_hash + ")");
  }
  ModelConfig requested = loaded.model.config();
  apply_model_keys(cfg.raw, requested);
  if (!(requested == loaded.model.config())) {
    throw ConfigError("model settings are fixed by the checkpoint; remove the [model] overrides");
  }
  cfg.model = loaded.model.config();
  cfg.model_vocab_explicit = true;
  if (cfg.train.max_len > cfg.model.max_len) throw ConfigError("train.max_len exceeds the checkpoint's max_len");
  fs::create_directories(cfg.output_dir);
  write_snapshot(cfg, cfg.output_dir / "continue.resolved.ini");
  const auto corpus = load_corpus(cfg, cfg.train_path, Split::train, out);
  continue_training(loaded, subword, corpus, cfg.train, checkpoint_writer(cfg.output_dir, out));
}

void cmd_translate(RunConfig cfg, const fs::path& input, const fs::path& output, std::ostream& out) {
  require_file(cfg.checkpoint_path, "checkpoint");
  require_file(cfg.subword_model_path, "paths.subword_model");
  require_file(input, "input");
  require_set(output, "output");
  auto loaded = load_checkpoint(cfg.checkpoint_path);
  const auto subword = SubwordModel::load(cfg.subword_model_path);
  if (loaded.meta.subword_hash != subword.content_hash()) {
    throw ConfigError("subword model hash " + subword.content_hash() + " does not match checkpoint hash " +
                      loaded.meta.subword_hash);
  }
  cfg.model = loaded.model.config();
  cfg.model_vocab_explicit = true;
  const auto sentences = read_lines(input);
  const auto result = translate_corpus(loaded.model, subword, sentences, cfg.decode, cfg.threads);
  std::string text;
  for (const auto& line : result.lines) {
    text += line;
    text += '\n';
  }
  write_text(output, text);
  write_snapshot(cfg, fs::path(output.string() + ".resolved.ini"));
  out << "translated " << sentences.size() << " lines with " << to_string(cfg.decode.strategy);
  if (cfg.decode.strategy == DecodeStrategy::beam) out << " (beam " << cfg.decode.beam_size << ")";
  out << "\n";
  if (result.failures > 0) out << "warning: " << result.failures << " sentences failed and were left empty\n";
}

void cmd_evaluate(const RunConfig& cfg, const EvaluateArgs& args, std::ostream& out) {
  require_file(args.hypothesis, "hypothesis file");
  require_file(args.reference, "reference file");
  require_set(args.output, "output");
  metrics::EvalOptions opts;
  opts.per_sentence = args.per_sentence;
  auto report = metrics::evaluate_files(args.hypothesis, args.reference, opts);
  report.metadata["model_name"] = args.model_name;
  report.metadata["fine_tuned"] = args.fine_tuned;
  fs::path stem = args.output;
  if (stem.extension() == ".json" || stem.extension() == ".txt") stem.replace_extension();
  const std::string table =
      metrics::render_table({{args.model_name, args.fine_tuned ? "yes" : "no", report}});
  write_text(stem.string() + ".json", report.to_json().dump(2) + "\n");
  write_text(stem.string() + ".txt", table);
  write_snapshot(cfg, stem.string() + ".resolved.ini");
  for (const auto& w : report.warnings) out << "warning: " << w << "\n";
  out << table;
}

void cmd_report(const std::vector<fs::path>& reports, const fs::path& output, std::ostream& out) {
  if (reports.empty()) throw ConfigError("report needs at least one report JSON file");
  std::vector<metrics::TableRow> rows;
  for (const auto& path : reports) {
    require_file(path, "report");
    std::ifstream in(path, std::ios::binary);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error("cannot parse report " + path.string() + ": " + e.what());
    }
    auto report = metrics::EvalReport::from_json(j);
    std::string name = report.metadata.value("model_name", path.stem().string());
    const bool tuned = report.metadata.value("fine_tuned", false);
    rows.push_back({std::move(name), tuned ? "yes" : "no", std::move(report)});
  }
  const std::string table = metrics::render_table(rows);
  if (!output.empty()) write_text(output, table);
  out << table;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Legal machine translation workbench"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "lmt 0.1.0");

  ConfigSource source;
  const auto add_config = [&source](CLI::App* cmd) {
    cmd->add_option("-c,--config", source.file, "INI configuration file");
    cmd->add_option("--set", source.overrides, "Override a setting, e.g. --set train.max_epochs=3")
        ->allow_extra_args(true);
  };

  auto* stats = app.add_subcommand("corpus-stats", "Print the pair count of each configured corpus split");
  add_config(stats);

  auto* tok = app.add_subcommand("tokenizer-train", "Train the subword model on source and target text");
  add_config(tok);

  bool dry_run = false;
  auto* tr = app.add_subcommand("train", "Train a model from scratch");
  add_config(tr);
  tr->add_flag("--dry-run", dry_run, "Resolve and snapshot the configuration without training");

  std::string checkpoint;
  auto* cont = app.add_subcommand("continue", "Continue training a checkpoint with the continued preset");
  add_config(cont);
  cont->add_option("--checkpoint", checkpoint, "Checkpoint to continue from");
  cont->add_flag("--dry-run", dry_run, "Resolve and snapshot the configuration without training");

  std::string input, output, strategy;
  std::size_t beam_size = 0;
  auto* tl = app.add_subcommand("translate", "Translate a file line by line");
  add_config(tl);
  tl->add_option("--checkpoint", checkpoint, "Model checkpoint");
  tl->add_option("-i,--input", input, "Source text, one sentence per line")->required();
  tl->add_option("-o,--output", output, "Hypothesis file to write")->required();
  tl->add_option("--strategy", strategy, "greedy or beam")->check(CLI::IsMember({"greedy", "beam"}));
  tl->add_option("--beam-size", beam_size, "Beam width");

  EvaluateArgs eval;
  auto* ev = app.add_subcommand("evaluate", "Score a hypothesis file against references");
  add_config(ev);
  ev->add_option("--hyp", eval.hypothesis, "Hypothesis file")->required();
  ev->add_option("--ref", eval.reference, "Reference file")->required();
  ev->add_option("-o,--output", eval.output, "Output prefix for the .json and .txt reports")->required();
  ev->add_option("--name", eval.model_name, "Model name for the table row");
  ev->add_flag("--fine-tuned", eval.fine_tuned, "Mark the row as fine-tuned");
  ev->add_flag("--per-sentence", eval.per_sentence, "Include per-sentence scores");

  std::vector<std::string> report_files;
  std::string report_output;
  auto* rp = app.add_subcommand("report", "Render a comparison table from report JSON files");
  rp->add_option("reports", report_files, "Report JSON files")->required();
  rp->add_option("-o,--output", report_output, "Table file to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    if (stats->parsed()) {
      cmd_corpus_stats(load_run_config(source, Preset::scratch), out);
    } else if (tok->parsed()) {
      cmd_tokenizer_train(load_run_config(source, Preset::scratch), out);
    } else if (tr->parsed()) {
      cmd_train(load_run_config(source, Preset::scratch), out, dry_run);
    } else if (cont->parsed()) {
      auto cfg = load_run_config(source, Preset::continued);
      if (!checkpoint.empty()) cfg.checkpoint_path = fs::absolute(checkpoint);
      cmd_continue(std::move(cfg), out, dry_run);
    } else if (tl->parsed()) {
      if (!strategy.empty()) source.overrides.push_back("decode.strategy=" + strategy);
      if (beam_size > 0) source.overrides.push_back("decode.beam_size=" + std::to_string(beam_size));
      auto cfg = load_run_config(source, Preset::scratch);
      if (!checkpoint.empty()) cfg.checkpoint_path = fs::absolute(checkpoint);
      cmd_translate(std::move(cfg), input, output, out);
    } else if (ev->parsed()) {
      cmd_evaluate(load_run_config(source, Preset::scratch), eval, out);
    } else if (rp->parsed()) {
      std::vector<fs::path> paths(report_files.begin(), report_files.end());
      cmd_report(paths, report_output, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}

}  // namespace lmt::cli
