#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace lmt::cli {

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kConfigError = 2 };

struct ConfigSource {
  std::filesystem::path file;  // optional
  std::vector<std::string> overrides;
};

/// Merges the config file and overrides, then resolves. Relative paths are
/// taken from the config file's directory (or the working directory without one).
RunConfig load_run_config(const ConfigSource& source, Preset default_preset);

/// Prints split name and pair count for each configured corpus path.
void cmd_corpus_stats(const RunConfig& cfg, std::ostream& out);
void cmd_tokenizer_train(const RunConfig& cfg, std::ostream& out);
/// With `dry_run`, only resolves the configuration and writes its snapshot.
void cmd_train(RunConfig cfg, std::ostream& out, bool dry_run = false);
void cmd_continue(RunConfig cfg, std::ostream& out, bool dry_run = false);
void cmd_translate(RunConfig cfg, const std::filesystem::path& input, const std::filesystem::path& output,
                   std::ostream& out);

struct EvaluateArgs {
  std::filesystem::path hypothesis;
  std::filesystem::path reference;
  std::filesystem::path output;  // writes <output>.json and <output>.txt
  std::string model_name = "system";
  bool fine_tuned = false;
  bool per_sentence = false;
};
void cmd_evaluate(const RunConfig& cfg, const EvaluateArgs& args, std::ostream& out);

/// Renders a Table-style comparison from several report JSON files.
void cmd_report(const std::vector<std::filesystem::path>& reports, const std::filesystem::path& output,
                std::ostream& out);

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lmt::cli
