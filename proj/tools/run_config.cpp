#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "lmt/error.hpp"

namespace lmt::cli {

namespace pt = boost::property_tree;
namespace fs = std::filesystem;

RawSettings read_ini(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("cannot parse config " + path.string() + ": " + e.message() + " (line " +
                      std::to_string(e.line()) + ")");
  }
  RawSettings raw;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config key '" + section + "' must live inside a [section]");
    }
    for (const auto& [key, value] : body) raw[section + "." + key] = value.get_value<std::string>();
  }
  return raw;
}

std::pair<std::string, std::string> parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + text + "' must look like section.key=value");
  std::string key = text.substr(0, eq);
  if (key.find('.') == std::string::npos) throw ConfigError("override key '" + key + "' must be section.key");
  return {std::move(key), text.substr(eq + 1)};
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last || value.empty()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as a number");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + value + "'");
}

template <typename F>
auto wrap(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

fs::path resolve_path(const RunConfig& c, const std::string& value) {
  fs::path p(value);
  return p.is_absolute() || value.empty() ? p : c.base_dir / p;
}

const std::map<std::string, Setter>& model_setters() {
  static const std::map<std::string, Setter> setters = {
      {"model.layers", [](RunConfig& c, auto& k, auto& v) { c.model.num_layers = parse_number<std::size_t>(k, v); }},
      {"model.heads", [](RunConfig& c, auto& k, auto& v) { c.model.num_heads = parse_number<std::size_t>(k, v); }},
      {"model.d_model", [](RunConfig& c, auto& k, auto& v) { c.model.d_model = parse_number<std::size_t>(k, v); }},
      {"model.d_ff", [](RunConfig& c, auto& k, auto& v) { c.model.d_ff = parse_number<std::size_t>(k, v); }},
      {"model.dropout", [](RunConfig& c, auto& k, auto& v) { c.model.dropout = parse_number<double>(k, v); }},
      {"model.max_len", [](RunConfig& c, auto& k, auto& v) { c.model.max_len = parse_number<std::size_t>(k, v); }},
      {"model.vocab_size",
       [](RunConfig& c, auto& k, auto& v) {
         c.model.vocab_size = parse_number<std::size_t>(k, v);
         c.model_vocab_explicit = true;
       }},
      {"model.label_smoothing",
       [](RunConfig& c, auto& k, auto& v) { c.model.label_smoothing = parse_number<double>(k, v); }},
      {"model.tie_embeddings",
       [](RunConfig& c, auto& k, auto& v) { c.model.tie_embeddings = parse_bool(k, v); }},
  };
  return setters;
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> all = [] {
    std::map<std::string, Setter> s = {
        {"paths.train", [](RunConfig& c, auto&, auto& v) { c.train_path = resolve_path(c, v); }},
        {"paths.valid", [](RunConfig& c, auto&, auto& v) { c.valid_path = resolve_path(c, v); }},
        {"paths.test", [](RunConfig& c, auto&, auto& v) { c.test_path = resolve_path(c, v); }},
        {"paths.subword_model", [](RunConfig& c, auto&, auto& v) { c.subword_model_path = resolve_path(c, v); }},
        {"paths.output_dir", [](RunConfig& c, auto&, auto& v) { c.output_dir = resolve_path(c, v); }},
        {"paths.checkpoint", [](RunConfig& c, auto&, auto& v) { c.checkpoint_path = resolve_path(c, v); }},
        {"corpus.format",
         [](RunConfig& c, auto& k, auto& v) {
           if (v == "auto") {
             c.format.reset();
           } else {
             c.format = wrap(k, [&] { return parse_format(v); });
           }
         }},
        {"corpus.policy", [](RunConfig& c, auto& k, auto& v) { c.policy = wrap(k, [&] { return parse_policy(v); }); }},
        {"subword.vocab_size",
         [](RunConfig& c, auto& k, auto& v) { c.subword_vocab_size = parse_number<std::size_t>(k, v); }},
        // train.preset is consumed before the other keys.
        {"train.preset", [](RunConfig&, auto&, auto&) {}},
        {"train.optimizer",
         [](RunConfig& c, auto& k, auto& v) { c.train.optimizer = wrap(k, [&] { return parse_optimizer(v); }); }},
        {"train.schedule",
         [](RunConfig& c, auto& k, auto& v) { c.train.schedule = wrap(k, [&] { return parse_schedule(v); }); }},
        {"train.learning_rate",
         [](RunConfig& c, auto& k, auto& v) { c.train.learning_rate = parse_number<double>(k, v); }},
        {"train.weight_decay",
         [](RunConfig& c, auto& k, auto& v) { c.train.weight_decay = parse_number<double>(k, v); }},
        {"train.batch_size",
         [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = parse_number<std::size_t>(k, v); }},
        {"train.max_len", [](RunConfig& c, auto& k, auto& v) { c.train.max_len = parse_number<std::size_t>(k, v); }},
        {"train.max_epochs",
         [](RunConfig& c, auto& k, auto& v) { c.train.max_epochs = parse_number<std::size_t>(k, v); }},
        {"train.warmup_steps",
         [](RunConfig& c, auto& k, auto& v) { c.train.warmup_steps = parse_number<std::size_t>(k, v); }},
        {"train.grad_clip_norm",
         [](RunConfig& c, auto& k, auto& v) { c.train.grad_clip_norm = parse_number<double>(k, v); }},
        {"train.shuffle", [](RunConfig& c, auto& k, auto& v) { c.train.shuffle = parse_bool(k, v); }},
        {"run.seed", [](RunConfig& c, auto& k, auto& v) { c.train.seed = parse_number<std::uint64_t>(k, v); }},
        {"decode.strategy",
         [](RunConfig& c, auto& k, auto& v) { c.decode.strategy = wrap(k, [&] { return parse_strategy(v); }); }},
        {"decode.beam_size",
         [](RunConfig& c, auto& k, auto& v) { c.decode.beam_size = parse_number<std::size_t>(k, v); }},
        {"decode.length_penalty_alpha",
         [](RunConfig& c, auto& k, auto& v) { c.decode.length_penalty_alpha = parse_number<double>(k, v); }},
        {"decode.max_len",
         [](RunConfig& c, auto& k, auto& v) {
           if (v == "auto" || v.empty()) {
             c.decode.max_len.reset();
           } else {
             c.decode.max_len = parse_number<std::size_t>(k, v);
           }
         }},
        {"decode.threads", [](RunConfig& c, auto& k, auto& v) { c.threads = parse_number<std::size_t>(k, v); }},
    };
    for (const auto& [k, f] : model_setters()) s.emplace(k, f);
    return s;
  }();
  return all;
}

}  // namespace

void apply_model_keys(const RawSettings& raw, ModelConfig& model) {
  RunConfig tmp;
  tmp.model = model;
  for (const auto& [key, value] : raw) {
    const auto it = model_setters().find(key);
    if (it != model_setters().end()) it->second(tmp, key, value);
  }
  model = tmp.model;
}

RunConfig resolve(const RawSettings& raw, const fs::path& base_dir, Preset default_preset) {
  RunConfig c;
  c.base_dir = fs::absolute(base_dir);
  c.raw = raw;
  Preset preset = default_preset;
  if (const auto it = raw.find("train.preset"); it != raw.end()) {
    preset = wrap(it->first, [&] { return parse_preset(it->second); });
  }
  c.train = TrainConfig::for_preset(preset);
  for (const auto& [key, value] : raw) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(c, key, value);
  }
  try {
    c.model.validate();
    c.train.validate();
    c.decode.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (c.threads == 0) throw ConfigError("decode.threads must be at least 1");
  return c;
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

std::string to_ini(const RunConfig& c) {
  pt::ptree t;
  t.put("paths.train", c.train_path.string());
  t.put("paths.valid", c.valid_path.string());
  t.put("paths.test", c.test_path.string());
  t.put("paths.subword_model", c.subword_model_path.string());
  t.put("paths.output_dir", c.output_dir.string());
  t.put("paths.checkpoint", c.checkpoint_path.string());
  t.put("corpus.format", c.format ? std::string(*c.format == CorpusFormat::tsv ? "tsv" : "jsonl") : "auto");
  t.put("corpus.policy", c.policy == CleaningPolicy::strict ? "strict" : "drop");
  t.put("subword.vocab_size", c.subword_vocab_size);
  t.put("model.layers", c.model.num_layers);
  t.put("model.heads", c.model.num_heads);
  t.put("model.d_model", c.model.d_model);
  t.put("model.d_ff", c.model.d_ff);
  t.put("model.dropout", fmt_double(c.model.dropout));
  t.put("model.max_len", c.model.max_len);
  t.put("model.vocab_size", c.model.vocab_size);
  t.put("model.label_smoothing", fmt_double(c.model.label_smoothing));
  t.put("model.tie_embeddings", c.model.tie_embeddings ? "true" : "false");
  t.put("train.preset", std::string(to_string(c.train.preset)));
  t.put("train.optimizer", std::string(to_string(c.train.optimizer)));
  t.put("train.schedule", std::string(to_string(c.train.schedule)));
  t.put("train.learning_rate", fmt_double(c.train.learning_rate));
  t.put("train.weight_decay", fmt_double(c.train.weight_decay));
  t.put("train.batch_size", c.train.batch_size);
  t.put("train.max_len", c.train.max_len);
  t.put("train.max_epochs", c.train.max_epochs);
  t.put("train.warmup_steps", c.train.warmup_steps);
  t.put("train.grad_clip_norm", fmt_double(c.train.grad_clip_norm));
  t.put("train.shuffle", c.train.shuffle ? "true" : "false");
  t.put("run.seed", c.train.seed);
  t.put("decode.strategy", std::string(to_string(c.decode.strategy)));
  t.put("decode.beam_size", c.decode.beam_size);
  t.put("decode.length_penalty_alpha", fmt_double(c.decode.length_penalty_alpha));
  t.put("decode.max_len", c.decode.max_len ? std::to_string(*c.decode.max_len) : std::string("auto"));
  t.put("decode.threads", c.threads);
  std::ostringstream out;
  pt::write_ini(out, t);
  return out.str();
}

void write_snapshot(const RunConfig& cfg, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_ini(cfg);
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace lmt::cli
