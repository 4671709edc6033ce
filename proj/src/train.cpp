#include "lmt/train.hpp"

#include <cmath>

#include "lmt/error.hpp"

namespace lmt {

std::string_view to_string(Preset p) { return p == Preset::scratch ? "scratch" : "continued"; }
std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "adamw"; }
std::string_view to_string(Schedule s) { return s == Schedule::inverse_sqrt ? "inverse_sqrt" : "constant"; }

Preset parse_preset(std::string_view name) {
  if (name == "scratch") return Preset::scratch;
  if (name == "continued") return Preset::continued;
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected scratch or continued)");
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "adamw") return OptimizerKind::adamw;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected adam or adamw)");
}

Schedule parse_schedule(std::string_view name) {
  if (name == "inverse_sqrt") return Schedule::inverse_sqrt;
  if (name == "constant") return Schedule::constant;
  throw ConfigError("unknown schedule '" + std::string(name) + "' (expected inverse_sqrt or constant)");
}

TrainConfig TrainConfig::for_preset(Preset preset) {
  TrainConfig c;
  c.preset = preset;
  if (preset == Preset::continued) {
    c.optimizer = OptimizerKind::adamw;
    c.schedule = Schedule::constant;
    c.learning_rate = 2e-5;
    c.weight_decay = 0.01;
    c.batch_size = 32;
    c.max_len = 128;
    c.max_epochs = 3;
    c.warmup_steps = 0;
  }
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (optimizer == OptimizerKind::adam && weight_decay != 0.0) {
    throw ConfigError("weight_decay requires optimizer = adamw");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (max_len < 2) throw ConfigError("max_len must be at least 2");
  if (grad_clip_norm < 0.0) throw ConfigError("grad_clip_norm must be non-negative");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"preset", to_string(preset)},
          {"optimizer", to_string(optimizer)},
          {"schedule", to_string(schedule)},
          {"learning_rate", learning_rate},
          {"weight_decay", weight_decay},
          {"batch_size", batch_size},
          {"max_len", max_len},
          {"max_epochs", max_epochs},
          {"warmup_steps", warmup_steps},
          {"grad_clip_norm", grad_clip_norm},
          {"seed", seed},
          {"shuffle", shuffle}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.preset = parse_preset(j.at("preset").get<std::string>());
  c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  c.schedule = parse_schedule(j.at("schedule").get<std::string>());
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.warmup_steps = j.at("warmup_steps").get<std::size_t>();
  c.grad_clip_norm = j.at("grad_clip_norm").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.shuffle = j.at("shuffle").get<bool>();
  return c;
}

double learning_rate_at(const TrainConfig& cfg, std::uint64_t step) {
  if (cfg.schedule == Schedule::constant) return cfg.learning_rate;
  const double s = static_cast<double>(std::max<std::uint64_t>(step, 1));
  if (cfg.warmup_steps == 0) return cfg.learning_rate / std::sqrt(s);
  const double w = static_cast<double>(cfg.warmup_steps);
  return cfg.learning_rate * std::min(s / w, std::sqrt(w / s));
}

nlohmann::json EpochRecord::to_json() const {
  nlohmann::json j = {{"epoch", epoch}, {"train_loss", train_loss}, {"lr", lr}, {"step", step}};
  j["valid_loss"] = valid_loss ? nlohmann::json(*valid_loss) : nlohmann::json(nullptr);
  return j;
}

template <typename T>
Tensor<T> batch_loss(const TransformerModel<T>& model, const Batch& batch, double label_smoothing, bool training,
                     Rng* rng) {
  const TokenMatrix& tgt = batch.target;
  if (tgt.cols < 2) throw ShapeError("target rows need at least bos and eos");
  TokenMatrix input{tgt.rows, tgt.cols - 1, {}};
  std::vector<TokenId> labels;
  input.ids.reserve(tgt.rows * (tgt.cols - 1));
  labels.reserve(tgt.rows * (tgt.cols - 1));
  for (std::size_t r = 0; r < tgt.rows; ++r) {
    for (std::size_t c = 0; c + 1 < tgt.cols; ++c) {
      input.ids.push_back(tgt.at(r, c));
      labels.push_back(tgt.at(r, c + 1));
    }
  }
  const auto input_mask = input.mask();
  const Tensor<T> logits = model.forward(batch.source, batch.source_mask, input, input_mask, training, rng);
  const std::size_t V = model.config().vocab_size;
  return cross_entropy(reshape(logits, {input.rows * input.cols, V}), std::span<const TokenId>(labels),
                       label_smoothing, SubwordModel::kPad);
}

template Tensor<float> batch_loss(const TransformerModel<float>&, const Batch&, double, bool, Rng*);
template Tensor<double> batch_loss(const TransformerModel<double>&, const Batch&, double, bool, Rng*);

double evaluate_loss(const TransformerModel<float>& model, const std::vector<Batch>& batches, double label_smoothing) {
  if (batches.empty()) throw ConfigError("no batches to evaluate");
  double total = 0.0;
  for (const auto& b : batches) total += batch_loss(model, b, label_smoothing, false, nullptr).item();
  return total / static_cast<double>(batches.size());
}

Trainer::Trainer(TransformerModel<float>& model, const SubwordModel& subword, TrainConfig config)
    : model_(model), subword_(subword), config_(std::move(config)) {
  config_.validate();
  if (model_.config().vocab_size != subword_.vocab_size()) {
    throw ConfigError("model vocab_size " + std::to_string(model_.config().vocab_size) +
                      " does not match subword model vocabulary " + std::to_string(subword_.vocab_size()));
  }
  if (config_.max_len > model_.config().max_len) {
    throw ConfigError("training max_len exceeds the model's max_len");
  }
  state_ = OptimState<float>::zeros_like(model_.parameters());
}

void Trainer::resume(OptimState<float> state, std::size_t epochs_completed) {
  if (state.m.size() != model_.parameters().size()) state = [&] {
    auto fresh = OptimState<float>::zeros_like(model_.parameters());
    fresh.step = state.step;
    return fresh;
  }();
  state_ = std::move(state);
  epochs_completed_ = epochs_completed;
}

CheckpointMeta Trainer::checkpoint_meta() const {
  CheckpointMeta meta;
  meta.subword_hash = subword_.content_hash();
  meta.epochs_completed = epochs_completed_;
  meta.train_config = config_.to_json();
  return meta;
}

double Trainer::step(const Batch& batch) {
  auto& params = model_.parameters();
  model_.zero_grad();
  Rng dropout_rng = Rng::derive(config_.seed, state_.step + 1);
  Tape<float> tape;
  double loss_value;
  {
    TapeScope<float> scope(tape);
    const Tensor<float> loss = batch_loss(model_, batch, model_.config().label_smoothing, true, &dropout_rng);
    loss_value = loss.item();
    if (!std::isfinite(loss_value)) throw NumericError("training loss diverged (non-finite) at step " + std::to_string(state_.step + 1));
    backward(loss, tape);
  }
  if (config_.grad_clip_norm > 0.0) clip_grad_norm(params, config_.grad_clip_norm);
  const double lr = learning_rate_at(config_, state_.step + 1);
  if (config_.optimizer == OptimizerKind::adamw) {
    adamw_step(params, state_, lr, config_.weight_decay);
  } else {
    adam_step(params, state_, lr);
  }
  for (const auto& p : params) {
    for (float v : p.tensor.data()) {
      if (!std::isfinite(v)) throw NumericError("parameter " + p.name + " became non-finite");
    }
  }
  model_.zero_grad();
  return loss_value;
}

std::vector<EpochRecord> Trainer::run(const ParallelCorpus& train, const ParallelCorpus* valid,
                                      const EpochCallback& on_epoch_end) {
  std::vector<EpochRecord> history;
  std::vector<Batch> valid_batches;
  if (valid && !valid->empty()) valid_batches = make_batches(*valid, subword_, config_.batch_size, config_.max_len);
  while (epochs_completed_ < config_.max_epochs) {
    const std::size_t epoch = epochs_completed_;
    std::optional<std::uint64_t> seed;
    if (config_.shuffle) seed = Rng::derive(config_.seed, 0x5EED0000ULL + epoch).next_u64();
    const auto batches = make_batches(train, subword_, config_.batch_size, config_.max_len, seed);
    double total = 0.0;
    double lr = 0.0;
    for (const auto& batch : batches) {
      lr = learning_rate_at(config_, state_.step + 1);
      total += step(batch);
    }
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = total / static_cast<double>(batches.size());
    record.lr = lr;
    record.step = state_.step;
    if (!valid_batches.empty()) record.valid_loss = evaluate_loss(model_, valid_batches, model_.config().label_smoothing);
    epochs_completed_ = epoch + 1;
    history.push_back(record);
    if (on_epoch_end) on_epoch_end(record, *this);
  }
  return history;
}

std::vector<EpochRecord> train(TransformerModel<float>& model, const SubwordModel& subword,
                               const ParallelCorpus& corpus, const ParallelCorpus* valid, const TrainConfig& config,
                               const Trainer::EpochCallback& on_epoch_end) {
  Trainer trainer(model, subword, config);
  return trainer.run(corpus, valid, on_epoch_end);
}

std::vector<EpochRecord> continue_training(LoadedCheckpoint& checkpoint, const SubwordModel& subword,
                                           const ParallelCorpus& corpus, const TrainConfig& config,
                                           const Trainer::EpochCallback& on_epoch_end) {
  if (config.preset != Preset::continued) throw ConfigError("continue_training requires the continued preset");
  const std::string hash = subword.content_hash();
  if (checkpoint.meta.subword_hash != hash) {
    throw ConfigError("subword model hash " + hash + " does not match checkpoint's " + checkpoint.meta.subword_hash);
  }
  Trainer trainer(checkpoint.model, subword, config);
  return trainer.run(corpus, nullptr, on_epoch_end);
}

}  // namespace lmt
