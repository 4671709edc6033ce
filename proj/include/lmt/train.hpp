#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lmt/checkpoint.hpp"
#include "lmt/corpus.hpp"
#include "lmt/model.hpp"
#include "lmt/optim.hpp"
#include "lmt/subword.hpp"

namespace lmt {

enum class Preset { scratch, continued };
enum class OptimizerKind { adam, adamw };
enum class Schedule { inverse_sqrt, constant };

std::string_view to_string(Preset p);
std::string_view to_string(OptimizerKind k);
std::string_view to_string(Schedule s);
Preset parse_preset(std::string_view name);
OptimizerKind parse_optimizer(std::string_view name);
Schedule parse_schedule(std::string_view name);

struct TrainConfig {
  Preset preset = Preset::scratch;
  OptimizerKind optimizer = OptimizerKind::adam;
  Schedule schedule = Schedule::inverse_sqrt;
  double learning_rate = 5e-4;
  double weight_decay = 0.0;
  std::size_t batch_size = 32;
  std::size_t max_len = 256;
  std::size_t max_epochs = 10;
  std::size_t warmup_steps = 4000;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 1;
  bool shuffle = true;

  /// scratch: Adam, inverse-sqrt schedule peaking at 5e-4 after 4,000 steps,
  /// batch 32, 256-token cap.
  /// continued: AdamW, constant lr 2e-5, weight decay 0.01, batch 32,
  /// 128-token cap.
  static TrainConfig for_preset(Preset preset);

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Learning rate for the 1-based optimizer step.
double learning_rate_at(const TrainConfig& cfg, std::uint64_t step);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> valid_loss;
  double lr = 0.0;
  std::uint64_t step = 0;

  nlohmann::json to_json() const;
};

/// Teacher-forced loss of one batch: decoder reads target[:, :-1] and is
/// scored against target[:, 1:], padding ignored.
template <typename T>
Tensor<T> batch_loss(const TransformerModel<T>& model, const Batch& batch, double label_smoothing, bool training,
                     Rng* rng);

/// Mean teacher-forced loss over batches, inference mode.
double evaluate_loss(const TransformerModel<float>& model, const std::vector<Batch>& batches, double label_smoothing);

class Trainer {
 public:
  using EpochCallback = std::function<void(const EpochRecord&, const Trainer&)>;

  /// Throws ConfigError if the model and subword vocabularies disagree.
  Trainer(TransformerModel<float>& model, const SubwordModel& subword, TrainConfig config);

  /// Resumes from a checkpoint's optimizer state and epoch counter.
  void resume(OptimState<float> state, std::size_t epochs_completed);

  /// Runs epochs until config.max_epochs. Throws NumericError if the loss
  /// diverges; state written by earlier callbacks is left untouched.
  std::vector<EpochRecord> run(const ParallelCorpus& train, const ParallelCorpus* valid = nullptr,
                               const EpochCallback& on_epoch_end = {});

  /// One optimizer step on a batch; returns the pre-update loss.
  double step(const Batch& batch);

  const TransformerModel<float>& model() const { return model_; }
  const OptimState<float>& optim_state() const { return state_; }
  const TrainConfig& config() const { return config_; }
  std::size_t epochs_completed() const { return epochs_completed_; }
  CheckpointMeta checkpoint_meta() const;

 private:
  TransformerModel<float>& model_;
  const SubwordModel& subword_;
  TrainConfig config_;
  OptimState<float> state_;
  std::size_t epochs_completed_ = 0;
};

std::vector<EpochRecord> train(TransformerModel<float>& model, const SubwordModel& subword,
                               const ParallelCorpus& corpus, const ParallelCorpus* valid, const TrainConfig& config,
                               const Trainer::EpochCallback& on_epoch_end = {});

/// Continued training from a checkpoint with the `continued` recipe and a
/// fresh optimizer. Throws ConfigError on a subword hash mismatch or when
/// `config` is not the continued preset.
std::vector<EpochRecord> continue_training(LoadedCheckpoint& checkpoint, const SubwordModel& subword,
                                           const ParallelCorpus& corpus, const TrainConfig& config,
                                           const Trainer::EpochCallback& on_epoch_end = {});

}  // namespace lmt
