#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protox/dataset.hpp"
#include "protox/extractor.hpp"
#include "protox/optimizer.hpp"
#include "protox/sampler.hpp"

namespace protox {

struct TrainConfig {
  EpisodeShape shape{5, 5, 15};
  std::size_t epochs = 100;
  std::size_t tasks_per_epoch = 500;
  /// Episodes whose gradients are averaged into one optimizer step.
  std::size_t accumulation = 10;
  std::uint64_t seed = 0;
  bool use_prototype_loss = true;
  std::size_t layers = 2;
  std::size_t heads = 8;
  AdamHyper adam;
  /// Validation episodes per epoch (0 disables model selection).
  std::uint64_t val_episodes = 200;
  /// Write a checkpoint every this many epochs when checkpoint_dir is set.
  std::size_t checkpoint_every = 0;
  std::string checkpoint_dir;
  std::size_t threads = 1;

  /// Seed of the fixed validation episode stream.
  std::uint64_t val_seed() const { return seed ^ 0x5DEECE66DULL; }
  /// Global training-episode index of (epoch, task).
  std::uint64_t episode_index(std::size_t epoch, std::size_t task) const {
    return std::uint64_t{epoch} * tasks_per_epoch + task;
  }
  /// Optimizer steps per epoch, counting the flushed remainder.
  std::size_t steps_per_epoch() const {
    return tasks_per_epoch / accumulation + (tasks_per_epoch % accumulation ? 1 : 0);
  }

  /// Raises ConfigError for inconsistent settings.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_total_loss = 0;
  double mean_classifier_loss = 0;
  double mean_prototype_loss = 0;
  std::uint64_t optimizer_steps = 0;  // cumulative
  std::optional<double> val_accuracy;
  std::optional<double> val_ci95;
};

nlohmann::json to_json(const EpochRecord& r);
EpochRecord epoch_record_from_json(const nlohmann::json& j);

struct TrainState {
  ExtractorParams<float> params;
  AdamState<float> adam;
  std::size_t epochs_completed = 0;
  /// Parameters with the best validation accuracy so far (the latest ones
  /// when no validation set is used).
  ExtractorParams<float> best_params;
  std::optional<double> best_val_accuracy;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
};

/// Fresh parameters from init_params(dim, layers, heads, seed).
TrainState init_train_state(std::size_t dim, const TrainConfig& config);

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(const std::string&)> log;
};

/// Episodic training. Resumes from `resume` when given; the episode stream is
/// indexed globally by (epoch, task), so a resumed run continues exactly
/// where the original would have been. Raises NumericError on a non-finite
/// loss and ConfigError on dimension mismatches.
TrainState train(const EmbeddingDataset& train_set, const EmbeddingDataset* val_set, const TrainConfig& config,
                 std::optional<TrainState> resume = std::nullopt, const TrainHooks& hooks = {});

// Checkpoint layout, little-endian:
//   "PFCK" | u32 version=1 | u32 json_len | json (config, model shape, adam
//   scalars, progress, history) | u32 n | n tensors (current "layerI.*" then
//   best "best.layerI.*") | u32 n | n tensors ("adam.m.*" then "adam.v.*") |
//   u64 FNV-1a of every preceding byte
// tensor = u16 name_len | name | u8 rank | rank x u32 dims | binary32 data

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  TrainState state;
};

std::vector<std::uint8_t> encode_checkpoint(const TrainState& state, const TrainConfig& config);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const TrainState& state, const TrainConfig& config, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace protox
