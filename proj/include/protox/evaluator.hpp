#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "protox/dataset.hpp"
#include "protox/extractor.hpp"
#include "protox/sampler.hpp"

namespace protox {

struct EvalSettings {
  EpisodeShape shape;
  std::uint64_t episodes = 2000;
  std::uint64_t seed = 0;
  bool bypass_module = false;
  /// Recorded in the fingerprint only; evaluation never computes losses.
  bool use_prototype_loss = true;
  std::size_t threads = 1;
};

struct ConfigFingerprint {
  std::size_t way = 0, shot = 0, queries = 0;
  std::uint64_t seed = 0;
  bool bypass_module = false;
  bool use_prototype_loss = true;
  std::size_t layers = 0;
};

struct EvalReport {
  std::uint64_t episode_count = 0;
  std::vector<double> accuracies;  // per episode, fraction of N*Q queries
  double mean_accuracy = 0;
  double ci95 = 0;  // 1.96 * sample sd / sqrt(episodes)
  ConfigFingerprint config;
  double wall_seconds = 0;
};

double mean_of(std::span<const double> values);
/// 1.96 * s / sqrt(n) with s the n-1 sample standard deviation; 0 for n < 2.
double ci95_half_width(std::span<const double> values);

/// Fraction of queries whose nearest prototype (squared distance, ties to
/// the lowest class index) is their own class.
double episode_accuracy(const ExtractorParams<float>* params, const Episode& episode, bool bypass_module);

/// `params` may be null when settings.bypass_module is set. Episodes are
/// independent and split across settings.threads workers; the result does
/// not depend on the thread count.
EvalReport evaluate(const ExtractorParams<float>* params, const EmbeddingDataset& ds,
                    const EvalSettings& settings);

/// Deterministic document: wall time is left out so that identical runs
/// produce identical bytes.
nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const ConfigFingerprint& fp);
std::string format_table(const EvalReport& report);

struct ModeSpec {
  std::string label;
  const ExtractorParams<float>* params = nullptr;
  bool bypass_module = false;
  bool use_prototype_loss = true;
};

struct ModeResult {
  std::string label;
  EvalReport report;
};

/// Evaluates every mode on the same episode stream (settings.seed), so the
/// comparison is paired.
std::vector<ModeResult> compare_modes(const EmbeddingDataset& ds, const EvalSettings& settings,
                                      std::span<const ModeSpec> modes);
std::string format_comparison(std::span<const ModeResult> results);

/// Writes one JSON object per line: {episode, role, class, vector} with role
/// in {query, mean_prototype, module_prototype}. Returns the record count.
std::size_t export_plot_data(const ExtractorParams<float>& params, const EmbeddingDataset& ds,
                             const EpisodeShape& shape, std::uint64_t seed, std::uint64_t task_count,
                             const std::string& path);

}  // namespace protox
