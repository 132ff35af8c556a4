#include "protox/evaluator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <thread>

#include "protox/objectives.hpp"

namespace protox {

double mean_of(std::span<const double> values) {
  if (values.empty()) return 0;
  double total = 0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

double ci95_half_width(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) return 0;
  // Identical values would otherwise leave rounding noise from the mean.
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi) return 0;
  const double m = mean_of(values);
  double ss = 0;
  for (double v : values) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return 1.96 * sd / std::sqrt(static_cast<double>(n));
}

double episode_accuracy(const ExtractorParams<float>* params, const Episode& episode, bool bypass_module) {
  const auto values = evaluate_objective<float>(params, episode, {.use_prototype_loss = false,
                                                                  .bypass_module = bypass_module});
  std::size_t correct = 0;
  for (std::size_t q = 0; q < values.predictions.size(); ++q)
    if (values.predictions[q] == static_cast<std::size_t>(episode.query_labels[q])) ++correct;
  return static_cast<double>(correct) / static_cast<double>(values.predictions.size());
}

EvalReport evaluate(const ExtractorParams<float>* params, const EmbeddingDataset& ds,
                    const EvalSettings& settings) {
  if (!settings.bypass_module && params == nullptr) {
    throw UsageError("evaluate: parameters required unless the module is bypassed");
  }
  if (params && params->dim != ds.dim()) {
    throw ConfigError("extractor dim " + std::to_string(params->dim) + " does not match dataset dim " +
                      std::to_string(ds.dim()));
  }
  const auto start = std::chrono::steady_clock::now();
  EpisodeStream stream(ds, settings.shape, settings.seed, settings.episodes);

  EvalReport report;
  report.episode_count = settings.episodes;
  report.accuracies.assign(settings.episodes, 0.0);
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(settings.threads, settings.episodes));

  auto run = [&](std::size_t worker) {
    for (std::uint64_t i = worker; i < settings.episodes; i += workers) {
      report.accuracies[i] = episode_accuracy(params, stream.at(i), settings.bypass_module);
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            run(w);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  report.mean_accuracy = mean_of(report.accuracies);
  report.ci95 = ci95_half_width(report.accuracies);
  report.config = {.way = settings.shape.way,
                   .shot = settings.shape.shot,
                   .queries = settings.shape.queries,
                   .seed = settings.seed,
                   .bypass_module = settings.bypass_module,
                   .use_prototype_loss = settings.use_prototype_loss,
                   .layers = params && !settings.bypass_module ? params->layer_count() : 0};
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

nlohmann::json to_json(const ConfigFingerprint& fp) {
  return {{"n", fp.way},
          {"k", fp.shot},
          {"q", fp.queries},
          {"seed", fp.seed},
          {"bypass_module", fp.bypass_module},
          {"use_prototype_loss", fp.use_prototype_loss},
          {"layers", fp.layers}};
}

nlohmann::json to_json(const EvalReport& report) {
  return {{"episode_count", report.episode_count},
          {"mean_accuracy", report.mean_accuracy},
          {"ci95", report.ci95},
          {"config", to_json(report.config)},
          {"accuracies", report.accuracies}};
}

std::string format_table(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%zu-way %zu-shot, %zu queries/class, %llu episodes, %s\n"
                "accuracy: %.2f%% +- %.2f%% (95%% CI)\n",
                r.config.way, r.config.shot, r.config.queries,
                static_cast<unsigned long long>(r.episode_count),
                r.config.bypass_module ? "mean prototypes"
                                       : ("extractor, " + std::to_string(r.config.layers) + " layers").c_str(),
                100 * r.mean_accuracy, 100 * r.ci95);
  return buf;
}

std::vector<ModeResult> compare_modes(const EmbeddingDataset& ds, const EvalSettings& settings,
                                      std::span<const ModeSpec> modes) {
  std::vector<ModeResult> out;
  for (const auto& mode : modes) {
    EvalSettings s = settings;
    s.bypass_module = mode.bypass_module;
    s.use_prototype_loss = mode.use_prototype_loss;
    out.push_back({mode.label, evaluate(mode.params, ds, s)});
  }
  return out;
}

std::string format_comparison(std::span<const ModeResult> results) {
  std::size_t width = 4;
  for (const auto& r : results) width = std::max(width, r.label.size());
  std::string out;
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-*s  %10s  %8s\n", static_cast<int>(width), "mode", "accuracy", "ci95");
  out += buf;
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%-*s  %9.2f%%  %7.2f%%\n", static_cast<int>(width), r.label.c_str(),
                  100 * r.report.mean_accuracy, 100 * r.report.ci95);
    out += buf;
  }
  return out;
}

std::size_t export_plot_data(const ExtractorParams<float>& params, const EmbeddingDataset& ds,
                             const EpisodeShape& shape, std::uint64_t seed, std::uint64_t task_count,
                             const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write plot data: " + path);
  std::size_t records = 0;
  auto emit = [&](std::uint64_t episode, const char* role, std::size_t cls, std::span<const float> v) {
    nlohmann::json rec = {{"episode", episode},
                          {"role", role},
                          {"class", cls},
                          {"vector", std::vector<float>(v.begin(), v.end())}};
    out << rec.dump() << '\n';
    ++records;
  };
  for (const auto& ep : EpisodeStream(ds, shape, seed, task_count)) {
    for (std::size_t q = 0; q < ep.query.rows(); ++q)
      emit(ep.index, "query", static_cast<std::size_t>(ep.query_labels[q]), ep.query.row(q));
    std::vector<SupportSlice<float>> slices;
    for (std::size_t c = 0; c < shape.way; ++c) slices.emplace_back(static_cast<int>(c), ep.class_support(c));
    for (const auto& s : slices) emit(ep.index, "mean_prototype", s.class_id(), s.token().data());
    for (const auto& s : slices) {
      emit(ep.index, "module_prototype", s.class_id(), extract_prototype(params, s).data());
    }
  }
  if (!out) throw DataError("write failed: " + path);
  return records;
}

}  // namespace protox
