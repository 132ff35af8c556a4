#include "protox/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "protox/evaluator.hpp"
#include "protox/graph.hpp"
#include "protox/objectives.hpp"

namespace protox {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (shape.way < 2) fail("training needs at least 2 classes per episode");
  if (shape.shot < 1 || shape.queries < 1) fail("shot and queries must be >= 1");
  if (tasks_per_epoch < 1) fail("tasks_per_epoch must be >= 1");
  if (accumulation < 1) fail("accumulation must be >= 1");
  if (layers < 1) fail("layers must be >= 1");
  if (heads < 1) fail("heads must be >= 1");
  if (!(adam.lr >= 0) || !(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1) ||
      !(adam.eps > 0)) {
    fail("invalid Adam hyperparameters");
  }
  if (threads < 1) fail("threads must be >= 1");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"n", c.shape.way},
          {"k", c.shape.shot},
          {"q", c.shape.queries},
          {"epochs", c.epochs},
          {"tasks_per_epoch", c.tasks_per_epoch},
          {"accumulation", c.accumulation},
          {"seed", c.seed},
          {"use_prototype_loss", c.use_prototype_loss},
          {"layers", c.layers},
          {"heads", c.heads},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"eps", c.adam.eps},
          {"val_episodes", c.val_episodes},
          {"checkpoint_every", c.checkpoint_every},
          {"checkpoint_dir", c.checkpoint_dir},
          {"threads", c.threads}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "n") c.shape.way = v.get<std::size_t>();
      else if (key == "k") c.shape.shot = v.get<std::size_t>();
      else if (key == "q") c.shape.queries = v.get<std::size_t>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "tasks_per_epoch") c.tasks_per_epoch = v.get<std::size_t>();
      else if (key == "accumulation") c.accumulation = v.get<std::size_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "use_prototype_loss") c.use_prototype_loss = v.get<bool>();
      else if (key == "layers") c.layers = v.get<std::size_t>();
      else if (key == "heads") c.heads = v.get<std::size_t>();
      else if (key == "lr") c.adam.lr = v.get<double>();
      else if (key == "beta1") c.adam.beta1 = v.get<double>();
      else if (key == "beta2") c.adam.beta2 = v.get<double>();
      else if (key == "eps") c.adam.eps = v.get<double>();
      else if (key == "val_episodes") c.val_episodes = v.get<std::uint64_t>();
      else if (key == "checkpoint_every") c.checkpoint_every = v.get<std::size_t>();
      else if (key == "checkpoint_dir") c.checkpoint_dir = v.get<std::string>();
      else if (key == "threads") c.threads = v.get<std::size_t>();
      else throw ConfigError("unknown training config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad training config value: ") + e.what());
  }
  return c;
}

nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j = {{"epoch", r.epoch},
                      {"mean_total_loss", r.mean_total_loss},
                      {"mean_classifier_loss", r.mean_classifier_loss},
                      {"mean_prototype_loss", r.mean_prototype_loss},
                      {"optimizer_steps", r.optimizer_steps},
                      {"val_accuracy", nullptr},
                      {"val_ci95", nullptr}};
  if (r.val_accuracy) j["val_accuracy"] = *r.val_accuracy;
  if (r.val_ci95) j["val_ci95"] = *r.val_ci95;
  return j;
}

EpochRecord epoch_record_from_json(const nlohmann::json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.mean_total_loss = j.at("mean_total_loss").get<double>();
  r.mean_classifier_loss = j.at("mean_classifier_loss").get<double>();
  r.mean_prototype_loss = j.at("mean_prototype_loss").get<double>();
  r.optimizer_steps = j.at("optimizer_steps").get<std::uint64_t>();
  if (!j.at("val_accuracy").is_null()) r.val_accuracy = j.at("val_accuracy").get<double>();
  if (!j.at("val_ci95").is_null()) r.val_ci95 = j.at("val_ci95").get<double>();
  return r;
}

TrainState init_train_state(std::size_t dim, const TrainConfig& config) {
  TrainState s;
  s.params = init_params(dim, config.layers, config.heads, config.seed);
  s.adam = make_adam_state(s.params.named(), config.adam);
  s.best_params = s.params;
  return s;
}

TrainState train(const EmbeddingDataset& train_set, const EmbeddingDataset* val_set, const TrainConfig& config,
                 std::optional<TrainState> resume, const TrainHooks& hooks) {
  config.validate();
  auto log = [&](const std::string& m) {
    if (hooks.log) hooks.log(m);
  };
  if (val_set && val_set->dim() != train_set.dim()) {
    throw ConfigError("validation dim " + std::to_string(val_set->dim()) + " differs from training dim " +
                      std::to_string(train_set.dim()));
  }
  if (config.tasks_per_epoch % config.accumulation != 0) {
    log("warning: tasks_per_epoch is not a multiple of accumulation; the remainder is applied as a smaller step");
  }
  const std::size_t per_class = config.shape.shot + config.shape.queries;
  const auto eligible = eligible_classes(train_set, per_class);
  if (eligible.size() < train_set.class_count()) {
    log(std::to_string(train_set.class_count() - eligible.size()) + " training classes have fewer than " +
        std::to_string(per_class) + " samples and are never sampled");
  }

  TrainState state = resume ? std::move(*resume) : init_train_state(train_set.dim(), config);
  if (state.params.dim != train_set.dim()) {
    throw ConfigError("extractor dim " + std::to_string(state.params.dim) + " does not match dataset dim " +
                      std::to_string(train_set.dim()));
  }
  if (state.params.layer_count() != config.layers || state.params.heads != config.heads) {
    throw ConfigError("resumed parameters do not match the configured layers/heads");
  }
  state.adam.hyper = config.adam;

  const auto named = state.params.named();
  state.params.zero_grad();
  const ObjectiveConfig objective{.use_prototype_loss = config.use_prototype_loss, .bypass_module = false};

  for (std::size_t epoch = state.epochs_completed; epoch < config.epochs; ++epoch) {
    double sum_total = 0, sum_cls = 0, sum_proto = 0;
    std::size_t pending = 0;
    for (std::size_t task = 0; task < config.tasks_per_epoch; ++task) {
      const auto index = config.episode_index(epoch, task);
      const auto episode = sample_episode(train_set, config.shape, config.seed, index);
      Graph<float> g;
      const auto model = bind(g, state.params);
      const auto losses = episode_objective(g, &model, episode, objective);
      const double total = g.value(losses.total)[0];
      if (!std::isfinite(total)) {
        throw NumericError("non-finite loss at training episode " + std::to_string(index) + " (epoch " +
                           std::to_string(epoch + 1) + ", task " + std::to_string(task) + ")");
      }
      sum_total += total;
      sum_cls += g.value(losses.classifier)[0];
      sum_proto += g.value(losses.prototype)[0];
      g.backward(losses.total);
      ++pending;

      if (pending == config.accumulation || task + 1 == config.tasks_per_epoch) {
        const float inv = 1.0f / static_cast<float>(pending);
        for (const auto& p : named)
          for (auto& v : p.tensor->grad()) v *= inv;
        adam_step(named, state.adam);
        state.params.zero_grad();
        pending = 0;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    const double n = static_cast<double>(config.tasks_per_epoch);
    rec.mean_total_loss = sum_total / n;
    rec.mean_classifier_loss = sum_cls / n;
    rec.mean_prototype_loss = sum_proto / n;
    rec.optimizer_steps = state.adam.step;

    if (val_set && config.val_episodes > 0) {
      EvalSettings s{.shape = config.shape,
                     .episodes = config.val_episodes,
                     .seed = config.val_seed(),
                     .bypass_module = false,
                     .use_prototype_loss = config.use_prototype_loss,
                     .threads = config.threads};
      const auto report = evaluate(&state.params, *val_set, s);
      rec.val_accuracy = report.mean_accuracy;
      rec.val_ci95 = report.ci95;
      if (!state.best_val_accuracy || report.mean_accuracy > *state.best_val_accuracy) {
        state.best_val_accuracy = report.mean_accuracy;
        state.best_epoch = rec.epoch;
        state.best_params = state.params;
      }
    } else {
      state.best_epoch = rec.epoch;
      state.best_params = state.params;
    }
    for (auto& nt : state.best_params.named()) nt.tensor->clear_grad();

    state.history.push_back(rec);
    state.epochs_completed = epoch + 1;

    if (config.checkpoint_every > 0 && !config.checkpoint_dir.empty() &&
        state.epochs_completed % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04zu.pfck", state.epochs_completed);
      std::filesystem::create_directories(config.checkpoint_dir);
      save_checkpoint(state, config, (std::filesystem::path(config.checkpoint_dir) / name).string());
    }
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  for (auto& nt : state.params.named()) nt.tensor->clear_grad();
  return state;
}

}  // namespace protox
