#include "protox/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "protox/dataset.hpp"
#include "protox/evaluator.hpp"
#include "protox/module_check.hpp"
#include "protox/synthetic.hpp"

namespace protox::cli {

namespace fs = std::filesystem;

nlohmann::json to_json(const RunConfig& c) {
  auto j = protox::to_json(c.train);
  j["episodes"] = c.episodes;
  j["bypass_module"] = c.bypass_module;
  j["train"] = c.train_path;
  j["val"] = c.val_path;
  j["test"] = c.test_path;
  j["checkpoint"] = c.checkpoint;
  j["checkpoints"] = c.checkpoints;
  j["untrained"] = c.untrained;
  j["resume"] = c.resume;
  j["out"] = c.out;
  j["tasks"] = c.tasks;
  j["dim"] = c.dim;
  j["step"] = c.step;
  j["tol"] = c.tol;
  j["inject_fault"] = c.inject_fault;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  nlohmann::json training = nlohmann::json::object();
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "episodes") c.episodes = v.get<std::uint64_t>();
      else if (key == "bypass_module") c.bypass_module = v.get<bool>();
      else if (key == "train") c.train_path = v.get<std::string>();
      else if (key == "val") c.val_path = v.get<std::string>();
      else if (key == "test") c.test_path = v.get<std::string>();
      else if (key == "checkpoint") c.checkpoint = v.get<std::string>();
      else if (key == "checkpoints") c.checkpoints = v.get<std::vector<std::string>>();
      else if (key == "untrained") c.untrained = v.get<bool>();
      else if (key == "resume") c.resume = v.get<std::string>();
      else if (key == "out") c.out = v.get<std::string>();
      else if (key == "tasks") c.tasks = v.get<std::uint64_t>();
      else if (key == "dim") c.dim = v.get<std::size_t>();
      else if (key == "step") c.step = v.get<double>();
      else if (key == "tol") c.tol = v.get<double>();
      else if (key == "inject_fault") c.inject_fault = v.get<double>();
      else training[key] = v;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.train = train_config_from_json(training);
  return c;
}

namespace {

/// Flag values land in a JSON object keyed like the config file, so that
/// "file, then flags" is a plain JSON merge.
struct Invocation {
  std::string config_path;
  nlohmann::json defaults = nlohmann::json::object();
  nlohmann::json flags = nlohmann::json::object();
};

template <typename V>
void option(CLI::App* app, Invocation& inv, const std::string& name, const std::string& key,
            const std::string& help) {
  app->add_option_function<V>(name, [&inv, key](const V& v) { inv.flags[key] = v; }, help);
}

void flag(CLI::App* app, Invocation& inv, const std::string& name, const std::string& key, bool value,
          const std::string& help) {
  app->add_flag_callback(name, [&inv, key, value] { inv.flags[key] = value; }, help);
}

void add_common(CLI::App* app, Invocation& inv) {
  app->add_option("--config", inv.config_path, "flat JSON config; flags override its keys");
  option<std::uint64_t>(app, inv, "--seed", "seed", "seed of params and episode streams");
  option<std::size_t>(app, inv, "--threads", "threads", "worker threads for evaluation");
}

void add_shape(CLI::App* app, Invocation& inv) {
  option<std::size_t>(app, inv, "--n", "n", "classes per episode");
  option<std::size_t>(app, inv, "--k", "k", "support samples per class");
  option<std::size_t>(app, inv, "--q", "q", "query samples per class");
}

void add_model(CLI::App* app, Invocation& inv) {
  option<std::size_t>(app, inv, "--layers", "layers", "encoder layers (2, 4 or 6 in the reference setups)");
  option<std::size_t>(app, inv, "--heads", "heads", "attention heads");
}

RunConfig resolve(const Invocation& inv) {
  nlohmann::json merged = inv.defaults;
  if (!inv.config_path.empty()) {
    std::ifstream in(inv.config_path);
    if (!in) throw ConfigError("cannot read config file " + inv.config_path);
    nlohmann::json file;
    try {
      file = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(inv.config_path + ": " + e.what());
    }
    if (!file.is_object()) throw ConfigError(inv.config_path + ": config must be a JSON object");
    merged.update(file);
  }
  merged.update(inv.flags);
  return run_config_from_json(merged);
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError("missing --" + what + " path");
  if (!fs::is_regular_file(path)) throw DataError(what + " file not found: " + path);
}

void prepare_output(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f << text;
  if (!f) throw DataError("write failed: " + path);
}

void echo_config(std::ostream& out, const RunConfig& c) { out << "# config " << to_json(c).dump() << '\n'; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void check_dim(const ExtractorParams<float>& params, const EmbeddingDataset& ds) {
  if (params.dim != ds.dim()) {
    throw ConfigError("checkpoint dim " + std::to_string(params.dim) + " does not match dataset dim " +
                      std::to_string(ds.dim()));
  }
}

std::string epoch_line(const EpochRecord& r) {
  char buf[256];
  int n = std::snprintf(buf, sizeof buf, "epoch %4zu  loss %.6f  (classifier %.6f, prototype %.6f)  steps %llu",
                        r.epoch, r.mean_total_loss, r.mean_classifier_loss, r.mean_prototype_loss,
                        static_cast<unsigned long long>(r.optimizer_steps));
  std::string s(buf, static_cast<std::size_t>(n));
  if (r.val_accuracy) {
    std::snprintf(buf, sizeof buf, "  val %.2f%% +- %.2f%%", 100 * *r.val_accuracy, 100 * r.val_ci95.value_or(0));
    s += buf;
  }
  return s;
}

int cmd_train(RunConfig c, std::ostream& out, std::ostream& err) {
  require_file(c.train_path, "train");
  if (!c.val_path.empty()) require_file(c.val_path, "val");
  if (!c.resume.empty()) require_file(c.resume, "resume");
  if (c.out.empty()) throw ConfigError("train needs --out DIR");
  if (c.bypass_module) throw ConfigError("--bypass-module leaves nothing to train");
  if (c.train.checkpoint_every > 0 && c.train.checkpoint_dir.empty()) c.train.checkpoint_dir = c.out;
  c.train.validate();
  fs::create_directories(c.out);
  echo_config(out, c);

  const auto train_set = load_pfe1(c.train_path);
  std::optional<EmbeddingDataset> val_set;
  if (!c.val_path.empty()) val_set = load_pfe1(c.val_path);
  std::optional<TrainState> resume;
  if (!c.resume.empty()) resume = load_checkpoint(c.resume).state;

  TrainHooks hooks;
  hooks.log = [&](const std::string& m) { err << m << '\n'; };
  hooks.on_epoch = [&](const EpochRecord& r) { out << epoch_line(r) << '\n' << std::flush; };
  const auto t0 = std::chrono::steady_clock::now();
  const auto state = train(train_set, val_set ? &*val_set : nullptr, c.train, std::move(resume), hooks);
  err << "trained in " << seconds_since(t0) << " s\n";

  const auto checkpoint = (fs::path(c.out) / "final.pfck").string();
  save_checkpoint(state, c.train, checkpoint);
  nlohmann::json history = nlohmann::json::array();
  for (const auto& r : state.history) history.push_back(to_json(r));
  nlohmann::json doc = {{"effective_config", to_json(c)},
                        {"best_epoch", state.best_epoch},
                        {"best_val_accuracy", state.best_val_accuracy ? nlohmann::json(*state.best_val_accuracy)
                                                                      : nlohmann::json()},
                        {"history", history}};
  write_text((fs::path(c.out) / "history.json").string(), doc.dump(2) + "\n");
  out << "checkpoint " << checkpoint << "  (best epoch " << state.best_epoch << ")\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& c, std::ostream& out, std::ostream& err) {
  require_file(c.test_path, "test");
  if (!c.checkpoint.empty()) require_file(c.checkpoint, "checkpoint");
  if (!c.bypass_module && c.checkpoint.empty()) {
    throw ConfigError("eval needs --checkpoint unless --bypass-module is given");
  }
  if (!c.out.empty()) prepare_output(c.out);

  const auto ds = load_pfe1(c.test_path);
  std::optional<Checkpoint> ck;
  if (!c.checkpoint.empty()) {
    ck = load_checkpoint(c.checkpoint);
    check_dim(ck->state.best_params, ds);
  }
  EvalSettings s{.shape = c.train.shape,
                 .episodes = c.episodes,
                 .seed = c.train.seed,
                 .bypass_module = c.bypass_module,
                 .use_prototype_loss = ck ? ck->config.use_prototype_loss : c.train.use_prototype_loss,
                 .threads = c.train.threads};
  const auto report = evaluate(ck ? &ck->state.best_params : nullptr, ds, s);
  err << "evaluated " << report.episode_count << " episodes in " << report.wall_seconds << " s\n";

  echo_config(out, c);
  out << format_table(report);
  if (!c.out.empty()) {
    auto doc = to_json(report);
    doc["effective_config"] = to_json(c);
    write_text(c.out, doc.dump(2) + "\n");
  }
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& c, std::ostream& out, std::ostream& err) {
  ModuleCheckSpec spec;
  spec.dim = c.dim;
  spec.heads = c.train.heads;
  spec.layers = c.train.layers;
  spec.shape = c.train.shape;
  spec.seed = c.train.seed;
  spec.objective.use_prototype_loss = c.train.use_prototype_loss;
  spec.options = {.step = c.step, .tolerance = c.tol, .analytic_fault_scale = c.inject_fault};

  const auto t0 = std::chrono::steady_clock::now();
  const auto report = module_gradcheck(spec);
  err << "gradcheck took " << seconds_since(t0) << " s\n";

  echo_config(out, c);
  out << format_report(report);
  if (!c.out.empty()) {
    prepare_output(c.out);
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : report.entries) {
      entries.push_back({{"name", e.name},
                         {"size", e.size},
                         {"max_abs_error", e.max_abs_error},
                         {"max_rel_error", e.max_rel_error},
                         {"passed", e.passed}});
    }
    nlohmann::json doc = {{"effective_config", to_json(c)},
                          {"passed", report.passed},
                          {"max_rel_error", report.max_rel_error},
                          {"entries", entries}};
    write_text(c.out, doc.dump(2) + "\n");
  }
  return report.passed ? kExitOk : kExitConfig;
}

int cmd_inspect(const std::string& path, std::ostream& out) {
  require_file(path, "input");
  const auto s = inspect_pfe1(path);
  char hash[64];
  out << "file     " << path << '\n';
  out << "bytes    " << s.file_size << '\n';
  out << "version  " << s.version << '\n';
  out << "dim      " << s.dim << '\n';
  out << "classes  " << s.classes.size() << '\n';
  std::uint64_t total = 0;
  for (const auto& [name, count] : s.classes) {
    out << "  " << name << ' ' << count << '\n';
    total += count;
  }
  out << "samples  " << total << '\n';
  out << "nonfinite " << s.nonfinite_values << '\n';
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(s.stored_hash));
  out << "hash     " << hash << (s.hash_ok() ? " ok" : " MISMATCH") << '\n';
  return s.hash_ok() && s.nonfinite_values == 0 ? kExitOk : kExitData;
}

int cmd_export(const RunConfig& c, std::ostream& out) {
  require_file(c.test_path, "test");
  require_file(c.checkpoint, "checkpoint");
  if (c.out.empty()) throw ConfigError("export-plot needs --out PATH");
  prepare_output(c.out);

  const auto ds = load_pfe1(c.test_path);
  const auto ck = load_checkpoint(c.checkpoint);
  check_dim(ck.state.best_params, ds);
  const auto records = export_plot_data(ck.state.best_params, ds, c.train.shape, c.train.seed, c.tasks, c.out);
  write_text(c.out + ".config.json", to_json(c).dump(2) + "\n");
  echo_config(out, c);
  out << "wrote " << records << " records to " << c.out << '\n';
  return kExitOk;
}

int cmd_compare(const RunConfig& c, std::ostream& out, std::ostream& err) {
  require_file(c.test_path, "test");
  for (const auto& p : c.checkpoints) require_file(p, "checkpoint");
  if (!c.out.empty()) prepare_output(c.out);

  const auto ds = load_pfe1(c.test_path);
  std::vector<Checkpoint> cks;
  for (const auto& p : c.checkpoints) {
    cks.push_back(load_checkpoint(p));
    check_dim(cks.back().state.best_params, ds);
  }
  std::optional<ExtractorParams<float>> untrained;
  if (c.untrained) untrained = init_params(ds.dim(), c.train.layers, c.train.heads, c.train.seed);

  std::vector<ModeSpec> modes;
  modes.push_back({"mean prototype (bypass)", nullptr, true, c.train.use_prototype_loss});
  if (untrained) modes.push_back({"module, untrained", &*untrained, false, c.train.use_prototype_loss});
  for (std::size_t i = 0; i < cks.size(); ++i) {
    const bool proto = cks[i].config.use_prototype_loss;
    modes.push_back({fs::path(c.checkpoints[i]).stem().string() + (proto ? " (cls+proto)" : " (cls only)"),
                     &cks[i].state.best_params, false, proto});
  }
  EvalSettings s{.shape = c.train.shape,
                 .episodes = c.episodes,
                 .seed = c.train.seed,
                 .bypass_module = false,
                 .use_prototype_loss = c.train.use_prototype_loss,
                 .threads = c.train.threads};
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = compare_modes(ds, s, modes);
  err << "compared " << results.size() << " modes in " << seconds_since(t0) << " s\n";

  echo_config(out, c);
  out << format_comparison(results);
  if (!c.out.empty()) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : results) rows.push_back({{"label", r.label}, {"report", to_json(r.report)}});
    nlohmann::json doc = {{"effective_config", to_json(c)}, {"modes", rows}};
    write_text(c.out, doc.dump(2) + "\n");
  }
  return kExitOk;
}

int cmd_synth(const GaussianSpec& spec, const std::string& path, std::ostream& out) {
  if (path.empty()) throw ConfigError("synth needs --out PATH");
  prepare_output(path);
  save_pfe1(make_gaussian_dataset(spec), path);
  out << "wrote " << spec.classes << " classes x " << spec.samples_per_class << " samples, dim " << spec.dim
      << " to " << path << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Episodic few-shot classification with a learned prototype extractor", "protox"};
  app.require_subcommand(1);
  Invocation inv;

  auto* train_cmd = app.add_subcommand("train", "train the prototype extractor");
  add_common(train_cmd, inv);
  add_shape(train_cmd, inv);
  add_model(train_cmd, inv);
  option<std::string>(train_cmd, inv, "--train", "train", "training PFE1 file");
  option<std::string>(train_cmd, inv, "--val", "val", "validation PFE1 file (enables best-epoch selection)");
  option<std::string>(train_cmd, inv, "--resume", "resume", "checkpoint to continue from");
  option<std::string>(train_cmd, inv, "--out", "out", "output directory for final.pfck and history.json");
  option<std::size_t>(train_cmd, inv, "--epochs", "epochs", "epochs");
  option<std::size_t>(train_cmd, inv, "--tasks-per-epoch", "tasks_per_epoch", "episodes per epoch");
  option<std::size_t>(train_cmd, inv, "--accumulation", "accumulation", "episodes per optimizer step");
  option<double>(train_cmd, inv, "--lr", "lr", "Adam learning rate");
  option<std::uint64_t>(train_cmd, inv, "--val-episodes", "val_episodes", "validation episodes per epoch");
  option<std::size_t>(train_cmd, inv, "--checkpoint-every", "checkpoint_every", "epochs between checkpoints");
  option<std::string>(train_cmd, inv, "--checkpoint-dir", "checkpoint_dir", "directory of periodic checkpoints");
  flag(train_cmd, inv, "--no-prototype-loss", "use_prototype_loss", false, "train on the classifier loss alone");
  flag(train_cmd, inv, "--bypass-module", "bypass_module", true, "rejected: the baseline has no parameters");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate on test episodes");
  add_common(eval_cmd, inv);
  add_shape(eval_cmd, inv);
  option<std::string>(eval_cmd, inv, "--test", "test", "test PFE1 file");
  option<std::string>(eval_cmd, inv, "--checkpoint", "checkpoint", "trained checkpoint");
  option<std::uint64_t>(eval_cmd, inv, "--episodes", "episodes", "test episodes");
  option<std::string>(eval_cmd, inv, "--out", "out", "JSON report path");
  flag(eval_cmd, inv, "--bypass-module", "bypass_module", true, "use support means as prototypes");
  flag(eval_cmd, inv, "--no-prototype-loss", "use_prototype_loss", false, "recorded in the report only");

  auto* grad_cmd = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  add_common(grad_cmd, inv);
  add_shape(grad_cmd, inv);
  add_model(grad_cmd, inv);
  option<std::size_t>(grad_cmd, inv, "--dim", "dim", "model width");
  option<double>(grad_cmd, inv, "--step", "step", "central-difference step");
  option<double>(grad_cmd, inv, "--tol", "tol", "pass threshold on the relative error");
  option<double>(grad_cmd, inv, "--inject-fault", "inject_fault", "scale one analytic gradient (negative control)");
  option<std::string>(grad_cmd, inv, "--out", "out", "JSON report path");
  flag(grad_cmd, inv, "--no-prototype-loss", "use_prototype_loss", false, "check the classifier loss alone");

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect", "summarize a PFE1 file without loading it");
  inspect_cmd->add_option("path", inspect_path, "PFE1 file")->required();

  auto* export_cmd = app.add_subcommand("export-plot", "dump queries and prototypes as JSON lines");
  add_common(export_cmd, inv);
  add_shape(export_cmd, inv);
  option<std::string>(export_cmd, inv, "--test", "test", "test PFE1 file");
  option<std::string>(export_cmd, inv, "--checkpoint", "checkpoint", "trained checkpoint");
  option<std::uint64_t>(export_cmd, inv, "--tasks", "tasks", "episodes to export");
  option<std::string>(export_cmd, inv, "--out", "out", "JSONL output path");

  auto* compare_cmd = app.add_subcommand("compare", "paired comparison of prototype modes");
  add_common(compare_cmd, inv);
  add_shape(compare_cmd, inv);
  add_model(compare_cmd, inv);
  option<std::string>(compare_cmd, inv, "--test", "test", "test PFE1 file");
  option<std::vector<std::string>>(compare_cmd, inv, "--checkpoint", "checkpoints", "trained checkpoint (repeatable)");
  option<std::uint64_t>(compare_cmd, inv, "--episodes", "episodes", "test episodes");
  option<std::string>(compare_cmd, inv, "--out", "out", "JSON report path");
  flag(compare_cmd, inv, "--untrained", "untrained", true, "add a freshly initialized module");

  GaussianSpec synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic Gaussian-cluster PFE1 file");
  synth_cmd->add_option("--out", synth_out, "PFE1 output path")->required();
  synth_cmd->add_option("--classes", synth.classes, "classes")->capture_default_str();
  synth_cmd->add_option("--samples", synth.samples_per_class, "samples per class")->capture_default_str();
  synth_cmd->add_option("--dim", synth.dim, "embedding dim")->capture_default_str();
  synth_cmd->add_option("--mean-std", synth.mean_std, "std of the class means")->capture_default_str();
  synth_cmd->add_option("--noise-std", synth.noise_std, "within-class std")->capture_default_str();
  synth_cmd->add_option("--noisy-dims", synth.noisy_dims, "leading dims with inflated noise")->capture_default_str();
  synth_cmd->add_option("--noisy-scale", synth.noisy_scale, "noise multiplier of those dims")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "seed")->capture_default_str();

  std::vector<std::string> storage;
  storage.reserve(args.size() + 1);
  storage.push_back("protox");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*inspect_cmd) return cmd_inspect(inspect_path, out);
    if (*synth_cmd) return cmd_synth(synth, synth_out, out);
    if (*grad_cmd) inv.defaults = {{"n", 3}, {"k", 2}, {"q", 2}, {"heads", 4}, {"layers", 2}};
    const RunConfig config = resolve(inv);
    if (*train_cmd) return cmd_train(config, out, err);
    if (*eval_cmd) return cmd_eval(config, out, err);
    if (*grad_cmd) return cmd_gradcheck(config, out, err);
    if (*export_cmd) return cmd_export(config, out);
    if (*compare_cmd) return cmd_compare(config, out, err);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kExitData;
  } catch (const SamplingError& e) {
    err << "sampling error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "file error: " << e.what() << '\n';
    return kExitData;
  } catch (const Error& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace protox::cli
