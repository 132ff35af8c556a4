#pragma once

// Command-line front end. Kept as a library so tests can drive it in-process.
//
// Exit codes:
//   0  success
//   1  configuration or usage error (also: gradcheck failed)
//   2  data or format error (missing file, corrupt dataset or checkpoint)
//   3  numeric abort (non-finite loss or gradient)

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "protox/trainer.hpp"

namespace protox::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

/// Everything a run can be configured with. The JSON form is flat: the
/// training keys of TrainConfig plus the keys below.
struct RunConfig {
  TrainConfig train;
  std::uint64_t episodes = 2000;  // "episodes"
  bool bypass_module = false;     // "bypass_module"
  std::string train_path;         // "train"
  std::string val_path;           // "val"
  std::string test_path;          // "test"
  std::string checkpoint;         // "checkpoint"
  std::vector<std::string> checkpoints;  // "checkpoints", compare only
  bool untrained = false;         // "untrained", compare adds a fresh module
  std::string resume;             // "resume"
  std::string out;                // "out"
  std::uint64_t tasks = 8;        // "tasks", episodes written by export-plot
  std::size_t dim = 16;           // "dim", gradcheck model width
  double step = 1e-3;             // "step", gradcheck difference step
  double tol = 1e-4;              // "tol", gradcheck threshold
  double inject_fault = 1.0;      // "inject_fault", gradcheck negative control
};

nlohmann::json to_json(const RunConfig& c);
/// Unknown keys and ill-typed values raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);

/// `args` excludes the program name. Results go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace protox::cli
