#pragma once

#include <functional>
#include <string>
#include <vector>

#include "protox/graph.hpp"

namespace protox {

struct GradcheckOptions {
  double step = 1e-3;       ///< central-difference step h
  double tolerance = 1e-4;  ///< pass threshold on the per-tensor error
  /// Lower bound of the error denominator. Some gradients are exactly zero
  /// (an attention key bias shifts every score of a row equally), and their
  /// finite differences are pure roundoff; without a floor that noise would
  /// be divided by itself.
  double scale_floor = 1e-6;
  /// Multiplies the analytic gradient of the first tensor; a non-unit value
  /// turns a run into a negative control.
  double analytic_fault_scale = 1.0;
};

struct GradcheckEntry {
  std::string name;
  std::size_t size = 0;
  double max_abs_error = 0;
  /// max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|, scale_floor)
  double max_rel_error = 0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double max_rel_error = 0;
  bool passed = false;
};

/// Builds a scalar loss on a fresh graph, binding the checked tensors with
/// Graph::parameter(). Must be deterministic.
using LossBuilder = std::function<Graph<double>::Var(Graph<double>&)>;

/// Compares reverse-mode gradients of `build` against central differences
/// for every element of every tensor in `params`. The tensors are perturbed
/// in place and restored. Raises NumericError naming the tensor if either
/// gradient is not finite.
GradcheckReport gradcheck(const LossBuilder& build, const std::vector<NamedTensor<double>>& params,
                          const GradcheckOptions& options = {});

std::string format_report(const GradcheckReport& report);

}  // namespace protox
