#pragma once

#include <cstdint>

#include "protox/gradcheck.hpp"
#include "protox/objectives.hpp"

namespace protox {

/// Gradient check of the full episode objective (extractor + both losses)
/// on a random episode, in double precision.
struct ModuleCheckSpec {
  std::size_t dim = 16;
  std::size_t heads = 4;
  std::size_t layers = 2;
  EpisodeShape shape{3, 2, 2};
  std::uint64_t seed = 0;
  /// Std of the noise added on top of the regular initialization, so that
  /// biases, gains and attention patterns are generic rather than trivial.
  double jitter = 0.2;
  ObjectiveConfig objective;
  GradcheckOptions options;
};

GradcheckReport module_gradcheck(const ModuleCheckSpec& spec);

}  // namespace protox
