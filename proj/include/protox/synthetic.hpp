#pragma once

#include <cstdint>

#include "protox/dataset.hpp"

namespace protox {

/// Gaussian class clusters: mean_c ~ N(0, mean_std^2 I); samples are
/// mean_c + noise where dimension j has std noise_std, multiplied by
/// noisy_scale for the first noisy_dims dimensions.
struct GaussianSpec {
  std::size_t classes = 20;
  std::size_t samples_per_class = 40;
  std::size_t dim = 64;
  double mean_std = 1.0;
  double noise_std = 1.0;
  std::size_t noisy_dims = 0;
  double noisy_scale = 1.0;
  std::uint64_t seed = 0;
};

EmbeddingDataset make_gaussian_dataset(const GaussianSpec& spec);

}  // namespace protox
