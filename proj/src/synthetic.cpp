#include "protox/synthetic.hpp"

#include <random>

#include "protox/errors.hpp"

namespace protox {

EmbeddingDataset make_gaussian_dataset(const GaussianSpec& spec) {
  if (spec.classes == 0 || spec.samples_per_class == 0 || spec.dim == 0) {
    throw ConfigError("synthetic dataset needs classes, samples and dim >= 1");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<EmbeddingClass> classes;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    std::vector<double> mean(spec.dim);
    for (auto& m : mean) m = spec.mean_std * normal(rng);
    EmbeddingClass ec;
    ec.name = "class_" + std::to_string(c);
    ec.count = spec.samples_per_class;
    ec.values.reserve(spec.samples_per_class * spec.dim);
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      for (std::size_t j = 0; j < spec.dim; ++j) {
        const double std = spec.noise_std * (j < spec.noisy_dims ? spec.noisy_scale : 1.0);
        ec.values.push_back(static_cast<float>(mean[j] + std * normal(rng)));
      }
    }
    classes.push_back(std::move(ec));
  }
  return EmbeddingDataset(spec.dim, std::move(classes));
}

}  // namespace protox
