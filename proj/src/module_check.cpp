#include "protox/module_check.hpp"

#include <random>

#include "protox/synthetic.hpp"

namespace protox {

GradcheckReport module_gradcheck(const ModuleCheckSpec& spec) {
  GaussianSpec data;
  data.classes = spec.shape.way;
  data.samples_per_class = spec.shape.shot + spec.shape.queries;
  data.dim = spec.dim;
  data.seed = spec.seed;
  const auto ds = make_gaussian_dataset(data);
  const auto episode = sample_episode(ds, spec.shape, spec.seed, 0);

  auto params = init_params(spec.dim, spec.layers, spec.heads, spec.seed).cast<double>();
  std::mt19937_64 rng(spec.seed ^ 0x9E3779B97F4A7C15ULL);
  std::normal_distribution<double> noise(0.0, spec.jitter);
  for (auto& nt : params.named())
    for (auto& v : nt.tensor->data()) v += noise(rng);

  const auto config = spec.objective;
  LossBuilder build = [&](Graph<double>& g) {
    const auto model = bind(g, params);
    return episode_objective(g, &model, episode, config).total;
  };
  return gradcheck(build, params.named(), spec.options);
}

}  // namespace protox
