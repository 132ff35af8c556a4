#include "protox/sampler.hpp"

#include <algorithm>
#include <numeric>

namespace protox {

std::vector<std::size_t> partial_fisher_yates(SplitMix64& rng, std::size_t n, std::size_t m) {
  if (m > n) throw UsageError("cannot pick " + std::to_string(m) + " of " + std::to_string(n) + " items");
  std::vector<std::size_t> a(n);
  std::iota(a.begin(), a.end(), std::size_t{0});
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next() % (n - i));
    std::swap(a[i], a[j]);
  }
  a.resize(m);
  return a;
}

std::vector<std::size_t> eligible_classes(const EmbeddingDataset& ds, std::size_t min_samples) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < ds.class_count(); ++c)
    if (ds.at(c).count >= min_samples) out.push_back(c);
  return out;
}

Tensor<float> Episode::class_support(std::size_t c) const {
  const std::size_t k = shape.shot;
  std::vector<float> v(support.data().begin() + static_cast<std::ptrdiff_t>(c * k * dim),
                       support.data().begin() + static_cast<std::ptrdiff_t>((c + 1) * k * dim));
  return Tensor<float>::matrix(k, dim, std::move(v));
}

Episode sample_episode(const EmbeddingDataset& ds, const EpisodeShape& shape, std::uint64_t seed,
                       std::uint64_t index) {
  if (shape.way < 1 || shape.shot < 1 || shape.queries < 1) {
    throw UsageError("episode shape needs way, shot and queries >= 1");
  }
  const std::size_t per_class = shape.shot + shape.queries;
  const auto eligible = eligible_classes(ds, per_class);
  if (eligible.size() < shape.way) {
    throw SamplingError(std::to_string(shape.way) + "-way episodes need " + std::to_string(shape.way) +
                        " classes with at least " + std::to_string(per_class) + " samples; only " +
                        std::to_string(eligible.size()) + " qualify");
  }

  SplitMix64 rng(seed ^ index);
  Episode ep;
  ep.shape = shape;
  ep.dim = ds.dim();
  ep.seed = seed;
  ep.index = index;

  const std::size_t d = ds.dim();
  std::vector<float> support;
  std::vector<float> query;
  support.reserve(shape.way * shape.shot * d);
  query.reserve(shape.way * shape.queries * d);

  for (std::size_t pick : partial_fisher_yates(rng, eligible.size(), shape.way)) {
    ep.class_indices.push_back(eligible[pick]);
  }
  for (std::size_t label = 0; label < shape.way; ++label) {
    const auto& cls = ds.at(ep.class_indices[label]);
    ep.class_names.push_back(cls.name);
    const auto samples = partial_fisher_yates(rng, cls.count, per_class);
    ep.support_samples.emplace_back(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(shape.shot));
    ep.query_samples.emplace_back(samples.begin() + static_cast<std::ptrdiff_t>(shape.shot), samples.end());
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto row = cls.sample(samples[i], d);
      auto& dst = i < shape.shot ? support : query;
      dst.insert(dst.end(), row.begin(), row.end());
      if (i >= shape.shot) ep.query_labels.push_back(static_cast<int>(label));
    }
  }
  ep.support = Tensor<float>::matrix(shape.way * shape.shot, d, std::move(support));
  ep.query = Tensor<float>::matrix(shape.way * shape.queries, d, std::move(query));
  return ep;
}

EpisodeStream::EpisodeStream(const EmbeddingDataset& ds, EpisodeShape shape, std::uint64_t seed,
                             std::uint64_t count)
    : ds_(&ds), shape_(shape), seed_(seed), count_(count) {
  if (count < 1) throw UsageError("episode stream needs count >= 1");
}

}  // namespace protox
