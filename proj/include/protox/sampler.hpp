#pragma once

// Deterministic N-way K-shot episode sampling.
//
// The algorithm is part of the reproducibility contract, so it is fixed:
//   rng    = SplitMix64(seed ^ index)
//   pick m of n items: a = [0, 1, ..., n-1];
//                      for i in [0, m): j = i + rng.next() % (n - i); swap(a[i], a[j])
//                      result = a[0..m)
//   classes: pick N of the eligible class indices (ascending order, classes
//            with at least K+Q samples); label = position in the pick.
//   samples: for each picked class in label order, pick K+Q of its sample
//            indices with the same rng; first K are support, next Q queries.

#include <cstdint>
#include <iterator>
#include <string>
#include <vector>

#include "protox/dataset.hpp"
#include "protox/tensor.hpp"

namespace protox {

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// First `m` entries of a partial Fisher-Yates shuffle of [0, n).
std::vector<std::size_t> partial_fisher_yates(SplitMix64& rng, std::size_t n, std::size_t m);

struct EpisodeShape {
  std::size_t way = 5;
  std::size_t shot = 5;
  std::size_t queries = 15;
};

struct Episode {
  EpisodeShape shape;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
  std::vector<std::size_t> class_indices;  // dataset class per label
  std::vector<std::string> class_names;
  /// way*shot rows, class-major: rows [c*shot, (c+1)*shot) belong to label c.
  Tensor<float> support;
  /// way*queries rows, class-major.
  Tensor<float> query;
  std::vector<int> query_labels;
  /// Dataset sample indices, for disjointness checks.
  std::vector<std::vector<std::size_t>> support_samples;
  std::vector<std::vector<std::size_t>> query_samples;

  /// shot x dim block of label c.
  Tensor<float> class_support(std::size_t c) const;
};

/// Class indices with at least `min_samples` samples, ascending.
std::vector<std::size_t> eligible_classes(const EmbeddingDataset& ds, std::size_t min_samples);

/// Raises SamplingError if fewer than `way` classes are eligible.
Episode sample_episode(const EmbeddingDataset& ds, const EpisodeShape& shape, std::uint64_t seed,
                       std::uint64_t index);

/// Range over sample_episode(ds, shape, seed, i) for i in [0, count).
class EpisodeStream {
 public:
  EpisodeStream(const EmbeddingDataset& ds, EpisodeShape shape, std::uint64_t seed, std::uint64_t count);

  class iterator {
   public:
    using iterator_category = std::input_iterator_tag;
    using value_type = Episode;
    using difference_type = std::ptrdiff_t;

    iterator() = default;
    iterator(const EpisodeStream* s, std::uint64_t i) : stream_(s), index_(i) {}
    Episode operator*() const { return stream_->at(index_); }
    iterator& operator++() {
      ++index_;
      return *this;
    }
    iterator operator++(int) {
      auto tmp = *this;
      ++index_;
      return tmp;
    }
    bool operator==(const iterator& o) const { return index_ == o.index_; }

   private:
    const EpisodeStream* stream_ = nullptr;
    std::uint64_t index_ = 0;
  };

  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, count_}; }
  std::uint64_t size() const { return count_; }
  Episode at(std::uint64_t index) const { return sample_episode(*ds_, shape_, seed_, index); }

 private:
  const EmbeddingDataset* ds_;
  EpisodeShape shape_;
  std::uint64_t seed_;
  std::uint64_t count_;
};

}  // namespace protox
