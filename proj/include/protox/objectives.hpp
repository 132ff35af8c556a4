#pragma once

// Training objective over one episode:
//
//   dist(a, b)      = squared Euclidean distance
//   classifier loss = mean over queries of -log softmax_c(-dist(q, proto_c))[label]
//   prototype loss  = exp( (1/N) * (W + 1) / (B + 1) )
//       W = sum_c sum_{i,j in K x K} dist(p_ci, p_cj)              (within-class)
//       B = sum_{m<n} sum_{i,j in K x K} dist(p_mi, p_nj)          (between-class)
//   total           = classifier loss + prototype loss
//
// p_ci is the sub-prototype built from class c's support with row i left out
// (for K = 1 the single sub-support is the full support).

#include <vector>

#include "protox/extractor.hpp"
#include "protox/graph.hpp"
#include "protox/sampler.hpp"

namespace protox {

/// Leave-one-out sub-supports of a K x d class support, each with its own
/// token. K = 1 yields one slice equal to the full support.
template <typename T>
std::vector<SupportSlice<T>> build_sub_supports(const Tensor<T>& class_embeddings, int class_id);

/// N*K sub-prototypes stored class-major as rows of an (N*K) x d matrix.
template <typename T>
struct SubPrototypeSet {
  std::size_t way = 0;
  std::size_t shot = 0;
  Tensor<T> vectors;

  std::span<const T> at(std::size_t c, std::size_t i) const { return vectors.row(c * shot + i); }
};

/// Graph form over an (N*K) x d class-major matrix of sub-prototypes.
/// Raises UsageError when N < 2.
template <typename T>
typename Graph<T>::Var prototype_contrastive_loss(Graph<T>& g, typename Graph<T>::Var sub_prototypes,
                                                  std::size_t way, std::size_t shot);

template <typename T>
T prototype_contrastive_loss(const SubPrototypeSet<T>& subs);

template <typename T>
struct ClassifierOutput {
  typename Graph<T>::Var loss;    // scalar
  typename Graph<T>::Var logits;  // queries x N, logits = -dist
};

/// Raises DataError when a label falls outside [0, N).
template <typename T>
ClassifierOutput<T> classifier_loss(Graph<T>& g, typename Graph<T>::Var prototypes,
                                    typename Graph<T>::Var queries, std::span<const int> labels);

/// argmax over a logits row; ties go to the lowest class index.
template <typename T>
std::size_t predict(std::span<const T> logits_row);

struct ObjectiveConfig {
  bool use_prototype_loss = true;
  /// Use plain support means as prototypes (the mean-prototype baseline).
  bool bypass_module = false;
};

template <typename T>
struct EpisodeLosses {
  using Var = typename Graph<T>::Var;
  Var classifier;
  Var prototype;
  Var total;
  Var logits;
  Var prototypes;  // N x d
};

/// Builds the whole episode objective on `g`. `model` may be null only when
/// config.bypass_module is set.
template <typename T>
EpisodeLosses<T> episode_objective(Graph<T>& g, const BoundExtractor<T>* model, const Episode& episode,
                                   const ObjectiveConfig& config);

/// Scalar values of an episode objective, evaluated without gradients.
struct EpisodeLossValues {
  double classifier = 0;
  double prototype = 0;
  double total = 0;
  std::vector<std::size_t> predictions;
};

template <typename T>
EpisodeLossValues evaluate_objective(const ExtractorParams<T>* params, const Episode& episode,
                                     const ObjectiveConfig& config);

}  // namespace protox
