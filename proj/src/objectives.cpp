#include "protox/objectives.hpp"

namespace protox {

template <typename T>
std::vector<SupportSlice<T>> build_sub_supports(const Tensor<T>& class_embeddings, int class_id) {
  if (class_embeddings.empty()) throw UsageError("build_sub_supports: empty class support");
  const std::size_t k = class_embeddings.rows(), d = class_embeddings.cols();
  std::vector<SupportSlice<T>> out;
  if (k == 1) {
    out.emplace_back(class_id, Tensor<T>::matrix(1, d, {class_embeddings.data().begin(),
                                                        class_embeddings.data().end()}));
    return out;
  }
  out.reserve(k);
  for (std::size_t skip = 0; skip < k; ++skip) {
    std::vector<T> rows;
    rows.reserve((k - 1) * d);
    for (std::size_t r = 0; r < k; ++r) {
      if (r == skip) continue;
      const auto row = class_embeddings.row(r);
      rows.insert(rows.end(), row.begin(), row.end());
    }
    out.emplace_back(class_id, Tensor<T>::matrix(k - 1, d, std::move(rows)));
  }
  return out;
}

template <typename T>
typename Graph<T>::Var prototype_contrastive_loss(Graph<T>& g, typename Graph<T>::Var sub_prototypes,
                                                  std::size_t way, std::size_t shot) {
  if (way < 2) throw UsageError("prototype contrastive loss needs at least 2 classes");
  const std::size_t n = way * shot;
  if (g.value(sub_prototypes).rows() != n) {
    throw DimensionError("expected " + std::to_string(n) + " sub-prototypes, got " +
                         shape_string(g.shape(sub_prototypes)));
  }
  std::vector<T> within(n * n, T{0});
  std::vector<T> between(n * n, T{0});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t cr = r / shot, cs = s / shot;
      if (cr == cs) within[r * n + s] = 1;
      if (cr < cs) between[r * n + s] = 1;
    }
  }
  auto dist = g.pairwise_sq_dist(sub_prototypes, sub_prototypes);
  auto numerator = g.add_scalar(g.weighted_sum(dist, std::move(within)), T{1});
  auto denominator = g.add_scalar(g.weighted_sum(dist, std::move(between)), T{1});
  return g.exp(g.scale(g.div(numerator, denominator), T{1} / static_cast<T>(way)));
}

template <typename T>
T prototype_contrastive_loss(const SubPrototypeSet<T>& subs) {
  Graph<T> g(false);
  auto v = g.constant(subs.vectors);
  return g.value(prototype_contrastive_loss(g, v, subs.way, subs.shot))[0];
}

template <typename T>
ClassifierOutput<T> classifier_loss(Graph<T>& g, typename Graph<T>::Var prototypes,
                                    typename Graph<T>::Var queries, std::span<const int> labels) {
  const std::size_t way = g.value(prototypes).rows();
  const std::size_t nq = g.value(queries).rows();
  if (labels.size() != nq) {
    throw DimensionError(std::to_string(labels.size()) + " labels for " + std::to_string(nq) + " queries");
  }
  std::vector<T> pick(nq * way, T{0});
  for (std::size_t q = 0; q < nq; ++q) {
    if (labels[q] < 0 || static_cast<std::size_t>(labels[q]) >= way) {
      throw DataError("query label " + std::to_string(labels[q]) + " outside [0, " + std::to_string(way) + ")");
    }
    pick[q * way + static_cast<std::size_t>(labels[q])] = T{-1} / static_cast<T>(nq);
  }
  auto logits = g.scale(g.pairwise_sq_dist(queries, prototypes), T{-1});
  auto loss = g.weighted_sum(g.log_softmax_lastdim(logits), std::move(pick));
  return {loss, logits};
}

template <typename T>
std::size_t predict(std::span<const T> logits_row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits_row.size(); ++c)
    if (logits_row[c] > logits_row[best]) best = c;
  return best;
}

template <typename T>
EpisodeLosses<T> episode_objective(Graph<T>& g, const BoundExtractor<T>* model, const Episode& episode,
                                   const ObjectiveConfig& config) {
  using Var = typename Graph<T>::Var;
  if (!config.bypass_module && model == nullptr) {
    throw UsageError("episode_objective: extractor parameters are required unless bypassing the module");
  }
  const std::size_t way = episode.shape.way;
  auto prototype_of = [&](const SupportSlice<T>& slice) -> Var {
    if (config.bypass_module) return g.constant(slice.token());
    return extract_prototype(g, *model, slice);
  };

  std::vector<Var> protos;
  std::vector<Var> subs;
  for (std::size_t c = 0; c < way; ++c) {
    auto support = episode.class_support(c).template cast<T>();
    if (config.use_prototype_loss) {
      for (const auto& s : build_sub_supports(support, static_cast<int>(c))) subs.push_back(prototype_of(s));
    }
    protos.push_back(prototype_of(SupportSlice<T>(static_cast<int>(c), std::move(support))));
  }

  EpisodeLosses<T> out;
  out.prototypes = g.concat_rows(protos);
  auto queries = g.constant(episode.query.template cast<T>());
  auto cls = classifier_loss(g, out.prototypes, queries, episode.query_labels);
  out.classifier = cls.loss;
  out.logits = cls.logits;
  if (config.use_prototype_loss) {
    const std::size_t per_class = subs.size() / way;
    out.prototype = prototype_contrastive_loss(g, g.concat_rows(subs), way, per_class);
  } else {
    out.prototype = g.constant(Tensor<T>::scalar(T{0}));
  }
  out.total = g.add(out.classifier, out.prototype);
  return out;
}

template <typename T>
EpisodeLossValues evaluate_objective(const ExtractorParams<T>* params, const Episode& episode,
                                     const ObjectiveConfig& config) {
  Graph<T> g(false);
  BoundExtractor<T> model;
  if (params) model = bind(g, *params);
  auto losses = episode_objective(g, params ? &model : nullptr, episode, config);
  EpisodeLossValues out;
  out.classifier = g.value(losses.classifier)[0];
  out.prototype = g.value(losses.prototype)[0];
  out.total = g.value(losses.total)[0];
  const auto& logits = g.value(losses.logits);
  for (std::size_t q = 0; q < logits.rows(); ++q) out.predictions.push_back(predict(logits.row(q)));
  return out;
}

#define PROTOX_INSTANTIATE(T)                                                                           \
  template std::vector<SupportSlice<T>> build_sub_supports(const Tensor<T>&, int);                      \
  template Graph<T>::Var prototype_contrastive_loss(Graph<T>&, Graph<T>::Var, std::size_t, std::size_t); \
  template T prototype_contrastive_loss(const SubPrototypeSet<T>&);                                     \
  template ClassifierOutput<T> classifier_loss(Graph<T>&, Graph<T>::Var, Graph<T>::Var,                 \
                                               std::span<const int>);                                   \
  template std::size_t predict(std::span<const T>);                                                     \
  template EpisodeLosses<T> episode_objective(Graph<T>&, const BoundExtractor<T>*, const Episode&,      \
                                              const ObjectiveConfig&);                                  \
  template EpisodeLossValues evaluate_objective(const ExtractorParams<T>*, const Episode&,              \
                                                const ObjectiveConfig&);

PROTOX_INSTANTIATE(float)
PROTOX_INSTANTIATE(double)

#undef PROTOX_INSTANTIATE

}  // namespace protox
