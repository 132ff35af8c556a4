#pragma once

// Prototype extraction encoder: a stack of pre-layernorm transformer layers
// without positional encoding. The input sequence is the class token (mean of
// the support rows) followed by the support rows; the transformed token row is
// the class prototype.

#include <cstdint>
#include <vector>

#include "protox/graph.hpp"
#include "protox/tensor.hpp"

namespace protox {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kInitStd = 0.02;

template <typename T>
struct EncoderLayer {
  Tensor<T> ln1_gain, ln1_bias;
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<T> ln2_gain, ln2_bias;
  Tensor<T> w1, b1;  // d -> 4d
  Tensor<T> w2, b2;  // 4d -> d
};

template <typename T>
struct ExtractorParams {
  std::size_t dim = 0;
  std::size_t heads = 0;
  std::vector<EncoderLayer<T>> layers;

  std::size_t layer_count() const { return layers.size(); }
  std::size_t parameter_count() const;

  /// Stable enumeration, e.g. "layer0.attn.wq". Checkpoints and the
  /// optimizer rely on this order.
  std::vector<NamedTensor<T>> named();
  std::vector<ConstNamedTensor<T>> named() const;

  void zero_grad();

  template <typename U>
  ExtractorParams<U> cast() const;
};

/// Scaled-normal weights (std 0.02), zero biases, unit layernorm gains.
/// Raises ConfigError unless dim % heads == 0 and layers >= 1.
ExtractorParams<float> init_params(std::size_t dim, std::size_t layers, std::size_t heads,
                                   std::uint64_t seed);

/// Closed-form count: layers * (12 d^2 + 13 d).
std::size_t expected_parameter_count(std::size_t dim, std::size_t layers);

/// Column mean of a K' x d matrix (K' >= 1).
template <typename T>
Tensor<T> make_token(const Tensor<T>& embeddings);

/// A class's support rows together with their token.
template <typename T>
class SupportSlice {
 public:
  SupportSlice(int class_id, Tensor<T> embeddings);

  int class_id() const { return class_id_; }
  const Tensor<T>& embeddings() const { return embeddings_; }
  const Tensor<T>& token() const { return token_; }
  std::size_t shot() const { return embeddings_.rows(); }

 private:
  int class_id_;
  Tensor<T> embeddings_;
  Tensor<T> token_;
};

/// ExtractorParams bound into one graph, so that many prototypes within an
/// episode share the same parameter leaves.
template <typename T>
struct BoundExtractor {
  struct Layer {
    using Var = typename Graph<T>::Var;
    Var ln1_gain, ln1_bias, wq, bq, wk, bk, wv, bv, wo, bo, ln2_gain, ln2_bias, w1, b1, w2, b2;
  };
  std::size_t dim = 0;
  std::size_t heads = 0;
  std::vector<Layer> layers;
};

/// trainable=false binds the weights as constants (no gradient writeback).
template <typename T>
BoundExtractor<T> bind(Graph<T>& g, ExtractorParams<T>& params, bool trainable = true);
template <typename T>
BoundExtractor<T> bind(Graph<T>& g, const ExtractorParams<T>& params);

/// Graph form: returns the [1 x d] prototype for the given slice.
template <typename T>
typename Graph<T>::Var extract_prototype(Graph<T>& g, const BoundExtractor<T>& model,
                                         const SupportSlice<T>& slice);

/// Pure form, no gradients.
template <typename T>
Tensor<T> extract_prototype(const ExtractorParams<T>& params, const SupportSlice<T>& slice);

extern template struct ExtractorParams<float>;
extern template struct ExtractorParams<double>;
extern template class SupportSlice<float>;
extern template class SupportSlice<double>;

}  // namespace protox
