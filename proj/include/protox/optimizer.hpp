#pragma once

#include <cstdint>
#include <vector>

#include "protox/tensor.hpp"

namespace protox {

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> m;  // first moments, one per parameter tensor
  std::vector<Tensor<T>> v;  // second moments
};

template <typename T>
AdamState<T> make_adam_state(const std::vector<NamedTensor<T>>& params, const AdamHyper& hyper = {});

/// One bias-corrected Adam update from each tensor's grad buffer:
///   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
///   theta -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
/// Arithmetic is carried out in double. Raises NumericError naming the
/// first parameter with a non-finite gradient, before anything is modified.
template <typename T>
void adam_step(const std::vector<NamedTensor<T>>& params, AdamState<T>& state);

}  // namespace protox
