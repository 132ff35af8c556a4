#include "protox/optimizer.hpp"

#include <cmath>

namespace protox {

template <typename T>
AdamState<T> make_adam_state(const std::vector<NamedTensor<T>>& params, const AdamHyper& hyper) {
  AdamState<T> s;
  s.hyper = hyper;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor->shape());
    s.v.emplace_back(p.tensor->shape());
  }
  return s;
}

template <typename T>
void adam_step(const std::vector<NamedTensor<T>>& params, AdamState<T>& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("optimizer state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                         std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.tensor->shape() != state.m[i].shape()) {
      throw DimensionError("optimizer state for '" + p.name + "' has shape " +
                           shape_string(state.m[i].shape()) + ", parameter has " +
                           shape_string(p.tensor->shape()));
    }
    for (T g : p.tensor->grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("non-finite gradient in parameter '" + p.name + "'");
      }
    }
  }

  const auto& h = state.hyper;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].tensor->data();
    auto grad = params[i].tensor->grad();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double g = grad[j];
      const double mj = h.beta1 * static_cast<double>(m[j]) + (1.0 - h.beta1) * g;
      const double vj = h.beta2 * static_cast<double>(v[j]) + (1.0 - h.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = h.lr * (mj / c1) / (std::sqrt(vj / c2) + h.eps);
      theta[j] = static_cast<T>(static_cast<double>(theta[j]) - update);
    }
  }
}

template AdamState<float> make_adam_state(const std::vector<NamedTensor<float>>&, const AdamHyper&);
template AdamState<double> make_adam_state(const std::vector<NamedTensor<double>>&, const AdamHyper&);
template void adam_step(const std::vector<NamedTensor<float>>&, AdamState<float>&);
template void adam_step(const std::vector<NamedTensor<double>>&, AdamState<double>&);

}  // namespace protox
