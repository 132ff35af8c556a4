#include "protox/extractor.hpp"

#include <cmath>
#include <random>

namespace protox {

namespace {

template <typename T, typename Layer, typename Fn>
void for_each_tensor(Layer& l, Fn&& fn) {
  fn("ln1.gain", l.ln1_gain);
  fn("ln1.bias", l.ln1_bias);
  fn("attn.wq", l.wq);
  fn("attn.bq", l.bq);
  fn("attn.wk", l.wk);
  fn("attn.bk", l.bk);
  fn("attn.wv", l.wv);
  fn("attn.bv", l.bv);
  fn("attn.wo", l.wo);
  fn("attn.bo", l.bo);
  fn("ln2.gain", l.ln2_gain);
  fn("ln2.bias", l.ln2_bias);
  fn("ffn.w1", l.w1);
  fn("ffn.b1", l.b1);
  fn("ffn.w2", l.w2);
  fn("ffn.b2", l.b2);
}

}  // namespace

template <typename T>
std::size_t ExtractorParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& nt : named()) n += nt.tensor->size();
  return n;
}

template <typename T>
std::vector<NamedTensor<T>> ExtractorParams<T>::named() {
  std::vector<NamedTensor<T>> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string prefix = "layer" + std::to_string(i) + ".";
    for_each_tensor<T>(layers[i],
                       [&](const char* name, Tensor<T>& t) { out.push_back({prefix + name, &t}); });
  }
  return out;
}

template <typename T>
std::vector<ConstNamedTensor<T>> ExtractorParams<T>::named() const {
  std::vector<ConstNamedTensor<T>> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string prefix = "layer" + std::to_string(i) + ".";
    for_each_tensor<T>(layers[i], [&](const char* name, const Tensor<T>& t) {
      out.push_back({prefix + name, &t});
    });
  }
  return out;
}

template <typename T>
void ExtractorParams<T>::zero_grad() {
  for (auto& nt : named()) nt.tensor->zero_grad();
}

template <typename T>
template <typename U>
ExtractorParams<U> ExtractorParams<T>::cast() const {
  ExtractorParams<U> out;
  out.dim = dim;
  out.heads = heads;
  out.layers.resize(layers.size());
  auto src = named();
  auto dst = out.named();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].tensor = src[i].tensor->template cast<U>();
  return out;
}

std::size_t expected_parameter_count(std::size_t dim, std::size_t layers) {
  return layers * (12 * dim * dim + 13 * dim);
}

ExtractorParams<float> init_params(std::size_t dim, std::size_t layers, std::size_t heads,
                                   std::uint64_t seed) {
  if (heads == 0 || dim == 0 || dim % heads != 0) {
    throw ConfigError("embedding dim " + std::to_string(dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (layers == 0) throw ConfigError("extractor needs at least one layer");

  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, static_cast<float>(kInitStd));
  auto weight = [&](std::size_t r, std::size_t c) {
    Tensor<float> t({r, c});
    for (auto& v : t.data()) v = normal(rng);
    return t;
  };
  auto zeros = [](std::size_t n) { return Tensor<float>({n}); };
  auto ones = [](std::size_t n) { return Tensor<float>({n}, std::vector<float>(n, 1.0f)); };

  ExtractorParams<float> p;
  p.dim = dim;
  p.heads = heads;
  const std::size_t hidden = 4 * dim;
  for (std::size_t i = 0; i < layers; ++i) {
    EncoderLayer<float> l;
    l.ln1_gain = ones(dim);
    l.ln1_bias = zeros(dim);
    l.wq = weight(dim, dim);
    l.bq = zeros(dim);
    l.wk = weight(dim, dim);
    l.bk = zeros(dim);
    l.wv = weight(dim, dim);
    l.bv = zeros(dim);
    l.wo = weight(dim, dim);
    l.bo = zeros(dim);
    l.ln2_gain = ones(dim);
    l.ln2_bias = zeros(dim);
    l.w1 = weight(dim, hidden);
    l.b1 = zeros(hidden);
    l.w2 = weight(hidden, dim);
    l.b2 = zeros(dim);
    p.layers.push_back(std::move(l));
  }
  return p;
}

template <typename T>
Tensor<T> make_token(const Tensor<T>& embeddings) {
  if (embeddings.empty()) throw UsageError("make_token: empty support slice");
  const std::size_t r = embeddings.rows(), c = embeddings.cols();
  std::vector<T> mean(c, T{0});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) mean[j] += embeddings.at(i, j);
  for (auto& v : mean) v /= static_cast<T>(r);
  return Tensor<T>::vector(std::move(mean));
}

template <typename T>
SupportSlice<T>::SupportSlice(int class_id, Tensor<T> embeddings)
    : class_id_(class_id), embeddings_(std::move(embeddings)), token_(make_token(embeddings_)) {}

namespace {

template <typename T, typename Params>
BoundExtractor<T> bind_impl(Graph<T>& g, Params& params, bool trainable) {
  BoundExtractor<T> b;
  b.dim = params.dim;
  b.heads = params.heads;
  for (auto& l : params.layers) {
    auto leaf = [&](auto& t) {
      if constexpr (std::is_const_v<std::remove_reference_t<decltype(t)>>) {
        return g.constant(t);
      } else {
        return trainable ? g.parameter(t) : g.constant(t);
      }
    };
    typename BoundExtractor<T>::Layer v;
    v.ln1_gain = leaf(l.ln1_gain);
    v.ln1_bias = leaf(l.ln1_bias);
    v.wq = leaf(l.wq);
    v.bq = leaf(l.bq);
    v.wk = leaf(l.wk);
    v.bk = leaf(l.bk);
    v.wv = leaf(l.wv);
    v.bv = leaf(l.bv);
    v.wo = leaf(l.wo);
    v.bo = leaf(l.bo);
    v.ln2_gain = leaf(l.ln2_gain);
    v.ln2_bias = leaf(l.ln2_bias);
    v.w1 = leaf(l.w1);
    v.b1 = leaf(l.b1);
    v.w2 = leaf(l.w2);
    v.b2 = leaf(l.b2);
    b.layers.push_back(v);
  }
  return b;
}

}  // namespace

template <typename T>
BoundExtractor<T> bind(Graph<T>& g, ExtractorParams<T>& params, bool trainable) {
  return bind_impl<T>(g, params, trainable);
}

template <typename T>
BoundExtractor<T> bind(Graph<T>& g, const ExtractorParams<T>& params) {
  return bind_impl<T>(g, params, false);
}

template <typename T>
typename Graph<T>::Var extract_prototype(Graph<T>& g, const BoundExtractor<T>& model,
                                         const SupportSlice<T>& slice) {
  using Var = typename Graph<T>::Var;
  const std::size_t d = model.dim;
  if (slice.embeddings().cols() != d) {
    throw DimensionError("support embeddings have width " + std::to_string(slice.embeddings().cols()) +
                         ", extractor expects " + std::to_string(d));
  }
  const std::size_t heads = model.heads;
  const std::size_t head_dim = d / heads;
  const T inv_sqrt = T{1} / std::sqrt(static_cast<T>(head_dim));
  const T eps = static_cast<T>(kLayerNormEps);

  const Var parts[] = {g.constant(slice.token()), g.constant(slice.embeddings())};
  Var x = g.concat_rows(parts);

  for (const auto& l : model.layers) {
    Var h = g.layernorm(x, l.ln1_gain, l.ln1_bias, eps);
    Var q = g.add_row(g.matmul(h, l.wq), l.bq);
    Var k = g.add_row(g.matmul(h, l.wk), l.bk);
    Var v = g.add_row(g.matmul(h, l.wv), l.bv);
    std::vector<Var> head_out;
    head_out.reserve(heads);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const std::size_t off = hd * head_dim;
      Var qh = g.slice_cols(q, off, head_dim);
      Var kh = g.slice_cols(k, off, head_dim);
      Var vh = g.slice_cols(v, off, head_dim);
      Var scores = g.scale(g.matmul(qh, g.transpose(kh)), inv_sqrt);
      head_out.push_back(g.matmul(g.softmax_lastdim(scores), vh));
    }
    Var attn = heads == 1 ? head_out[0] : g.concat_cols(head_out);
    x = g.add(x, g.add_row(g.matmul(attn, l.wo), l.bo));

    Var h2 = g.layernorm(x, l.ln2_gain, l.ln2_bias, eps);
    Var f = g.gelu(g.add_row(g.matmul(h2, l.w1), l.b1));
    x = g.add(x, g.add_row(g.matmul(f, l.w2), l.b2));
  }
  return g.slice_rows(x, 0, 1);
}

template <typename T>
Tensor<T> extract_prototype(const ExtractorParams<T>& params, const SupportSlice<T>& slice) {
  Graph<T> g(false);
  auto model = bind(g, params);
  auto out = g.value(extract_prototype(g, model, slice));
  return Tensor<T>::vector(std::vector<T>(out.data().begin(), out.data().end()));
}

template struct ExtractorParams<float>;
template struct ExtractorParams<double>;
template ExtractorParams<double> ExtractorParams<float>::cast<double>() const;
template ExtractorParams<float> ExtractorParams<double>::cast<float>() const;
template ExtractorParams<float> ExtractorParams<float>::cast<float>() const;
template class SupportSlice<float>;
template class SupportSlice<double>;
template Tensor<float> make_token(const Tensor<float>&);
template Tensor<double> make_token(const Tensor<double>&);
template BoundExtractor<float> bind(Graph<float>&, ExtractorParams<float>&, bool);
template BoundExtractor<double> bind(Graph<double>&, ExtractorParams<double>&, bool);
template BoundExtractor<float> bind(Graph<float>&, const ExtractorParams<float>&);
template BoundExtractor<double> bind(Graph<double>&, const ExtractorParams<double>&);
template Graph<float>::Var extract_prototype(Graph<float>&, const BoundExtractor<float>&,
                                             const SupportSlice<float>&);
template Graph<double>::Var extract_prototype(Graph<double>&, const BoundExtractor<double>&,
                                              const SupportSlice<double>&);
template Tensor<float> extract_prototype(const ExtractorParams<float>&, const SupportSlice<float>&);
template Tensor<double> extract_prototype(const ExtractorParams<double>&, const SupportSlice<double>&);

}  // namespace protox
