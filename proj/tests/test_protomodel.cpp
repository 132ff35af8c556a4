#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "protox/extractor.hpp"
#include "support.hpp"

using namespace protox;

namespace {

/// Regular initialization plus noise, so attention is far from uniform and
/// biases and gains are generic.
template <typename T>
ExtractorParams<T> jittered(std::size_t d, std::size_t layers, std::size_t heads, std::uint64_t seed,
                            double std = 0.1) {
  auto p = init_params(d, layers, heads, seed).cast<T>();
  std::mt19937_64 rng(seed + 1000);
  std::normal_distribution<double> noise(0.0, std);
  for (auto& nt : p.named())
    for (auto& v : nt.tensor->data()) v += static_cast<T>(noise(rng));
  return p;
}

template <typename T>
Tensor<T> permute_rows(const Tensor<T>& m, const std::vector<std::size_t>& order) {
  std::vector<T> out;
  for (auto r : order) out.insert(out.end(), m.row(r).begin(), m.row(r).end());
  return Tensor<T>::matrix(m.rows(), m.cols(), out);
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

}  // namespace

TEST_CASE("make_token") {
  auto t = make_token(Tensor<double>::matrix(2, 2, {1, 3, 3, 5}));
  CHECK(t == Tensor<double>::vector({2, 4}));
  auto single = make_token(Tensor<double>::matrix(1, 2, {7, -2}));
  CHECK(single == Tensor<double>::vector({7, -2}));
  CHECK_THROWS_AS(make_token(Tensor<double>{}), UsageError);

  std::mt19937_64 rng(1);
  auto rows = testing::random_matrix<double>(rng, 5, 9);
  auto token = make_token(rows);
  for (std::size_t j = 0; j < 9; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < 5; ++i) s += rows.at(i, j);
    CHECK(token[j] == s / 5.0);
  }
}

TEST_CASE("support slice keeps its token consistent") {
  SupportSlice<double> s(3, Tensor<double>::matrix(2, 2, {1, 3, 3, 5}));
  CHECK(s.class_id() == 3);
  CHECK(s.shot() == 2);
  CHECK(s.token() == Tensor<double>::vector({2, 4}));
}

TEST_CASE("parameter count matches the closed form") {
  const std::size_t d = 64;
  // Per layer: four d x d projections with biases, FFN d->4d->d with
  // biases, two layernorm gain/bias pairs.
  const std::size_t attention = 4 * d * d + 4 * d;
  const std::size_t ffn = d * 4 * d + 4 * d + 4 * d * d + d;
  const std::size_t norms = 4 * d;
  const std::size_t expected = 2 * (attention + ffn + norms);
  CHECK(expected == 2 * (4 * d * d + 4 * d + 8 * d * d + 5 * d + 4 * d));

  auto p = init_params(d, 2, 8, 0);
  CHECK(p.parameter_count() == expected);
  CHECK(expected_parameter_count(d, 2) == expected);
  std::size_t counted = 0;
  for (const auto& nt : p.named()) counted += nt.tensor->size();
  CHECK(counted == expected);
  CHECK(p.layers[0].w1.shape() == Shape{d, 4 * d});
  CHECK(p.layers[0].w2.shape() == Shape{4 * d, d});
  CHECK(p.layers[1].wq.shape() == Shape{d, d});
}

TEST_CASE("initialization") {
  auto p = init_params(64, 2, 8, 42);
  SUBCASE("biases zero, gains one") {
    for (const auto& l : p.layers) {
      for (const auto* t : {&l.bq, &l.bk, &l.bv, &l.bo, &l.b1, &l.b2, &l.ln1_bias, &l.ln2_bias})
        for (float v : t->data()) CHECK(v == 0.0f);
      for (const auto* t : {&l.ln1_gain, &l.ln2_gain})
        for (float v : t->data()) CHECK(v == 1.0f);
    }
  }
  SUBCASE("weights have std 0.02") {
    const auto& w = p.layers[0].w1.data();
    const double mean = std::accumulate(w.begin(), w.end(), 0.0) / double(w.size());
    double ss = 0;
    for (float v : w) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / double(w.size() - 1));
    CHECK(std::abs(mean) < 0.001);
    CHECK(sd == doctest::Approx(0.02).epsilon(0.03));
  }
  SUBCASE("same seed is bit-identical, different seed differs") {
    auto again = init_params(64, 2, 8, 42);
    auto other = init_params(64, 2, 8, 43);
    const auto a = p.named();
    const auto b = again.named();
    const auto c = other.named();
    bool all_equal = true, any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      all_equal = all_equal && (*a[i].tensor == *b[i].tensor);
      any_diff = any_diff || !(*a[i].tensor == *c[i].tensor);
    }
    CHECK(all_equal);
    CHECK(any_diff);
  }
  SUBCASE("invalid shapes") {
    CHECK_THROWS_AS(init_params(64, 2, 7, 0), ConfigError);
    CHECK_THROWS_AS(init_params(64, 0, 8, 0), ConfigError);
  }
}

TEST_CASE("zero weights reduce every block to its output biases") {
  // With all projection matrices zero, attention returns b_v mixed by
  // weights summing to one, projected by W_o = 0 plus b_o; the FFN returns
  // gelu(b_1) W_2 + b_2 = b_2. Each block therefore adds b_o + b_2 to the
  // residual stream and row 0 is token + sum over layers of (b_o + b_2).
  const std::size_t d = 8;
  auto p = jittered<float>(d, 2, 2, 9, 0.5);
  for (auto& l : p.layers)
    for (auto* w : {&l.wq, &l.wk, &l.wv, &l.wo, &l.w1, &l.w2})
      for (auto& v : w->data()) v = 0.0f;

  std::mt19937_64 rng(4);
  auto rows = testing::random_matrix<float>(rng, 4, d);
  SupportSlice<float> slice(0, rows);
  std::vector<float> expected(slice.token().data().begin(), slice.token().data().end());
  for (const auto& l : p.layers) {
    for (std::size_t j = 0; j < d; ++j) expected[j] = expected[j] + l.bo[j];
    for (std::size_t j = 0; j < d; ++j) expected[j] = expected[j] + l.b2[j];
  }
  const auto out = extract_prototype(p, slice);
  CHECK(std::vector<float>(out.data().begin(), out.data().end()) == expected);

  // Only the token matters: different rows with the same mean agree.
  std::vector<float> shifted(rows.data().begin(), rows.data().end());
  for (std::size_t j = 0; j < d; ++j) {
    shifted[j] += 1.0f;
    shifted[d + j] -= 1.0f;
  }
  SupportSlice<float> other(0, Tensor<float>::matrix(4, d, shifted));
  CHECK(max_abs_diff(extract_prototype(p, other), out) < 1e-6);
}

TEST_CASE("permutation invariance") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t k = 2 + trial % 6;
    auto pf = jittered<float>(32, 2, 4, 100 + trial);
    auto pd = pf.cast<double>();
    auto rows = testing::random_matrix<double>(rng, k, 32);
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    if (std::is_sorted(order.begin(), order.end())) std::reverse(order.begin(), order.end());

    const auto a32 = extract_prototype(pf, SupportSlice<float>(0, rows.cast<float>()));
    const auto b32 = extract_prototype(pf, SupportSlice<float>(0, permute_rows(rows, order).cast<float>()));
    CHECK(max_abs_diff(a32, b32) < 1e-4);
    const auto a64 = extract_prototype(pd, SupportSlice<double>(0, rows));
    const auto b64 = extract_prototype(pd, SupportSlice<double>(0, permute_rows(rows, order)));
    CHECK(max_abs_diff(a64, b64) < 1e-9);
  }
}

TEST_CASE("output is a d-vector for every support size") {
  auto p = jittered<float>(16, 2, 4, 5);
  std::mt19937_64 rng(8);
  for (std::size_t k = 1; k <= 8; ++k) {
    auto out = extract_prototype(p, SupportSlice<float>(0, testing::random_matrix<float>(rng, k, 16)));
    CHECK(out.shape() == Shape{16});
    for (float v : out.data()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("graph and pure forms agree, precision casts stay close") {
  auto p = jittered<float>(16, 2, 4, 6);
  std::mt19937_64 rng(9);
  SupportSlice<float> slice(0, testing::random_matrix<float>(rng, 3, 16));
  Graph<float> g;
  auto bound = bind(g, p);
  const auto& via_graph = g.value(extract_prototype(g, bound, slice));
  const auto pure = extract_prototype(p, slice);
  CHECK(std::equal(pure.data().begin(), pure.data().end(), via_graph.data().begin()));

  const auto in_double = extract_prototype(p.cast<double>(), SupportSlice<double>(0, slice.embeddings().cast<double>()));
  CHECK(max_abs_diff(pure.cast<double>(), in_double) < 1e-5);
}

TEST_CASE("width mismatch is a dimension error") {
  auto p = init_params(16, 2, 4, 0);
  CHECK_THROWS_AS(extract_prototype(p, SupportSlice<float>(0, Tensor<float>::matrix(2, 8, std::vector<float>(16, 1.0f)))),
                  DimensionError);
}

TEST_CASE("gradients reach every parameter") {
  auto p = jittered<double>(8, 2, 2, 3);
  std::mt19937_64 rng(10);
  SupportSlice<double> slice(0, testing::random_matrix<double>(rng, 3, 8));
  p.zero_grad();
  Graph<double> g;
  auto bound = bind(g, p);
  g.backward(g.sum(g.exp(g.scale(extract_prototype(g, bound, slice), 0.3))));
  for (const auto& nt : p.named()) {
    INFO(nt.name);
    CHECK(nt.tensor->has_grad());
    double norm = 0;
    for (double v : nt.tensor->grad()) norm += v * v;
    // The key bias cannot influence attention weights; everything else does.
    if (nt.name.find("attn.bk") == std::string::npos) CHECK(norm > 0);
  }
}
