#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "protox/module_check.hpp"
#include "protox/objectives.hpp"
#include "protox/synthetic.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace protox;

namespace {

using oracles::Points;
using oracles::contrastive_oracle;
using oracles::random_points;
using oracles::classifier_oracle;
using oracles::protonet_fixture;
using oracles::rows_of;
using oracles::sqdist;

SubPrototypeSet<double> to_set(const Points& p) {
  SubPrototypeSet<double> s;
  s.way = p.size();
  s.shot = p[0].size();
  std::vector<double> flat;
  for (const auto& cls : p)
    for (const auto& v : cls) flat.insert(flat.end(), v.begin(), v.end());
  s.vectors = Tensor<double>::matrix(s.way * s.shot, p[0][0].size(), flat);
  return s;
}

double graph_contrastive(const Points& p) {
  auto set = to_set(p);
  Graph<double> g;
  return g.value(prototype_contrastive_loss(g, g.constant(set.vectors), set.way, set.shot))[0];
}

Episode random_episode(std::size_t way, std::size_t shot, std::size_t queries, std::size_t dim, std::uint64_t seed,
                       double mean_std = 1.0, double noise_std = 1.0) {
  GaussianSpec spec;
  spec.classes = way + 2;
  spec.samples_per_class = shot + queries + 3;
  spec.dim = dim;
  spec.mean_std = mean_std;
  spec.noise_std = noise_std;
  spec.seed = seed;
  return sample_episode(make_gaussian_dataset(spec), {way, shot, queries}, seed, 0);
}

}  // namespace

TEST_CASE("sub-supports leave one row out") {
  SUBCASE("K = 3") {
    auto s = build_sub_supports(Tensor<double>::matrix(3, 2, {1, 1, 2, 2, 3, 3}), 4);
    REQUIRE(s.size() == 3);
    CHECK(s[0].embeddings() == Tensor<double>::matrix(2, 2, {2, 2, 3, 3}));
    CHECK(s[1].embeddings() == Tensor<double>::matrix(2, 2, {1, 1, 3, 3}));
    CHECK(s[2].embeddings() == Tensor<double>::matrix(2, 2, {1, 1, 2, 2}));
    for (const auto& slice : s) CHECK(slice.class_id() == 4);
  }
  SUBCASE("K = 1 keeps the singleton") {
    auto s = build_sub_supports(Tensor<double>::matrix(1, 2, {5, -1}), 0);
    REQUIRE(s.size() == 1);
    CHECK(s[0].embeddings() == Tensor<double>::matrix(1, 2, {5, -1}));
  }
  SUBCASE("K = 5 tokens") {
    std::mt19937_64 rng(2);
    auto rows = testing::random_matrix<double>(rng, 5, 7);
    auto s = build_sub_supports(rows, 0);
    REQUIRE(s.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(s[i].shot() == 4);
      for (std::size_t j = 0; j < 7; ++j) {
        double sum = 0;
        for (std::size_t r = 0; r < 5; ++r)
          if (r != i) sum += rows.at(r, j);
        CHECK(s[i].token()[j] == doctest::Approx(sum / 4.0).epsilon(1e-15));
      }
    }
  }
  SUBCASE("empty input") { CHECK_THROWS_AS(build_sub_supports(Tensor<double>{}, 0), UsageError); }
}

TEST_CASE("contrastive loss closed forms") {
  const Points same = {{{0.5, -1, 2}}, {{0.5, -1, 2}}};
  CHECK(std::abs(prototype_contrastive_loss(to_set(same)) - std::exp(0.5)) <= 1e-12);
  CHECK(std::abs(graph_contrastive(same) - 1.6487212707001282) <= 1e-12);

  const Points three = {{{0, 0, 0}}, {{1, 1, 1}}};
  CHECK(std::abs(prototype_contrastive_loss(to_set(three)) - std::exp(0.125)) <= 1e-12);
  CHECK(std::abs(graph_contrastive(three) - 1.1331484530668263) <= 1e-12);
}

TEST_CASE("contrastive loss matches the double-loop oracle") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_points(rng, 5, 5, 8);
    const double expected = contrastive_oracle(p);
    CHECK(std::abs(prototype_contrastive_loss(to_set(p)) - expected) <= 1e-9);
    CHECK(std::abs(graph_contrastive(p) - expected) <= 1e-9);
  }
}

TEST_CASE("contrastive loss properties") {
  std::mt19937_64 rng(5);
  SUBCASE("strictly positive and above one") {
    for (int t = 0; t < 10; ++t) CHECK(prototype_contrastive_loss(to_set(random_points(rng, 3, 4, 5))) > 1.0);
  }
  SUBCASE("one-shot: within-class sum is zero") {
    const auto p = random_points(rng, 4, 1, 6);
    double between = 0;
    for (std::size_t m = 0; m < 4; ++m)
      for (std::size_t n = m + 1; n < 4; ++n) between += sqdist(p[m][0], p[n][0]);
    const double value = prototype_contrastive_loss(to_set(p));
    CHECK(std::isfinite(value));
    CHECK(value == doctest::Approx(std::exp(0.25 / (between + 1.0))).epsilon(1e-14));
  }
  SUBCASE("moving one class away lowers the loss") {
    auto p = random_points(rng, 4, 3, 5);
    for (std::size_t c = 1; c < 4; ++c)
      for (auto& v : p[c]) v[0] = -std::abs(v[0]);
    for (auto& v : p[0]) v[0] = 1.0 + std::abs(v[0]);
    double prev = prototype_contrastive_loss(to_set(p));
    for (int step = 1; step <= 20; ++step) {
      for (auto& v : p[0]) v[0] += 0.25;
      const double now = prototype_contrastive_loss(to_set(p));
      CHECK(now < prev);
      prev = now;
    }
  }
  SUBCASE("growing one within-class distance raises the loss") {
    auto p = random_points(rng, 4, 3, 5);
    double prev = prototype_contrastive_loss(to_set(p));
    for (int step = 1; step <= 10; ++step) {
      // Move p[1][0] away from p[1][1] along their difference.
      for (std::size_t j = 0; j < 5; ++j) p[1][0][j] += 0.1 * (p[1][0][j] - p[1][1][j]);
      const double now = prototype_contrastive_loss(to_set(p));
      CHECK(now > prev);
      prev = now;
    }
  }
  SUBCASE("fewer than two classes") {
    const Points one = {{{1, 2}, {3, 4}}};
    CHECK_THROWS_AS(prototype_contrastive_loss(to_set(one)), UsageError);
    CHECK_THROWS_AS(graph_contrastive(one), UsageError);
  }
}

TEST_CASE("classifier loss examples") {
  auto run = [](std::vector<float> protos, std::size_t n, std::vector<float> queries, std::vector<int> labels) {
    Graph<double> g;
    const std::size_t d = protos.size() / n;
    auto p = g.constant(Tensor<float>::matrix(n, d, protos).cast<double>());
    auto q = g.constant(Tensor<float>::matrix(labels.size(), d, queries).cast<double>());
    auto out = classifier_loss(g, p, q, labels);
    return std::make_pair(g.value(out.loss)[0], g.value(out.logits));
  };
  SUBCASE("equidistant query") {
    auto [loss, logits] = run({0, 0, 2, 0}, 2, {1, 0}, {0});
    CHECK(std::abs(loss - std::log(2.0)) <= 1e-15);
  }
  SUBCASE("query on prototype 0, prototype 1 at squared distance 100") {
    auto [loss, logits] = run({0, 0, 10, 0}, 2, {0, 0}, {0});
    CHECK(predict<double>(logits.row(0)) == 0);
    CHECK(loss >= 0.0);
    CHECK(loss < 1e-40);
    CHECK(loss == doctest::Approx(std::log1p(std::exp(-100.0))).epsilon(1e-12));
  }
  SUBCASE("label out of range") {
    CHECK_THROWS_AS(run({0, 0, 1, 1}, 2, {0, 0}, {2}), DataError);
    CHECK_THROWS_AS(run({0, 0, 1, 1}, 2, {0, 0}, {-1}), DataError);
  }
}

TEST_CASE("classifier loss matches a brute-force oracle") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    auto protos = testing::random_matrix<double>(rng, 5, 6);
    auto queries = testing::random_matrix<double>(rng, 15, 6);
    std::vector<int> labels;
    for (int i = 0; i < 15; ++i) labels.push_back(i % 5);
    Graph<double> g;
    auto out = classifier_loss(g, g.constant(protos), g.constant(queries), labels);

    std::vector<std::vector<double>> P, Q;
    for (std::size_t r = 0; r < 5; ++r) P.emplace_back(protos.row(r).begin(), protos.row(r).end());
    for (std::size_t r = 0; r < 15; ++r) Q.emplace_back(queries.row(r).begin(), queries.row(r).end());
    const auto oracle = classifier_oracle(P, Q, labels);
    CHECK(g.value(out.loss)[0] == doctest::Approx(oracle.loss).epsilon(1e-12));
    for (std::size_t q = 0; q < 15; ++q) CHECK(predict<double>(g.value(out.logits).row(q)) == oracle.predictions[q]);
  }
}

TEST_CASE("prediction rule") {
  CHECK(predict<double>(std::vector<double>{1, 3, 3}) == 1);
  CHECK(predict<double>(std::vector<double>{2, 2}) == 0);
  CHECK(predict<float>(std::vector<float>{-5, -1, -2}) == 1);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    auto row = testing::normal_vector(rng, 6);
    auto shifted = row;
    for (auto& v : shifted) v += 123.5;
    CHECK(predict<double>(row) == predict<double>(shifted));
  }
}

TEST_CASE("bypass without prototype loss is a prototypical network") {
  const auto ep = protonet_fixture();
  std::vector<std::vector<double>> protos;
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<double> p(3);
    for (std::size_t j = 0; j < 3; ++j) p[j] = (ep.support.at(2 * c, j) + ep.support.at(2 * c + 1, j)) / 2.0;
    protos.push_back(p);
  }
  const auto oracle = classifier_oracle(protos, rows_of(ep.query), ep.query_labels);

  const ObjectiveConfig config{.use_prototype_loss = false, .bypass_module = true};
  const auto values = evaluate_objective<double>(nullptr, ep, config);
  CHECK(values.classifier == oracle.loss);
  CHECK(values.prototype == 0.0);
  CHECK(values.total == oracle.loss);
  CHECK(values.predictions == oracle.predictions);

  Graph<double> g;
  const auto losses = episode_objective<double>(g, nullptr, ep, config);
  const auto& P = g.value(losses.prototypes);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t j = 0; j < 3; ++j) CHECK(P.at(c, j) == protos[c][j]);
  for (std::size_t q = 0; q < 4; ++q)
    for (std::size_t c = 0; c < 2; ++c) CHECK(g.value(losses.logits).at(q, c) == oracle.logits[q][c]);
}

TEST_CASE("bypass prototypes are plain support means") {
  const auto ep = random_episode(5, 5, 3, 8, 4);
  Graph<float> g;
  const auto losses = episode_objective<float>(g, nullptr, ep, {.use_prototype_loss = true, .bypass_module = true});
  for (std::size_t c = 0; c < 5; ++c) {
    const auto token = make_token(ep.class_support(c));
    const auto row = g.value(losses.prototypes).row(c);
    CHECK(std::equal(row.begin(), row.end(), token.data().begin()));
  }
  // The contrastive term over leave-one-out means matches the oracle.
  Points subs(5);
  for (std::size_t c = 0; c < 5; ++c) {
    const auto support = ep.class_support(c).cast<double>();
    for (std::size_t i = 0; i < 5; ++i) {
      std::vector<double> mean(8, 0.0);
      for (std::size_t r = 0; r < 5; ++r)
        if (r != i)
          for (std::size_t j = 0; j < 8; ++j) mean[j] += support.at(r, j) / 4.0;
      subs[c].push_back(mean);
    }
  }
  const auto values = evaluate_objective<double>(nullptr, ep, {.use_prototype_loss = true, .bypass_module = true});
  CHECK(values.prototype == doctest::Approx(contrastive_oracle(subs)).epsilon(1e-12));
}

TEST_CASE("total is the sum of both terms") {
  const auto ep = random_episode(5, 5, 15, 16, 8);
  auto params = init_params(16, 2, 4, 1);
  Graph<float> g;
  const auto model = bind(g, params);
  const auto l = episode_objective(g, &model, ep, {});
  CHECK(g.value(l.total)[0] == g.value(l.classifier)[0] + g.value(l.prototype)[0]);
  const auto v = evaluate_objective(&params, ep, {});
  CHECK(static_cast<float>(v.total) == static_cast<float>(v.classifier) + static_cast<float>(v.prototype));
  CHECK(v.prototype > 1.0);
  CHECK(std::isfinite(v.total));
}

TEST_CASE("module requires parameters unless bypassed") {
  const auto ep = random_episode(3, 2, 2, 8, 1);
  Graph<float> g;
  CHECK_THROWS_AS(episode_objective<float>(g, nullptr, ep, {}), UsageError);
}

TEST_CASE("separable classes are classified perfectly") {
  const auto ep = random_episode(5, 5, 15, 16, 3, 10.0, 0.1);
  const auto params = init_params(16, 2, 4, 0);
  const auto v = evaluate_objective(&params, ep, {});
  CHECK(v.classifier < 1e-3);
  for (std::size_t q = 0; q < v.predictions.size(); ++q) CHECK(v.predictions[q] == std::size_t(ep.query_labels[q]));
}

TEST_CASE("full objective gradients pass the finite-difference check") {
  SUBCASE("both losses, 3-way 2-shot") {
    ModuleCheckSpec spec;
    const auto report = module_gradcheck(spec);
    CHECK(report.passed);
    CHECK(report.max_rel_error < 1e-4);
  }
  SUBCASE("classifier only, 2-way 1-shot") {
    ModuleCheckSpec spec;
    spec.dim = 8;
    spec.heads = 2;
    spec.shape = {2, 1, 2};
    spec.seed = 5;
    spec.objective.use_prototype_loss = false;
    CHECK(module_gradcheck(spec).passed);
  }
  SUBCASE("both losses, one-shot path") {
    ModuleCheckSpec spec;
    spec.dim = 8;
    spec.heads = 2;
    spec.shape = {3, 1, 1};
    spec.seed = 6;
    CHECK(module_gradcheck(spec).passed);
  }
}
