#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "flt/collaboration.hpp"
#include "flt/error.hpp"

using namespace flt;

namespace {

ModelProfile profile(int id, double exp, double ext, double a = 0.5, double b = 0.5) {
  return {id, exp, ext, a, b};
}

// Single softmax layer whose bias fixes the output for a zero input.
LayeredModel fixed_output(std::vector<double> probs) {
  std::vector<LayerSpec> sp{{"o", 1, probs.size(), Activation::kSoftmaxOutput, Visibility::kCommon}};
  auto m = init_layered_model(sp, 1);
  std::fill(m.layers[0].weights.data().begin(), m.layers[0].weights.data().end(), 0.0);
  for (std::size_t k = 0; k < probs.size(); ++k) m.layers[0].bias[k] = std::log(probs[k]);
  return m;
}

}  // namespace

TEST_SUITE("collaboration") {
  TEST_CASE("knowledge_share examples") {
    CHECK(knowledge_share(profile(0, 1, 1), profile(1, 0.8, 0.6)) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(knowledge_share(profile(0, 1, 1, 1.0, 0.0), profile(1, 0.8, 0.6)) == 0.8);
    CHECK(knowledge_share(profile(0, 1, 1, 0.3, 0.7), profile(1, 2.0, 0.5)) ==
          doctest::Approx(0.95).epsilon(1e-15));
    CHECK_THROWS_AS(knowledge_share(profile(3, 1, 1), profile(3, 1, 1)), InputError);
    CHECK_THROWS_AS(validate(profile(0, 1, 1, 0.6, 0.6)), InputError);
  }

  TEST_CASE("learning_enhancement examples") {
    const auto r = profile(0, 0, 0, 1.0, 0.0);
    std::vector<ModelProfile> peers{profile(1, 0.7, 0), profile(2, 0.5, 0)};
    CHECK(learning_enhancement(r, peers) == doctest::Approx(1.2).epsilon(1e-15));
    CHECK(learning_enhancement(r, {}) == 0.0);
    std::vector<ModelProfile> same{profile(1, 0.4, 0), profile(2, 0.4, 0), profile(3, 0.4, 0)};
    CHECK(learning_enhancement(r, same) == doctest::Approx(1.2).epsilon(1e-15));
  }

  TEST_CASE("lambda is monotone in the peer set") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto r = profile(0, 0.5, 0.5);
    std::vector<ModelProfile> peers;
    double last = 0.0;
    for (int i = 1; i < 20; ++i) {
      peers.push_back(profile(i, u(rng), u(rng)));
      const double l = learning_enhancement(r, peers);
      CHECK(l >= last);
      last = l;
    }
  }

  TEST_CASE("negotiate_decision examples") {
    const std::vector<double> x{0.0};
    std::vector<LayeredModel> one{fixed_output({0.2, 0.8})};
    CHECK(negotiate_decision(one, x).decision == 1);

    std::vector<LayeredModel> two{fixed_output({0.25, 0.75}), fixed_output({0.75, 0.25})};
    const auto d = negotiate_decision(two, x);
    CHECK(d.probabilities[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(d.probabilities[1] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(d.decision == 0);

    const std::vector<double> wrong{0.0, 1.0};
    CHECK_THROWS_AS(negotiate_decision(one, wrong), InputError);
  }

  TEST_CASE("consensus: simplex, convex combination, permutation invariance") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (int t = 0; t < 50; ++t) {
      std::vector<LayeredModel> models;
      for (int m = 0; m < 4; ++m) {
        std::vector<double> p(3);
        double s = 0;
        for (double& v : p) s += (v = u(rng));
        for (double& v : p) v /= s;
        models.push_back(fixed_output(p));
      }
      const std::vector<double> x{0.0};
      const auto d = negotiate_decision(models, x);
      double sum = 0;
      for (std::size_t k = 0; k < 3; ++k) {
        sum += d.probabilities[k];
        double lo = 1, hi = 0;
        for (const auto& m : models) {
          const auto p = forward(m, Matrix(1, 1, 0.0));
          lo = std::min(lo, p(0, k));
          hi = std::max(hi, p(0, k));
        }
        CHECK(d.probabilities[k] >= lo - 1e-15);
        CHECK(d.probabilities[k] <= hi + 1e-15);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
      auto perm = models;
      std::reverse(perm.begin(), perm.end());
      CHECK(negotiate_decision(perm, x).decision == d.decision);
    }
  }

  TEST_CASE("subset consensus for k = 1 is the mean member accuracy") {
    std::vector<Matrix> probs{Matrix(2, 2, {0.9, 0.1, 0.2, 0.8}), Matrix(2, 2, {0.1, 0.9, 0.6, 0.4})};
    const std::vector<int> y{0, 1};
    // Member 0 gets both right, member 1 neither.
    CHECK(mean_subset_consensus_accuracy(probs, y, 1) == doctest::Approx(0.5));
    // Mean rows: [0.5,0.5] -> 0 correct; [0.4,0.6] -> 1 correct.
    CHECK(consensus_accuracy(probs, y) == doctest::Approx(1.0));
  }

  TEST_CASE("compatibility examples and symmetry") {
    ParamView a{"l", {1.0, 2.0, -3.0}, Visibility::kCommon};
    ParamView neg{"l", {-1.0, -2.0, 3.0}, Visibility::kCommon};
    CHECK(compatibility(a, a) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(compatibility(a, neg) == doctest::Approx(-1.0).epsilon(1e-15));
    ParamView e1{"l", {1.0, 0.0}, Visibility::kCommon};
    ParamView e2{"l", {0.0, 1.0}, Visibility::kCommon};
    CHECK(compatibility(e1, e2) == 0.0);
    ParamView zero{"l", {0.0, 0.0}, Visibility::kCommon};
    CHECK(compatibility(zero, e1) == 0.0);
    ParamView other{"m", {1.0, 0.0}, Visibility::kCommon};
    CHECK_THROWS_AS(compatibility(e1, other), InputError);
    CHECK_THROWS_AS(compatibility(a, e1), InputError);

    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    for (int t = 0; t < 100; ++t) {
      ParamView x{"l", std::vector<double>(17), Visibility::kCommon};
      ParamView y = x;
      for (double& v : x.values) v = n(rng);
      for (double& v : y.values) v = n(rng);
      CHECK(compatibility(x, y) == compatibility(y, x));
    }
  }

  TEST_CASE("adaptability examples") {
    const std::vector<std::vector<double>> frozen{{1, 2}, {1, 2}, {1, 2}};
    CHECK(adaptability(frozen, 0.7) == 0.0);
    const std::vector<std::vector<double>> step{{0, 0}, {1, 1}};
    CHECK(adaptability(step, 1.0) == 1.0);
    CHECK(adaptability(step, 0.0) == 0.0);
    const std::vector<std::vector<double>> single{{0, 0}};
    CHECK_THROWS_AS(adaptability(single, 1.0), InputError);
  }

  TEST_CASE("resilience examples") {
    const std::vector<std::vector<double>> snaps{{0, 0}, {0.5, 0.5}};  // UpdateRate 0.5
    const std::vector<double> losses{0.3, 0.1, 0.4, 0.2};
    const double lear = learning_stability(losses, 5);
    CHECK(resilience(snaps, losses, {1.0, 5}, 1.0) == lear);
    CHECK(resilience(snaps, losses, {0.0, 5}, 1.0) == adaptability(snaps, 1.0));
    const std::vector<double> flat{0.2, 0.2, 0.2};
    CHECK(resilience(snaps, flat, {0.5, 5}, 1.0) == doctest::Approx(0.75).epsilon(1e-15));
    const std::vector<double> one{0.2};
    CHECK_THROWS_AS(resilience(snaps, one, {0.5, 5}, 1.0), InputError);
  }

  TEST_CASE("learning stability uses the population variance of the window") {
    // Last five of {9, 1, 2, 3, 4, 5}: mean 3, variance 2.
    const std::vector<double> l{9, 1, 2, 3, 4, 5};
    CHECK(learning_stability(l, 5) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
}
