#include <doctest.h>

#include <cmath>
#include <limits>

#include "cp/activations.hpp"
#include "cp/adam.hpp"
#include "cp/error.hpp"
#include "cp/layers.hpp"
#include "gradcheck.hpp"

using namespace cp;
using namespace cp::testing;

TEST_CASE("softplus and sigmoid at the extremes") {
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(softplus(50.0) == doctest::Approx(50.0).epsilon(1e-15));
  CHECK(softplus(-50.0) == doctest::Approx(std::exp(-50.0)).epsilon(1e-12));
  CHECK(std::isfinite(softplus(1e300)));
  CHECK(std::isfinite(softplus(-1e300)));
  for (double x : {-1e300, -800.0, -40.0, 0.0, 40.0, 800.0, 1e300}) {
    const double s = sigmoid(x);
    CHECK(std::isfinite(s));
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(3.0) + sigmoid(-3.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("GRU with zero parameters stays at the zero state") {
  const GruLayer gru{"g", 3, 4};
  ParamSet p;
  std::mt19937_64 rng(1);
  gru.init(p, rng);
  for (auto& [n, t] : p) t.fill(0.0);
  const auto h = gru.forward(p, random_sequence(5, 2, 3, rng), Tensor{});
  for (const auto& ht : h) {
    for (double v : ht.values) CHECK(v == 0.0);
  }
}

TEST_CASE("GRU single step against a hand evaluation") {
  const GruLayer gru{"g", 1, 2};
  ParamSet p;
  std::mt19937_64 rng(2);
  gru.init(p, rng);
  p["g.Wz"].values = {0.3, -0.2};
  p["g.Wr"].values = {0.5, 0.1};
  p["g.Wh"].values = {-0.4, 0.7};
  p["g.Uz"].values = {0.1, 0.2, -0.3, 0.4};
  p["g.Ur"].values = {-0.2, 0.3, 0.6, -0.1};
  p["g.Uh"].values = {0.25, -0.5, 0.15, 0.35};
  p["g.bz"].values = {0.05, -0.1};
  p["g.br"].values = {0.0, 0.2};
  p["g.bh"].values = {-0.3, 0.1};
  const double x = 0.8, h[2] = {0.4, -0.6};

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  double want[2];
  double r[2], z[2];
  for (int j = 0; j < 2; ++j) {
    z[j] = sig(x * p["g.Wz"][j] + h[0] * p["g.Uz"][j] + h[1] * p["g.Uz"][2 + j] + p["g.bz"][j]);
    r[j] = sig(x * p["g.Wr"][j] + h[0] * p["g.Ur"][j] + h[1] * p["g.Ur"][2 + j] + p["g.br"][j]);
  }
  for (int j = 0; j < 2; ++j) {
    const double c =
        std::tanh(x * p["g.Wh"][j] + r[0] * h[0] * p["g.Uh"][j] + r[1] * h[1] * p["g.Uh"][2 + j] + p["g.bh"][j]);
    want[j] = (1 - z[j]) * h[j] + z[j] * c;
  }
  const Sequence xs{Tensor({1, 1}, {x})};
  const auto out = gru.forward(p, xs, Tensor({1, 2}, {h[0], h[1]}));
  REQUIRE(out.size() == 1);
  CHECK(std::abs(out[0][0] - want[0]) < 1e-12);
  CHECK(std::abs(out[0][1] - want[1]) < 1e-12);
}

TEST_CASE("conv identity, impulse response and a naive oracle") {
  std::mt19937_64 rng(4);
  // K = 1 with an identity kernel copies the input
  {
    const Tensor x = random_tensor({6, 3}, rng);
    Tensor k({1, 3, 3});
    for (std::size_t i = 0; i < 3; ++i) k[i * 3 + i] = 1.0;
    CHECK(conv1d_forward(x, k, Tensor({3})) == x);
  }
  // a unit impulse at t = 3 reads the kernel back reversed around the centre
  {
    Tensor x({7, 1});
    x[3] = 1.0;
    const Tensor k({3, 1, 1}, {0.2, -0.5, 0.9});
    const Tensor y = conv1d_forward(x, k, Tensor({1}));
    const std::vector<double> want{0, 0, 0.9, -0.5, 0.2, 0, 0};
    CHECK(y.values == want);
  }
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t T = pick(rng, 1, 8), in = pick(rng, 1, 4), f = pick(rng, 1, 5), K = 2 * pick(rng, 0, 2) + 1;
    const Tensor x = random_tensor({T, in}, rng), k = random_tensor({K, in, f}, rng), b = random_tensor({f}, rng);
    const Tensor y = conv1d_forward(x, k, b);
    REQUIRE(y.shape == std::vector<std::size_t>{T, f});
    const long half = long(K / 2);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t o = 0; o < f; ++o) {
        double acc = b[o];
        for (std::size_t j = 0; j < K; ++j) {
          const long s = long(t) + long(j) - half;
          if (s < 0 || s >= long(T)) continue;
          for (std::size_t c = 0; c < in; ++c) acc += x.at(std::size_t(s), c) * k[(j * in + c) * f + o];
        }
        CHECK(std::abs(y.at(t, o) - acc) < 1e-12);
      }
    }
  }
}

TEST_CASE("layer gradients match central differences") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto c = conv_check(100 + s);
    INFO("conv " << c.worst_param << " " << c.analytic << " vs " << c.numeric);
    CHECK(c.max_rel_error < 1e-4);
    const auto g = gru_check(200 + s);
    INFO("gru " << g.worst_param << " " << g.analytic << " vs " << g.numeric);
    CHECK(g.max_rel_error < 1e-4);
    const auto d = dense_check(300 + s);
    CHECK(d.max_rel_error < 1e-4);
  }
}

TEST_CASE("input adjoints match central differences") {
  std::mt19937_64 rng(9);
  const Conv1d conv{"c", 2, 3, 3};
  const GruLayer gru{"g", 3, 2};
  ParamSet p;
  conv.init(p, rng);
  gru.init(p, rng);
  Sequence x = random_sequence(4, 2, 2, rng);
  const Sequence w = random_sequence(4, 2, 2, rng);
  auto objective = [&](const Sequence& in) { return weighted_sum(gru.forward(p, conv.forward(p, in), Tensor{}), w); };
  const Sequence a = conv.forward(p, x);
  GruLayer::Cache cache;
  gru.forward(p, a, Tensor{}, &cache);
  ParamSet grads = zeros_like(p);
  const Sequence dx = conv.backward(p, x, gru.backward(p, a, cache, w, grads), grads);
  for (std::size_t t = 0; t < x.size(); ++t) {
    for (std::size_t i = 0; i < x[t].size(); ++i) {
      const double keep = x[t][i];
      x[t][i] = keep + 1e-6;
      const double up = objective(x);
      x[t][i] = keep - 1e-6;
      const double dn = objective(x);
      x[t][i] = keep;
      CHECK(dx[t][i] == doctest::Approx((up - dn) / 2e-6).epsilon(1e-6));
    }
  }
}

TEST_CASE("a zero adjoint gives zero gradients") {
  std::mt19937_64 rng(10);
  const GruLayer gru{"g", 2, 3};
  ParamSet p;
  gru.init(p, rng);
  const Sequence x = random_sequence(3, 2, 2, rng);
  GruLayer::Cache cache;
  gru.forward(p, x, Tensor{}, &cache);
  Sequence dh;
  for (int t = 0; t < 3; ++t) dh.push_back(Tensor({2, 3}));
  ParamSet grads = zeros_like(p);
  const Sequence dx = gru.backward(p, x, cache, dh, grads);
  CHECK(global_norm(grads) == 0.0);
  for (const auto& t : dx) {
    for (double v : t.values) CHECK(v == 0.0);
  }
}

TEST_CASE("layer shape checks") {
  std::mt19937_64 rng(11);
  const Dense d{"d", 3, 2};
  ParamSet p;
  d.init(p, rng);
  CHECK_THROWS_AS(d.forward(p, Tensor({2, 4})), Error);
  p["d.W"] = Tensor({2, 2});
  CHECK_THROWS_AS(d.check(p), Error);
}

TEST_CASE("Adam leaves parameters alone on a zero gradient") {
  ParamSet p{{"w", Tensor({3}, {1.0, -2.0, 0.5})}};
  const ParamSet before = p;
  AdamState st(p, AdamConfig{});
  adam_step(p, zeros_like(p), st);
  CHECK(p == before);
  CHECK(st.step == 1);
}

TEST_CASE("Adam minimises a quadratic and is deterministic") {
  auto run = [] {
    ParamSet p{{"w", Tensor({1}, {0.0})}};
    AdamConfig cfg;
    cfg.lr = 0.1;
    AdamState st(p, cfg);
    for (int i = 0; i < 500; ++i) {
      ParamSet g{{"w", Tensor({1}, {2.0 * (p["w"][0] - 3.0)})}};
      adam_step(p, g, st);
    }
    return p["w"][0];
  };
  const double w = run();
  CHECK(std::abs(w - 3.0) < 1e-3);
  CHECK(run() == w);
}

TEST_CASE("global norm clipping") {
  ParamSet g{{"a", Tensor({2}, {3.0, 0.0})}, {"b", Tensor({1}, {4.0})}};
  CHECK(clip_global_norm(g, 10.0) == doctest::Approx(5.0));
  CHECK(g["a"][0] == 3.0);
  CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(global_norm(g) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g["b"][0] == doctest::Approx(0.8));
}
