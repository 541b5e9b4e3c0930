#include <doctest.h>

#include <cmath>
#include <random>

#include "cp/activations.hpp"
#include "cp/error.hpp"
#include "cp/loss.hpp"

using namespace cp;

namespace {

// The loss written out by hand, kept apart from the library code.
double reference_loss(int p, double prob, double cx, double cy, double r1, double r2, double x, double y,
                      bool has_prob, bool has_ellipse) {
  const double l1 = 0.5, l2 = 0.35, l3 = 0.15, alpha = 0.95, gamma = 2.0;
  double j = 0.0;
  if (has_prob) {
    const double fl = p == 1 ? -alpha * std::pow(1 - prob, gamma) * std::log(prob)
                             : -(1 - alpha) * std::pow(prob, gamma) * std::log(1 - prob);
    j += std::max(l1, 1.0 - p) * fl;
  }
  if (has_ellipse && p == 1) {
    const double dx = (x - cx) / r1, dy = (y - cy) / r2;
    j += l2 * std::sqrt(dx * dx + dy * dy + 1e-12) + l3 * r1 * r2;
  }
  return j;
}

}  // namespace

TEST_CASE("focal loss closed forms") {
  CHECK(std::abs(focal_loss(1, 0.5, 0.95, 2.0) - 0.164623) < 1e-6);
  CHECK(std::abs(focal_loss(0, 0.5, 0.95, 2.0) - 0.008664) < 1e-5);
  CHECK(focal_loss(1, 1.0, 0.95, 2.0) == doctest::Approx(0.0).epsilon(1e-9));
  // clamped, so finite at the edges
  CHECK(std::isfinite(focal_loss(1, 0.0, 0.95, 2.0)));
  CHECK(std::isfinite(focal_loss(0, 1.0, 0.95, 2.0)));
}

TEST_CASE("worked joint-loss example") {
  LossSample s;
  s.label = 1;
  s.prob = 0.5;
  s.ellipse = Ellipse{1.0, 0.5, 0.5, 0.4};
  s.next_x = 1.2;
  s.next_y = 0.6;
  CHECK(std::abs(joint_loss(s, LossConfig{}) - 0.277406) < 1e-6);
  CHECK(std::abs(joint_loss(s, LossConfig{}) - reference_loss(1, 0.5, 1.0, 0.5, 0.5, 0.4, 1.2, 0.6, true, true)) <
        1e-12);
}

TEST_CASE("ghosts ignore the regression head") {
  LossSample s;
  s.label = 0;
  s.prob = 0.5;
  s.ellipse = Ellipse{3.0, -2.0, 7.0, 9.0};
  const double j = joint_loss(s, LossConfig{});
  CHECK(std::abs(j - 0.05 * 0.25 * std::log(2.0)) < 1e-12);
  CHECK(std::abs(j - 0.008664) < 1e-5);
}

TEST_CASE("zero distance leaves the size term") {
  LossSample s;
  s.label = 1;
  s.ellipse = Ellipse{2.0, 3.0, 0.7, 0.3};
  s.next_x = 2.0;
  s.next_y = 3.0;
  const double j = joint_loss(s, LossConfig{});
  CHECK(j == doctest::Approx(0.35 * 1e-6 + 0.15 * 0.21).epsilon(1e-12));
}

TEST_CASE("head presence masks the loss terms") {
  LossSample cls_only;
  cls_only.label = 1;
  cls_only.prob = 0.8;
  CHECK(joint_loss(cls_only, LossConfig{}) == doctest::Approx(0.5 * focal_loss(1, 0.8, 0.95, 2.0)));

  LossSample reg_only;
  reg_only.label = 1;
  reg_only.ellipse = Ellipse{0, 0, 1, 2};
  reg_only.next_x = 3;
  reg_only.next_y = 4;
  CHECK(joint_loss(reg_only, LossConfig{}) ==
        doctest::Approx(reference_loss(1, 0, 0, 0, 1, 2, 3, 4, false, true)).epsilon(1e-12));

  LossSample missing;
  missing.label = 1;
  missing.ellipse = Ellipse{};
  CHECK_THROWS_AS(joint_loss(missing, LossConfig{}), Error);
  LossSample bad;
  bad.label = 2;
  bad.prob = 0.5;
  CHECK_THROWS_AS(joint_loss(bad, LossConfig{}), Error);
}

TEST_CASE("gate weights true samples by lambda1 and ghosts by one") {
  LossConfig cfg;
  cfg.lambda1 = 0.2;
  LossSample t;
  t.label = 1;
  t.prob = 0.3;
  CHECK(joint_loss(t, cfg) == doctest::Approx(0.2 * focal_loss(1, 0.3, 0.95, 2.0)));
  LossSample g;
  g.label = 0;
  g.prob = 0.3;
  CHECK(joint_loss(g, cfg) == doctest::Approx(focal_loss(0, 0.3, 0.95, 2.0)));
}

TEST_CASE("loss against the reference on random inputs, non-negative") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3), pr(0.01, 0.99), r(0.05, 4);
  for (int i = 0; i < 1000; ++i) {
    const int p = i % 2;
    const double prob = pr(rng), cx = u(rng), cy = u(rng), r1 = r(rng), r2 = r(rng), x = u(rng), y = u(rng);
    LossSample s;
    s.label = p;
    s.prob = prob;
    s.ellipse = Ellipse{cx, cy, r1, r2};
    if (p == 1) {
      s.next_x = x;
      s.next_y = y;
    }
    const double j = joint_loss(s, LossConfig{});
    CHECK(j >= 0.0);
    CHECK(j == doctest::Approx(reference_loss(p, prob, cx, cy, r1, r2, x, y, true, true)).epsilon(1e-12));
  }
}

TEST_CASE("the distance term shrinks as the semiaxes grow") {
  LossSample s;
  s.label = 1;
  s.next_x = 1.5;
  s.next_y = -0.7;
  LossConfig cfg;
  cfg.lambda3 = 0.0;
  double prev = 1e300;
  for (double r = 0.1; r < 10; r *= 1.3) {
    s.ellipse = Ellipse{0, 0, r, r};
    const double j = joint_loss(s, cfg);
    CHECK(j < prev);
    prev = j;
  }
}

TEST_CASE("head gradients match central differences") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-2, 2);
  const LossConfig cfg;
  for (int i = 0; i < 200; ++i) {
    const int label = i % 3 == 0 ? 0 : 1;
    HeadPreact h;
    if (i % 5 != 1) h.logit = u(rng);
    h.has_ellipse = i % 5 != 2 || !h.logit;
    h.cx = u(rng);
    h.cy = u(rng);
    h.a1 = u(rng);
    h.a2 = u(rng);
    const double nx = u(rng), ny = u(rng);
    const double scale = i % 2 ? 1.0 : 0.5;
    const auto v = joint_loss_grad(label, h, nx, ny, cfg, scale);
    CHECK(v.loss == doctest::Approx(joint_loss(make_loss_sample(label, h, nx, ny, scale), cfg)).epsilon(1e-14));

    auto f = [&](HeadPreact q) { return joint_loss_grad(label, q, nx, ny, cfg, scale).loss; };
    // five-point central stencil; h = 1e-6 two-point differences lose ~1e-10
    // to rounding, too coarse for a 1e-6 relative check on small gradients
    auto stencil = [&](auto&& at) {
      const double s = 1e-3;
      return (-f(at(2 * s)) + 8 * f(at(s)) - 8 * f(at(-s)) + f(at(-2 * s))) / (12 * s);
    };
    auto fd = [&](double HeadPreact::*field) {
      return stencil([&](double d) {
        HeadPreact q = h;
        q.*field += d;
        return q;
      });
    };
    auto close = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-5}); };
    CHECK(close(v.grad.cx, fd(&HeadPreact::cx)) < 1e-6);
    CHECK(close(v.grad.cy, fd(&HeadPreact::cy)) < 1e-6);
    CHECK(close(v.grad.a1, fd(&HeadPreact::a1)) < 1e-6);
    CHECK(close(v.grad.a2, fd(&HeadPreact::a2)) < 1e-6);
    if (h.logit) {
      const double n = stencil([&](double d) {
        HeadPreact q = h;
        *q.logit += d;
        return q;
      });
      CHECK(close(v.grad.logit, n) < 1e-6);
    } else {
      CHECK(v.grad.logit == 0.0);
    }
    if (!h.has_ellipse || label == 0) {
      CHECK(v.grad.cx == 0.0);
      CHECK(v.grad.a1 == 0.0);
    }
  }
}

TEST_CASE("reductions") {
  const std::vector<double> l{1.0, 2.0, 6.0};
  CHECK(reduce_losses(l) == 3.0);
  CHECK(reduce_losses(l, Reduction::Sum) == 9.0);
  CHECK(reduce_losses(std::vector<double>{}) == 0.0);
}
