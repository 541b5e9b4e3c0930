#include "cp/loss.hpp"

#include <algorithm>
#include <cmath>

#include "cp/activations.hpp"
#include "cp/error.hpp"

namespace cp {

void LossConfig::validate() const {
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) throw Error("loss weights must be non-negative");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("alpha must be in [0, 1]");
  if (!(gamma >= 0.0)) throw Error("gamma must be non-negative");
  if (!(prob_clamp > 0.0 && prob_clamp < 0.5)) throw Error("prob_clamp must be in (0, 0.5)");
  if (!(dist_eps > 0.0)) throw Error("dist_eps must be positive");
}

namespace {

void check_label(int label) {
  if (label != 0 && label != 1) throw Error("loss label must be 0 or 1, got " + std::to_string(label));
}

// (1 - q)^g with 0^0 = 1.
double focal_weight(double base, double gamma) { return gamma == 0.0 ? 1.0 : std::pow(base, gamma); }

// d/dq of the focal loss at clamped probability q.
double focal_dq(int label, double q, double alpha, double gamma) {
  if (label == 1) {
    const double w = focal_weight(1.0 - q, gamma);
    const double dw = gamma == 0.0 ? 0.0 : -gamma * std::pow(1.0 - q, gamma - 1.0);
    return -alpha * (dw * std::log(q) + w / q);
  }
  const double w = focal_weight(q, gamma);
  const double dw = gamma == 0.0 ? 0.0 : gamma * std::pow(q, gamma - 1.0);
  return -(1.0 - alpha) * (dw * std::log1p(-q) - w / (1.0 - q));
}

double gate(int label, const LossConfig& cfg) { return std::max(cfg.lambda1, 1.0 - label); }

}  // namespace

double focal_loss(int label, double prob, double alpha, double gamma, double eps) {
  check_label(label);
  const double q = std::clamp(prob, eps, 1.0 - eps);
  if (label == 1) return -alpha * focal_weight(1.0 - q, gamma) * std::log(q);
  return -(1.0 - alpha) * focal_weight(q, gamma) * std::log1p(-q);
}

double joint_loss(const LossSample& s, const LossConfig& cfg) {
  check_label(s.label);
  if (!s.prob && !s.ellipse) throw Error("loss sample carries neither a probability nor an ellipse");
  double j = 0.0;
  if (s.prob) j += gate(s.label, cfg) * focal_loss(s.label, *s.prob, cfg.alpha, cfg.gamma, cfg.prob_clamp);
  if (s.ellipse && s.label == 1) {
    const Ellipse& e = *s.ellipse;
    if (!(e.r1 > 0.0 && e.r2 > 0.0)) throw Error("ellipse semiaxes must be positive");
    if (!s.next_x || !s.next_y) throw Error("true-track ellipse sample lacks the true next point");
    const double u = (*s.next_x - e.cx) / e.r1;
    const double v = (*s.next_y - e.cy) / e.r2;
    j += cfg.lambda2 * std::sqrt(u * u + v * v + cfg.dist_eps) + cfg.lambda3 * e.r1 * e.r2;
  }
  return j;
}

LossSample make_loss_sample(int label, const HeadPreact& heads, std::optional<double> next_x,
                            std::optional<double> next_y, double semiaxis_scale) {
  LossSample s;
  s.label = label;
  if (heads.logit) s.prob = sigmoid(*heads.logit);
  if (heads.has_ellipse) {
    s.ellipse = Ellipse{heads.cx, heads.cy, semiaxis_scale * softplus(heads.a1), semiaxis_scale * softplus(heads.a2)};
  }
  s.next_x = next_x;
  s.next_y = next_y;
  return s;
}

LossValue joint_loss_grad(int label, const HeadPreact& heads, std::optional<double> next_x,
                          std::optional<double> next_y, const LossConfig& cfg, double semiaxis_scale) {
  const LossSample s = make_loss_sample(label, heads, next_x, next_y, semiaxis_scale);
  LossValue out;
  out.loss = joint_loss(s, cfg);

  if (heads.logit) {
    const double q_raw = *s.prob;
    const double eps = cfg.prob_clamp;
    // Clamping flattens the loss outside [eps, 1 - eps].
    if (q_raw > eps && q_raw < 1.0 - eps) {
      out.grad.logit = gate(label, cfg) * focal_dq(label, q_raw, cfg.alpha, cfg.gamma) * q_raw * (1.0 - q_raw);
    }
  }
  if (heads.has_ellipse && label == 1) {
    const Ellipse& e = *s.ellipse;
    const double u = (*next_x - e.cx) / e.r1;
    const double v = (*next_y - e.cy) / e.r2;
    const double d = std::sqrt(u * u + v * v + cfg.dist_eps);
    out.grad.cx = -cfg.lambda2 * u / (e.r1 * d);
    out.grad.cy = -cfg.lambda2 * v / (e.r2 * d);
    const double d_r1 = -cfg.lambda2 * u * u / (e.r1 * d) + cfg.lambda3 * e.r2;
    const double d_r2 = -cfg.lambda2 * v * v / (e.r2 * d) + cfg.lambda3 * e.r1;
    out.grad.a1 = d_r1 * semiaxis_scale * sigmoid(heads.a1);
    out.grad.a2 = d_r2 * semiaxis_scale * sigmoid(heads.a2);
  }
  return out;
}

double reduce_losses(std::span<const double> losses, Reduction reduction) {
  double sum = 0.0;
  for (double l : losses) sum += l;
  if (reduction == Reduction::Sum || losses.empty()) return sum;
  return sum / static_cast<double>(losses.size());
}

}  // namespace cp
