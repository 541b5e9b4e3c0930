#pragma once

#include <optional>
#include <span>

namespace cp {

struct LossConfig {
  double lambda1 = 0.5;   // classification gate floor
  double lambda2 = 0.35;  // point-in-ellipse distance
  double lambda3 = 0.15;  // ellipse size
  double alpha = 0.95;    // focal weight of the true-track class
  double gamma = 2.0;
  double prob_clamp = 1e-7;
  double dist_eps = 1e-12;

  void validate() const;
};

struct Ellipse {
  double cx = 0.0;
  double cy = 0.0;
  double r1 = 1.0;  // semiaxis along x
  double r2 = 1.0;  // semiaxis along y
};

struct LossSample {
  int label = 0;                  // p, 0 = ghost, 1 = true track
  std::optional<double> prob;     // predicted p'
  std::optional<Ellipse> ellipse; // predicted window on the next station
  std::optional<double> next_x;   // true continuation, required when label = 1 and ellipse is set
  std::optional<double> next_y;
};

// Balanced focal loss; the probability is clamped into [eps, 1 - eps].
double focal_loss(int label, double prob, double alpha, double gamma, double eps = 1e-7);

// max(l1, 1 - p) FL(p, p') + p (l2 sqrt(((x - x')/R1)^2 + ((y - y')/R2)^2 + eps_d) + l3 R1 R2),
// dropping the term of any absent head. Throws on contract violations.
double joint_loss(const LossSample& sample, const LossConfig& cfg);

// Raw head values feeding the activations: the logit of p', the linear
// centre (already in cm) and the pre-softplus semiaxes. R = semiaxis_scale * softplus(a).
struct HeadPreact {
  std::optional<double> logit;
  double cx = 0.0;
  double cy = 0.0;
  double a1 = 0.0;
  double a2 = 0.0;
  bool has_ellipse = false;
};

struct HeadGrad {
  double logit = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  double a1 = 0.0;
  double a2 = 0.0;
};

struct LossValue {
  double loss = 0.0;
  HeadGrad grad;
};

// Builds the LossSample seen by joint_loss from head pre-activations.
LossSample make_loss_sample(int label, const HeadPreact& heads, std::optional<double> next_x,
                            std::optional<double> next_y, double semiaxis_scale = 1.0);

// J and its exact gradient with respect to the head pre-activations.
LossValue joint_loss_grad(int label, const HeadPreact& heads, std::optional<double> next_x,
                          std::optional<double> next_y, const LossConfig& cfg, double semiaxis_scale = 1.0);

enum class Reduction { Mean, Sum };

double reduce_losses(std::span<const double> losses, Reduction reduction = Reduction::Mean);

}  // namespace cp
