#include "cp/adam.hpp"

#include <cmath>

#include "cp/error.hpp"

namespace cp {

AdamState::AdamState(const ParamSet& params, AdamConfig cfg)
    : config(cfg), step(0), m(zeros_like(params)), v(zeros_like(params)) {}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state) {
  if (state.m.size() != params.size()) throw Error("adam: optimizer state does not mirror the parameters");
  state.step += 1;
  const auto& cfg = state.config;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : params) {
    auto g_it = grads.find(name);
    auto m_it = state.m.find(name);
    auto v_it = state.v.find(name);
    if (g_it == grads.end() || m_it == state.m.end() || v_it == state.v.end()) {
      throw Error("adam: no gradient or moment for '" + name + "'");
    }
    const Tensor& g = g_it->second;
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    if (g.shape != p.shape || m.shape != p.shape || v.shape != p.shape) {
      throw Error("adam: shape mismatch on '" + name + "'");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

double clip_global_norm(ParamSet& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) scale(grads, max_norm / norm);
  return norm;
}

GradCheckResult check_gradients(ParamSet params, const ParamSet& analytic,
                                const std::function<double(const ParamSet&)>& objective, double step,
                                double floor, std::size_t max_per_tensor) {
  GradCheckResult res;
  for (auto& [name, tensor] : params) {
    auto a_it = analytic.find(name);
    if (a_it == analytic.end() || a_it->second.shape != tensor.shape) {
      throw Error("gradient check: analytic gradient missing for '" + name + "'");
    }
    const std::size_t n = tensor.size();
    const std::size_t stride = (max_per_tensor > 0 && n > max_per_tensor) ? n / max_per_tensor : 1;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = tensor[i];
      tensor[i] = orig + step;
      const double fp = objective(params);
      tensor[i] = orig - step;
      const double fm = objective(params);
      tensor[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = a_it->second[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++res.checked;
      if (err >= res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_param = name;
        res.worst_index = i;
        res.analytic = a;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace cp
