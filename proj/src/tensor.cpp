#include "cp/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "cp/error.hpp"

namespace cp {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape_, double fill)
    : shape(std::move(shape_)), values(shape_size(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> values_)
    : shape(std::move(shape_)), values(std::move(values_)) {
  if (values.size() != shape_size(shape)) {
    throw Error("tensor of shape " + shape_string(shape) + " given " + std::to_string(values.size()) + " values");
  }
}

std::size_t Tensor::row_size() const {
  if (shape.size() <= 1) return 1;
  return shape_size(std::vector<std::size_t>(shape.begin() + 1, shape.end()));
}

void Tensor::fill(double v) { std::fill(values.begin(), values.end(), v); }

bool Tensor::all_finite() const {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

ParamSet zeros_like(const ParamSet& params) {
  ParamSet out;
  for (const auto& [name, t] : params) out.emplace(name, Tensor(t.shape));
  return out;
}

void add_into(ParamSet& acc, const ParamSet& other) {
  for (const auto& [name, t] : other) {
    auto it = acc.find(name);
    if (it == acc.end() || it->second.shape != t.shape) throw Error("parameter mismatch on '" + name + "'");
    for (std::size_t i = 0; i < t.size(); ++i) it->second.values[i] += t.values[i];
  }
}

void scale(ParamSet& params, double factor) {
  for (auto& [name, t] : params) {
    for (double& v : t.values) v *= factor;
  }
}

double global_norm(const ParamSet& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    for (double v : t.values) sq += v * v;
  }
  return std::sqrt(sq);
}

std::size_t parameter_count(const ParamSet& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

}  // namespace cp
