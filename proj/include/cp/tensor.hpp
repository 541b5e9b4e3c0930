#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace cp {

// Dense row-major tensor of doubles.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape_, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape_, std::vector<double> values_);

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape.front(); }
  // Product of all dimensions after the first.
  std::size_t row_size() const;

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double& at(std::size_t r, std::size_t c) { return values[r * row_size() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * row_size() + c]; }
  std::span<double> row(std::size_t r) { return {values.data() + r * row_size(), row_size()}; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * row_size(), row_size()}; }

  void fill(double v);
  bool all_finite() const;

  bool operator==(const Tensor&) const = default;
};

std::size_t shape_size(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

// Named parameter tensors. std::map keeps iteration order fixed, which the
// optimizer, the checkpoint writer and gradient reductions rely on.
using ParamSet = std::map<std::string, Tensor>;

// Same names and shapes, all zeros.
ParamSet zeros_like(const ParamSet& params);
void add_into(ParamSet& acc, const ParamSet& other);
void scale(ParamSet& params, double factor);
double global_norm(const ParamSet& params);
std::size_t parameter_count(const ParamSet& params);

}  // namespace cp
