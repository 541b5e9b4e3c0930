#pragma once

#include "cp/tensor.hpp"

namespace cp {

// Overflow-safe forms; finite for every finite input.
double sigmoid(double x);
double softplus(double x);

Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);

}  // namespace cp
