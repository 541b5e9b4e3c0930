#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cp/tensor.hpp"

namespace cp {

// A batch of equal-length sequences in sequence-major layout: element t is a
// [batch x features] slab. Every kernel computes each batch row with the same
// fixed accumulation order, so a row's result does not depend on the batch it
// travels in.
using Sequence = std::vector<Tensor>;

// Glorot-uniform fill in +-sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

// Same-length, zero-padded 1-D convolution along the sequence axis.
// Parameters: <name>.kernel [K x in x filters], <name>.bias [filters].
struct Conv1d {
  std::string name;
  std::size_t in = 0;
  std::size_t filters = 0;
  std::size_t kernel = 3;

  void init(ParamSet& params, std::mt19937_64& rng) const;
  void check(const ParamSet& params) const;
  Sequence forward(const ParamSet& params, const Sequence& x) const;
  // Accumulates parameter gradients into `grads`, returns the input adjoint.
  Sequence backward(const ParamSet& params, const Sequence& x, const Sequence& dy, ParamSet& grads) const;
};

// Gated recurrent unit:
//   z = sig(x Wz + h Uz + bz),  r = sig(x Wr + h Ur + br)
//   c = tanh(x Wh + (r * h) Uh + bh),  h' = (1 - z) * h + z * c
// Parameters <name>.{Wz,Wr,Wh} [in x hidden], <name>.{Uz,Ur,Uh} [hidden x hidden],
// <name>.{bz,br,bh} [hidden].
struct GruLayer {
  std::string name;
  std::size_t in = 0;
  std::size_t hidden = 0;

  struct Cache {
    Tensor h0;
    Sequence z, r, c, h;
  };

  void init(ParamSet& params, std::mt19937_64& rng) const;
  void check(const ParamSet& params) const;
  // h0 may be empty (zeros).
  Sequence forward(const ParamSet& params, const Sequence& x, const Tensor& h0, Cache* cache = nullptr) const;
  // dh holds the adjoint of every output state; the recurrence adds the
  // carried part. Returns the input adjoint.
  Sequence backward(const ParamSet& params, const Sequence& x, const Cache& cache, const Sequence& dh,
                    ParamSet& grads) const;
};

// y = x W + b with W [in x out], b [out].
struct Dense {
  std::string name;
  std::size_t in = 0;
  std::size_t out = 0;

  void init(ParamSet& params, std::mt19937_64& rng) const;
  void check(const ParamSet& params) const;
  Tensor forward(const ParamSet& params, const Tensor& x) const;
  Tensor backward(const ParamSet& params, const Tensor& x, const Tensor& dy, ParamSet& grads) const;
};

// Single-sequence conveniences over the layer structs.
Tensor conv1d_forward(const Tensor& x_seq, const Tensor& kernel, const Tensor& bias);
Tensor gru_layer_forward(const Tensor& x_seq, const Tensor& h0, const ParamSet& params, const GruLayer& layer);

// Splits a [T x D] tensor into a batch-of-one Sequence and back.
Sequence to_sequence(const Tensor& x_seq);
Tensor from_sequence(const Sequence& seq);

}  // namespace cp
