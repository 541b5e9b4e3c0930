#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cp/detector.hpp"
#include "cp/layers.hpp"
#include "cp/loss.hpp"
#include "cp/seed_search.hpp"

namespace cp {

struct ModelConfig {
  std::size_t n_stations = 5;
  std::size_t conv_filters = 32;
  std::size_t conv_kernel = 3;
  std::vector<std::size_t> gru_hidden{32, 32};
  // Per-axis input divisors, cm.
  double scale_x = 1.0;
  double scale_y = 1.0;
  double scale_z = 1.0;
  // Semiaxes are semiaxis_scale * softplus(a), cm.
  double semiaxis_scale = 1.0;
  // Station planes, cm; the ellipse of a length-L prefix lies on station_z[L - 1].
  std::vector<double> station_z{30.0, 50.0, 70.0, 90.0, 110.0};
  // Centre = straight-line extrapolation of the last two points + centre_offset_scale * output.
  // When off the centre is output * scale.
  bool extrapolate_centre = true;
  double centre_offset_scale = 1.0;
  // Adds two inputs per point: its x/y deviation (cm / residual_scale) from the
  // line through the two previous points.
  bool residual_features = true;
  double residual_scale = 1.0;

  std::size_t input_features() const { return residual_features ? 5 : 3; }

  std::size_t max_length() const { return n_stations + 1; }
  void validate() const;
  // Scales taken from the detector: largest half-extents and the last plane.
  static ModelConfig for_detector(const DetectorConfig& det);

  bool operator==(const ModelConfig&) const = default;
};

struct ModelOutput {
  std::optional<double> prob;
  std::optional<Ellipse> ellipse;
};

// Point of the line through a and b at depth z (a.z != b.z).
XY extrapolate(const Point3& a, const Point3& b, double z);

using PrefixBatch = std::vector<std::span<const Point3>>;

// Conv layer, two one-directional GRU layers, then a sigmoid neuron and a
// 4-neuron regression head (2 linear centre, 2 softplus semiaxes) read from
// the last hidden state. A prefix of length 2 exposes only the ellipse, a
// full-length prefix only the probability.
class CatchProlongNet {
 public:
  CatchProlongNet(ModelConfig cfg, std::uint64_t seed);
  CatchProlongNet(ModelConfig cfg, ParamSet params);

  const ModelConfig& config() const { return cfg_; }
  const ParamSet& params() const { return params_; }
  ParamSet& mutable_params() { return params_; }

  bool has_prob(std::size_t length) const { return length >= 3; }
  bool has_ellipse(std::size_t length) const { return length <= cfg_.n_stations; }

  ModelOutput forward(std::span<const Point3> prefix) const;
  // All prefixes must share one length; results equal per-sample forward bit for bit.
  std::vector<ModelOutput> forward_batch(const PrefixBatch& prefixes) const;

  // Intermediate values kept for backpropagation.
  struct Trace {
    std::size_t length = 0;
    std::size_t batch = 0;
    Sequence input;
    Sequence conv_out;
    Sequence gru0_out;
    GruLayer::Cache gru0;
    GruLayer::Cache gru1;
    Tensor last;
    Tensor cls;  // [batch x 1] logits
    Tensor reg;  // [batch x 4] raw regression outputs (normalised centre, semiaxis pre-activations)
    std::vector<XY> base;  // centre origin per sample, cm
  };

  Trace forward_trace(const PrefixBatch& prefixes) const;
  // Head values in loss units (centre in cm), honouring head presence.
  std::vector<HeadPreact> head_preacts(const Trace& trace) const;
  ModelOutput to_output(const HeadPreact& heads) const;
  // Accumulates d(objective)/d(params) into grads given per-sample head adjoints.
  void backward(const Trace& trace, std::span<const HeadGrad> head_grads, ParamSet& grads) const;

 private:
  void build_layers();
  void check_length(std::size_t length) const;
  double centre_scale_x() const { return cfg_.extrapolate_centre ? cfg_.centre_offset_scale : cfg_.scale_x; }
  double centre_scale_y() const { return cfg_.extrapolate_centre ? cfg_.centre_offset_scale : cfg_.scale_y; }

  ModelConfig cfg_;
  ParamSet params_;
  Conv1d conv_;
  GruLayer gru0_;
  GruLayer gru1_;
  Dense cls_;
  Dense reg_;
};

}  // namespace cp
