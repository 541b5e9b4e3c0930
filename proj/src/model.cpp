#include "cp/model.hpp"

#include <algorithm>
#include <random>

#include "cp/activations.hpp"
#include "cp/error.hpp"

namespace cp {

XY extrapolate(const Point3& a, const Point3& b, double z) {
  const double t = (z - b.z) / (b.z - a.z);
  return XY{b.x + (b.x - a.x) * t, b.y + (b.y - a.y) * t};
}

void ModelConfig::validate() const {
  if (n_stations < 2) throw Error("model needs at least 2 stations");
  if (conv_filters == 0) throw Error("conv_filters must be positive");
  if (conv_kernel % 2 == 0) throw Error("conv_kernel must be odd");
  if (gru_hidden.size() != 2) throw Error("the network has exactly two GRU layers");
  for (auto h : gru_hidden) {
    if (h == 0) throw Error("GRU hidden sizes must be positive");
  }
  if (!(scale_x > 0.0 && scale_y > 0.0 && scale_z > 0.0 && semiaxis_scale > 0.0)) {
    throw Error("normalisation scales must be positive");
  }
  if (!(centre_offset_scale > 0.0 && residual_scale > 0.0)) throw Error("offset scales must be positive");
  if (station_z.size() != n_stations) throw Error("model station_z must list one plane per station");
  for (std::size_t s = 1; s < station_z.size(); ++s) {
    if (!(station_z[s] > station_z[s - 1])) throw Error("model station_z must increase");
  }
  if (!(station_z.front() > 0.0)) throw Error("model station_z must be positive");
}

ModelConfig ModelConfig::for_detector(const DetectorConfig& det) {
  det.validate();
  ModelConfig cfg;
  cfg.n_stations = det.n_stations();
  cfg.scale_x = 0.0;
  cfg.scale_y = 0.0;
  for (std::size_t s = 0; s < det.n_stations(); ++s) {
    cfg.scale_x = std::max(cfg.scale_x, det.half_x(s));
    cfg.scale_y = std::max(cfg.scale_y, det.half_y(s));
  }
  cfg.scale_z = det.station_z.back();
  cfg.station_z = det.station_z;
  return cfg;
}

CatchProlongNet::CatchProlongNet(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  build_layers();
  std::mt19937_64 rng(seed);
  conv_.init(params_, rng);
  gru0_.init(params_, rng);
  gru1_.init(params_, rng);
  cls_.init(params_, rng);
  reg_.init(params_, rng);
}

CatchProlongNet::CatchProlongNet(ModelConfig cfg, ParamSet params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  build_layers();
  conv_.check(params_);
  gru0_.check(params_);
  gru1_.check(params_);
  cls_.check(params_);
  reg_.check(params_);
  const std::size_t expected = 2 + 9 + 9 + 2 + 2;
  if (params_.size() != expected) {
    throw Error("parameter set holds " + std::to_string(params_.size()) + " tensors, the model expects " +
                std::to_string(expected));
  }
}

void CatchProlongNet::build_layers() {
  conv_ = Conv1d{"conv", cfg_.input_features(), cfg_.conv_filters, cfg_.conv_kernel};
  gru0_ = GruLayer{"gru0", cfg_.conv_filters, cfg_.gru_hidden[0]};
  gru1_ = GruLayer{"gru1", cfg_.gru_hidden[0], cfg_.gru_hidden[1]};
  cls_ = Dense{"cls", cfg_.gru_hidden[1], 1};
  reg_ = Dense{"reg", cfg_.gru_hidden[1], 4};
}

void CatchProlongNet::check_length(std::size_t length) const {
  if (length < 2 || length > cfg_.max_length()) {
    throw Error("prefix length " + std::to_string(length) + " outside [2, " + std::to_string(cfg_.max_length()) + "]");
  }
}

CatchProlongNet::Trace CatchProlongNet::forward_trace(const PrefixBatch& prefixes) const {
  Trace tr;
  tr.batch = prefixes.size();
  if (prefixes.empty()) return tr;
  tr.length = prefixes.front().size();
  check_length(tr.length);
  for (const auto& p : prefixes) {
    if (p.size() != tr.length) throw Error("forward_batch needs prefixes of equal length; group them by length");
  }

  const std::size_t f = cfg_.input_features();
  for (std::size_t t = 0; t < tr.length; ++t) {
    Tensor slab({tr.batch, f});
    for (std::size_t b = 0; b < tr.batch; ++b) {
      const Point3& pt = prefixes[b][t];
      slab.at(b, 0) = pt.x / cfg_.scale_x;
      slab.at(b, 1) = pt.y / cfg_.scale_y;
      slab.at(b, 2) = pt.z / cfg_.scale_z;
      if (cfg_.residual_features && t >= 2) {
        const XY e = extrapolate(prefixes[b][t - 2], prefixes[b][t - 1], pt.z);
        slab.at(b, 3) = (pt.x - e.x) / cfg_.residual_scale;
        slab.at(b, 4) = (pt.y - e.y) / cfg_.residual_scale;
      }
    }
    tr.input.push_back(std::move(slab));
  }
  tr.base.assign(tr.batch, XY{});
  if (cfg_.extrapolate_centre && has_ellipse(tr.length)) {
    const double z = cfg_.station_z[tr.length - 1];
    for (std::size_t b = 0; b < tr.batch; ++b) {
      tr.base[b] = extrapolate(prefixes[b][tr.length - 2], prefixes[b][tr.length - 1], z);
    }
  }
  tr.conv_out = conv_.forward(params_, tr.input);
  tr.gru0_out = gru0_.forward(params_, tr.conv_out, Tensor{}, &tr.gru0);
  const Sequence top = gru1_.forward(params_, tr.gru0_out, Tensor{}, &tr.gru1);
  tr.last = top.back();
  tr.cls = cls_.forward(params_, tr.last);
  tr.reg = reg_.forward(params_, tr.last);
  return tr;
}

std::vector<HeadPreact> CatchProlongNet::head_preacts(const Trace& tr) const {
  std::vector<HeadPreact> out(tr.batch);
  const bool prob = has_prob(tr.length);
  const bool ellipse = has_ellipse(tr.length);
  for (std::size_t b = 0; b < tr.batch; ++b) {
    HeadPreact& h = out[b];
    if (prob) h.logit = tr.cls.at(b, 0);
    h.has_ellipse = ellipse;
    if (ellipse) {
      h.cx = tr.base[b].x + tr.reg.at(b, 0) * centre_scale_x();
      h.cy = tr.base[b].y + tr.reg.at(b, 1) * centre_scale_y();
      h.a1 = tr.reg.at(b, 2);
      h.a2 = tr.reg.at(b, 3);
    }
  }
  return out;
}

ModelOutput CatchProlongNet::to_output(const HeadPreact& h) const {
  ModelOutput out;
  if (h.logit) out.prob = sigmoid(*h.logit);
  if (h.has_ellipse) {
    out.ellipse = Ellipse{h.cx, h.cy, cfg_.semiaxis_scale * softplus(h.a1), cfg_.semiaxis_scale * softplus(h.a2)};
  }
  return out;
}

std::vector<ModelOutput> CatchProlongNet::forward_batch(const PrefixBatch& prefixes) const {
  const Trace tr = forward_trace(prefixes);
  std::vector<ModelOutput> out;
  out.reserve(tr.batch);
  for (const auto& h : head_preacts(tr)) out.push_back(to_output(h));
  return out;
}

ModelOutput CatchProlongNet::forward(std::span<const Point3> prefix) const {
  check_length(prefix.size());
  return forward_batch(PrefixBatch{prefix}).front();
}

void CatchProlongNet::backward(const Trace& tr, std::span<const HeadGrad> head_grads, ParamSet& grads) const {
  if (tr.batch == 0) return;
  if (head_grads.size() != tr.batch) throw Error("backward: one head gradient per batch row required");
  Tensor dcls({tr.batch, 1});
  Tensor dreg({tr.batch, 4});
  const bool prob = has_prob(tr.length);
  const bool ellipse = has_ellipse(tr.length);
  for (std::size_t b = 0; b < tr.batch; ++b) {
    const HeadGrad& g = head_grads[b];
    if (prob) dcls.at(b, 0) = g.logit;
    if (ellipse) {
      dreg.at(b, 0) = g.cx * centre_scale_x();
      dreg.at(b, 1) = g.cy * centre_scale_y();
      dreg.at(b, 2) = g.a1;
      dreg.at(b, 3) = g.a2;
    }
  }
  Tensor dlast = cls_.backward(params_, tr.last, dcls, grads);
  const Tensor dlast_reg = reg_.backward(params_, tr.last, dreg, grads);
  for (std::size_t i = 0; i < dlast.size(); ++i) dlast[i] += dlast_reg[i];

  Sequence dtop;
  for (std::size_t t = 0; t < tr.length; ++t) dtop.emplace_back(tr.last.shape);
  dtop.back() = std::move(dlast);
  const Sequence dgru0 = gru1_.backward(params_, tr.gru0_out, tr.gru1, dtop, grads);
  const Sequence dconv = gru0_.backward(params_, tr.conv_out, tr.gru0, dgru0, grads);
  conv_.backward(params_, tr.input, dconv, grads);
}

}  // namespace cp
