#include "cp/layers.hpp"

#include <cmath>
#include <vector>

#include "cp/activations.hpp"
#include "cp/error.hpp"

namespace cp {

namespace {

// y[b][j] += sum_k x[b][k] * w[k][j], k ascending. Four k steps share one
// pass over y; each element still sees the additions in the same order.
void matmul_acc(const Tensor& x, const double* w, Tensor& y) {
  const std::size_t batch = x.rows(), in = x.row_size(), out = y.row_size();
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = x.values.data() + b * in;
    double* yr = y.values.data() + b * out;
    std::size_t k = 0;
    for (; k + 4 <= in; k += 4) {
      const double x0 = xr[k], x1 = xr[k + 1], x2 = xr[k + 2], x3 = xr[k + 3];
      const double* w0 = w + k * out;
      const double* w1 = w0 + out;
      const double* w2 = w1 + out;
      const double* w3 = w2 + out;
      for (std::size_t j = 0; j < out; ++j) {
        double v = yr[j];
        v += x0 * w0[j];
        v += x1 * w1[j];
        v += x2 * w2[j];
        v += x3 * w3[j];
        yr[j] = v;
      }
    }
    for (; k < in; ++k) {
      const double xv = xr[k];
      const double* wr = w + k * out;
      for (std::size_t j = 0; j < out; ++j) yr[j] += xv * wr[j];
    }
  }
}

void matmul_acc(const Tensor& x, const Tensor& w, Tensor& y) { matmul_acc(x, w.values.data(), y); }

// dw[k][j] += sum_b x[b][k] * dy[b][j], b ascending.
void outer_acc(const Tensor& x, const Tensor& dy, double* dw) {
  const std::size_t batch = x.rows(), in = x.row_size(), out = dy.row_size();
  std::size_t b = 0;
  for (; b + 4 <= batch; b += 4) {
    const double* x0 = x.values.data() + b * in;
    const double* x1 = x0 + in;
    const double* x2 = x1 + in;
    const double* x3 = x2 + in;
    const double* d0 = dy.values.data() + b * out;
    const double* d1 = d0 + out;
    const double* d2 = d1 + out;
    const double* d3 = d2 + out;
    for (std::size_t k = 0; k < in; ++k) {
      const double a0 = x0[k], a1 = x1[k], a2 = x2[k], a3 = x3[k];
      double* wr = dw + k * out;
      for (std::size_t j = 0; j < out; ++j) {
        double v = wr[j];
        v += a0 * d0[j];
        v += a1 * d1[j];
        v += a2 * d2[j];
        v += a3 * d3[j];
        wr[j] = v;
      }
    }
  }
  for (; b < batch; ++b) {
    const double* xr = x.values.data() + b * in;
    const double* dr = dy.values.data() + b * out;
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xr[k];
      double* wr = dw + k * out;
      for (std::size_t j = 0; j < out; ++j) wr[j] += xv * dr[j];
    }
  }
}

// dx[b][k] += dy[b][j] * w[k][j], j ascending. w is transposed first so the
// inner loop runs over contiguous memory.
void matmul_t_acc(const Tensor& dy, const double* w, Tensor& dx) {
  const std::size_t batch = dy.rows(), out = dy.row_size(), in = dx.row_size();
  thread_local std::vector<double> wt;
  wt.resize(in * out);
  for (std::size_t k = 0; k < in; ++k) {
    for (std::size_t j = 0; j < out; ++j) wt[j * in + k] = w[k * out + j];
  }
  for (std::size_t b = 0; b < batch; ++b) {
    const double* dr = dy.values.data() + b * out;
    double* xr = dx.values.data() + b * in;
    std::size_t j = 0;
    for (; j + 4 <= out; j += 4) {
      const double d0 = dr[j], d1 = dr[j + 1], d2 = dr[j + 2], d3 = dr[j + 3];
      const double* w0 = wt.data() + j * in;
      const double* w1 = w0 + in;
      const double* w2 = w1 + in;
      const double* w3 = w2 + in;
      for (std::size_t k = 0; k < in; ++k) {
        double v = xr[k];
        v += d0 * w0[k];
        v += d1 * w1[k];
        v += d2 * w2[k];
        v += d3 * w3[k];
        xr[k] = v;
      }
    }
    for (; j < out; ++j) {
      const double dv = dr[j];
      const double* wr = wt.data() + j * in;
      for (std::size_t k = 0; k < in; ++k) xr[k] += dv * wr[k];
    }
  }
}

void bias_acc(const Tensor& dy, Tensor& db) {
  const std::size_t batch = dy.rows(), out = dy.row_size();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < out; ++j) db[j] += dy.values[b * out + j];
  }
}

Tensor broadcast_rows(const Tensor& bias, std::size_t batch) {
  Tensor out({batch, bias.size()});
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy(bias.values.begin(), bias.values.end(), out.values.begin() + static_cast<long>(b * bias.size()));
  }
  return out;
}

const Tensor& param(const ParamSet& params, const std::string& key) {
  auto it = params.find(key);
  if (it == params.end()) throw Error("missing parameter '" + key + "'");
  return it->second;
}

Tensor& grad(ParamSet& grads, const std::string& key) {
  auto it = grads.find(key);
  if (it == grads.end()) throw Error("missing gradient slot '" + key + "'");
  return it->second;
}

void expect_shape(const ParamSet& params, const std::string& key, const std::vector<std::size_t>& shape) {
  const Tensor& t = param(params, key);
  if (t.shape != shape) {
    throw Error("shape mismatch in '" + key + "': expected " + shape_string(shape) + ", got " +
                shape_string(t.shape));
  }
}

void expect_width(const Sequence& x, std::size_t width, const std::string& layer) {
  if (x.empty()) throw Error(layer + ": empty input sequence");
  for (const auto& slab : x) {
    if (slab.rank() != 2 || slab.row_size() != width || slab.rows() != x.front().rows()) {
      throw Error(layer + ": input slab of shape " + shape_string(slab.shape) + ", expected width " +
                  std::to_string(width));
    }
  }
}

}  // namespace

void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : t.values) v = dist(rng);
}

// --- Conv1d ---------------------------------------------------------------

void Conv1d::init(ParamSet& params, std::mt19937_64& rng) const {
  if (kernel % 2 == 0) throw Error(name + ": kernel size must be odd");
  Tensor k({kernel, in, filters});
  glorot_uniform(k, kernel * in, kernel * filters, rng);
  params[name + ".kernel"] = std::move(k);
  params[name + ".bias"] = Tensor({filters});
}

void Conv1d::check(const ParamSet& params) const {
  if (kernel % 2 == 0) throw Error(name + ": kernel size must be odd");
  expect_shape(params, name + ".kernel", {kernel, in, filters});
  expect_shape(params, name + ".bias", {filters});
}

Sequence Conv1d::forward(const ParamSet& params, const Sequence& x) const {
  expect_width(x, in, name);
  const Tensor& k = param(params, name + ".kernel");
  const Tensor& bias = param(params, name + ".bias");
  const auto steps = static_cast<long>(x.size());
  const long half = static_cast<long>(kernel / 2);
  const std::size_t batch = x.front().rows();
  Sequence y;
  y.reserve(x.size());
  for (long t = 0; t < steps; ++t) {
    Tensor out = broadcast_rows(bias, batch);
    for (long j = 0; j < static_cast<long>(kernel); ++j) {
      const long src = t + j - half;
      if (src < 0 || src >= steps) continue;
      matmul_acc(x[static_cast<std::size_t>(src)], k.values.data() + static_cast<std::size_t>(j) * in * filters, out);
    }
    y.push_back(std::move(out));
  }
  return y;
}

Sequence Conv1d::backward(const ParamSet& params, const Sequence& x, const Sequence& dy, ParamSet& grads) const {
  const Tensor& k = param(params, name + ".kernel");
  Tensor& dk = grad(grads, name + ".kernel");
  Tensor& db = grad(grads, name + ".bias");
  const auto steps = static_cast<long>(x.size());
  const long half = static_cast<long>(kernel / 2);
  Sequence dx;
  dx.reserve(x.size());
  for (const auto& slab : x) dx.emplace_back(slab.shape);
  for (long t = 0; t < steps; ++t) {
    const Tensor& d = dy[static_cast<std::size_t>(t)];
    bias_acc(d, db);
    for (long j = 0; j < static_cast<long>(kernel); ++j) {
      const long src = t + j - half;
      if (src < 0 || src >= steps) continue;
      const std::size_t off = static_cast<std::size_t>(j) * in * filters;
      outer_acc(x[static_cast<std::size_t>(src)], d, dk.values.data() + off);
      matmul_t_acc(d, k.values.data() + off, dx[static_cast<std::size_t>(src)]);
    }
  }
  return dx;
}

// --- GruLayer -------------------------------------------------------------

void GruLayer::init(ParamSet& params, std::mt19937_64& rng) const {
  for (const char* g : {"z", "r", "h"}) {
    Tensor w({in, hidden});
    glorot_uniform(w, in, hidden, rng);
    params[name + ".W" + g] = std::move(w);
  }
  for (const char* g : {"z", "r", "h"}) {
    Tensor u({hidden, hidden});
    glorot_uniform(u, hidden, hidden, rng);
    params[name + ".U" + g] = std::move(u);
  }
  for (const char* g : {"z", "r", "h"}) params[name + ".b" + g] = Tensor({hidden});
}

void GruLayer::check(const ParamSet& params) const {
  for (const char* g : {"z", "r", "h"}) {
    expect_shape(params, name + ".W" + g, {in, hidden});
    expect_shape(params, name + ".U" + g, {hidden, hidden});
    expect_shape(params, name + ".b" + g, {hidden});
  }
}

Sequence GruLayer::forward(const ParamSet& params, const Sequence& x, const Tensor& h0, Cache* cache) const {
  expect_width(x, in, name);
  const std::size_t batch = x.front().rows();
  Tensor h({batch, hidden});
  if (!h0.values.empty()) {
    if (h0.size() == hidden) {
      h = broadcast_rows(h0, batch);
    } else if (h0.size() == batch * hidden) {
      h.values = h0.values;
    } else {
      throw Error(name + ": initial state of shape " + shape_string(h0.shape) + " does not match hidden size " +
                  std::to_string(hidden));
    }
  }
  const Tensor& wz = param(params, name + ".Wz");
  const Tensor& wr = param(params, name + ".Wr");
  const Tensor& wh = param(params, name + ".Wh");
  const Tensor& uz = param(params, name + ".Uz");
  const Tensor& ur = param(params, name + ".Ur");
  const Tensor& uh = param(params, name + ".Uh");
  const Tensor& bz = param(params, name + ".bz");
  const Tensor& br = param(params, name + ".br");
  const Tensor& bh = param(params, name + ".bh");

  if (cache) {
    cache->h0 = h;
    cache->z.clear();
    cache->r.clear();
    cache->c.clear();
    cache->h.clear();
  }
  Sequence out;
  out.reserve(x.size());
  for (const auto& xt : x) {
    Tensor z = broadcast_rows(bz, batch);
    matmul_acc(xt, wz, z);
    matmul_acc(h, uz, z);
    Tensor r = broadcast_rows(br, batch);
    matmul_acc(xt, wr, r);
    matmul_acc(h, ur, r);
    for (auto& v : z.values) v = sigmoid(v);
    for (auto& v : r.values) v = sigmoid(v);

    Tensor rh(h.shape);
    for (std::size_t i = 0; i < rh.size(); ++i) rh[i] = r[i] * h[i];
    Tensor c = broadcast_rows(bh, batch);
    matmul_acc(xt, wh, c);
    matmul_acc(rh, uh, c);
    for (auto& v : c.values) v = std::tanh(v);

    Tensor next(h.shape);
    for (std::size_t i = 0; i < next.size(); ++i) next[i] = (1.0 - z[i]) * h[i] + z[i] * c[i];
    h = next;
    if (cache) {
      cache->z.push_back(std::move(z));
      cache->r.push_back(std::move(r));
      cache->c.push_back(std::move(c));
      cache->h.push_back(next);
    }
    out.push_back(std::move(next));
  }
  return out;
}

Sequence GruLayer::backward(const ParamSet& params, const Sequence& x, const Cache& cache, const Sequence& dh,
                            ParamSet& grads) const {
  const Tensor& wz = param(params, name + ".Wz");
  const Tensor& wr = param(params, name + ".Wr");
  const Tensor& wh = param(params, name + ".Wh");
  const Tensor& uz = param(params, name + ".Uz");
  const Tensor& ur = param(params, name + ".Ur");
  const Tensor& uh = param(params, name + ".Uh");
  Tensor& dwz = grad(grads, name + ".Wz");
  Tensor& dwr = grad(grads, name + ".Wr");
  Tensor& dwh = grad(grads, name + ".Wh");
  Tensor& duz = grad(grads, name + ".Uz");
  Tensor& dur = grad(grads, name + ".Ur");
  Tensor& duh = grad(grads, name + ".Uh");
  Tensor& dbz = grad(grads, name + ".bz");
  Tensor& dbr = grad(grads, name + ".br");
  Tensor& dbh = grad(grads, name + ".bh");

  const std::size_t steps = x.size();
  if (cache.h.size() != steps || dh.size() != steps) throw Error(name + ": backward called without a matching forward");
  Sequence dx;
  dx.reserve(steps);
  for (const auto& slab : x) dx.emplace_back(slab.shape);

  Tensor carry(cache.h0.shape);
  for (std::size_t t = steps; t-- > 0;) {
    const Tensor& hp = t == 0 ? cache.h0 : cache.h[t - 1];
    const Tensor& z = cache.z[t];
    const Tensor& r = cache.r[t];
    const Tensor& c = cache.c[t];
    const std::size_t n = hp.size();

    Tensor daz(hp.shape), dar(hp.shape), dac(hp.shape), dhp(hp.shape), rh(hp.shape);
    for (std::size_t i = 0; i < n; ++i) {
      const double g = dh[t][i] + carry[i];
      const double dz = g * (c[i] - hp[i]);
      daz[i] = dz * z[i] * (1.0 - z[i]);
      dac[i] = g * z[i] * (1.0 - c[i] * c[i]);
      dhp[i] = g * (1.0 - z[i]);
      rh[i] = r[i] * hp[i];
    }
    outer_acc(x[t], dac, dwh.values.data());
    outer_acc(rh, dac, duh.values.data());
    bias_acc(dac, dbh);

    Tensor drh(hp.shape);
    matmul_t_acc(dac, uh.values.data(), drh);
    for (std::size_t i = 0; i < n; ++i) {
      dar[i] = drh[i] * hp[i] * r[i] * (1.0 - r[i]);
      dhp[i] += drh[i] * r[i];
    }
    outer_acc(x[t], daz, dwz.values.data());
    outer_acc(hp, daz, duz.values.data());
    bias_acc(daz, dbz);
    outer_acc(x[t], dar, dwr.values.data());
    outer_acc(hp, dar, dur.values.data());
    bias_acc(dar, dbr);

    matmul_t_acc(daz, wz.values.data(), dx[t]);
    matmul_t_acc(dar, wr.values.data(), dx[t]);
    matmul_t_acc(dac, wh.values.data(), dx[t]);
    matmul_t_acc(daz, uz.values.data(), dhp);
    matmul_t_acc(dar, ur.values.data(), dhp);
    carry = std::move(dhp);
  }
  return dx;
}

// --- Dense ----------------------------------------------------------------

void Dense::init(ParamSet& params, std::mt19937_64& rng) const {
  Tensor w({in, out});
  glorot_uniform(w, in, out, rng);
  params[name + ".W"] = std::move(w);
  params[name + ".b"] = Tensor({out});
}

void Dense::check(const ParamSet& params) const {
  expect_shape(params, name + ".W", {in, out});
  expect_shape(params, name + ".b", {out});
}

Tensor Dense::forward(const ParamSet& params, const Tensor& x) const {
  if (x.rank() != 2 || x.row_size() != in) {
    throw Error(name + ": input of shape " + shape_string(x.shape) + ", expected width " + std::to_string(in));
  }
  Tensor y = broadcast_rows(param(params, name + ".b"), x.rows());
  matmul_acc(x, param(params, name + ".W"), y);
  return y;
}

Tensor Dense::backward(const ParamSet& params, const Tensor& x, const Tensor& dy, ParamSet& grads) const {
  outer_acc(x, dy, grad(grads, name + ".W").values.data());
  bias_acc(dy, grad(grads, name + ".b"));
  Tensor dx(x.shape);
  matmul_t_acc(dy, param(params, name + ".W").values.data(), dx);
  return dx;
}

// --- single-sequence helpers ------------------------------------------------

Sequence to_sequence(const Tensor& x_seq) {
  if (x_seq.rank() != 2) throw Error("sequence tensor must be [T x D], got " + shape_string(x_seq.shape));
  Sequence seq;
  for (std::size_t t = 0; t < x_seq.rows(); ++t) {
    auto r = x_seq.row(t);
    seq.emplace_back(std::vector<std::size_t>{1, r.size()}, std::vector<double>(r.begin(), r.end()));
  }
  return seq;
}

Tensor from_sequence(const Sequence& seq) {
  if (seq.empty()) return Tensor({0, 0});
  const std::size_t width = seq.front().row_size();
  Tensor out({seq.size(), width});
  for (std::size_t t = 0; t < seq.size(); ++t) {
    if (seq[t].rows() != 1) throw Error("from_sequence expects a batch of one");
    std::copy(seq[t].values.begin(), seq[t].values.end(), out.values.begin() + static_cast<long>(t * width));
  }
  return out;
}

Tensor conv1d_forward(const Tensor& x_seq, const Tensor& kernel, const Tensor& bias) {
  if (kernel.rank() != 3) throw Error("conv1d: kernel must be [K x in x filters], got " + shape_string(kernel.shape));
  Conv1d conv{"conv", kernel.shape[1], kernel.shape[2], kernel.shape[0]};
  ParamSet params{{"conv.kernel", kernel}, {"conv.bias", bias}};
  conv.check(params);
  return from_sequence(conv.forward(params, to_sequence(x_seq)));
}

Tensor gru_layer_forward(const Tensor& x_seq, const Tensor& h0, const ParamSet& params, const GruLayer& layer) {
  layer.check(params);
  return from_sequence(layer.forward(params, to_sequence(x_seq), h0));
}

}  // namespace cp
