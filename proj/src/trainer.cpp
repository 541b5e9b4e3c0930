#include "cp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "cp/error.hpp"
#include "cp/follower.hpp"

namespace cp {

void TrainConfig::validate() const {
  if (epochs < 1) throw Error("epochs must be >= 1");
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error("threshold must be in (0, 1)");
  if (!(adam.lr > 0.0)) throw Error("learning rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw Error("lr_decay must be in (0, 1]");
  loss.validate();
}

const LengthMetrics* MetricsTable::find(std::size_t length) const {
  for (const auto& r : rows) {
    if (r.length == length) return &r;
  }
  return nullptr;
}

void finalize_rates(LengthMetrics& row) {
  auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  row.recall = ratio(row.tp, row.tp + row.fn);
  row.precision = ratio(row.tp, row.tp + row.fp);
  row.accuracy = ratio(row.tp + row.tn, row.tp + row.tn + row.fp + row.fn);
}

namespace {

PrefixBatch as_prefixes(std::span<const TrainingSample* const> batch) {
  PrefixBatch prefixes;
  prefixes.reserve(batch.size());
  for (const auto* s : batch) prefixes.emplace_back(s->points);
  return prefixes;
}

std::optional<double> opt_x(const TrainingSample& s) {
  return s.next ? std::optional<double>(s.next->x) : std::nullopt;
}
std::optional<double> opt_y(const TrainingSample& s) {
  return s.next ? std::optional<double>(s.next->y) : std::nullopt;
}

// Heads seen by the loss: the ellipse term needs a regression target when the
// label is true.
HeadPreact loss_heads(HeadPreact h, const TrainingSample& s) {
  if (s.label == 1 && !s.next) h.has_ellipse = false;
  return h;
}

struct PassResult {
  double loss_sum = 0.0;
  std::size_t count = 0;
  MetricsTable metrics;
};

PassResult evaluation_pass(const CatchProlongNet& net, const SampleGroups& samples, const TrainConfig* loss_cfg,
                           const EvalOptions& opt) {
  PassResult res;
  const double semiaxis = net.config().semiaxis_scale;
  for (const auto& [len, group] : samples) {
    if (group.empty()) continue;
    LengthMetrics row;
    row.length = len;
    row.samples = group.size();
    row.has_classification = net.has_prob(len);
    double area_sum = 0.0;
    std::size_t inside = 0;
    for (std::size_t start = 0; start < group.size(); start += opt.batch_size) {
      const std::size_t stop = std::min(group.size(), start + opt.batch_size);
      std::vector<const TrainingSample*> batch;
      for (std::size_t i = start; i < stop; ++i) batch.push_back(&group[i]);
      const auto trace = net.forward_trace(as_prefixes(batch));
      const auto heads = net.head_preacts(trace);
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const TrainingSample& s = *batch[b];
        if (loss_cfg) {
          const auto sample = make_loss_sample(s.label, loss_heads(heads[b], s), opt_x(s), opt_y(s), semiaxis);
          res.loss_sum += joint_loss(sample, loss_cfg->loss);
          ++res.count;
        }
        const ModelOutput out = net.to_output(heads[b]);
        if (out.prob) {
          const bool pred = *out.prob >= opt.threshold;
          if (pred && s.label == 1) ++row.tp;
          if (pred && s.label == 0) ++row.fp;
          if (!pred && s.label == 0) ++row.tn;
          if (!pred && s.label == 1) ++row.fn;
        }
        if (out.ellipse && s.label == 1 && s.next) {
          ++row.ellipses;
          area_sum += M_PI * out.ellipse->r1 * out.ellipse->r2;
          if (point_in_ellipse(*s.next, *out.ellipse)) ++inside;
        }
      }
    }
    finalize_rates(row);
    if (row.ellipses > 0) {
      row.mean_area = area_sum / static_cast<double>(row.ellipses);
      row.coverage = static_cast<double>(inside) / static_cast<double>(row.ellipses);
    }
    res.metrics.rows.push_back(row);
  }
  return res;
}

}  // namespace

double batch_loss(const CatchProlongNet& net, std::span<const TrainingSample* const> batch, const TrainConfig& cfg,
                  ParamSet* grads) {
  if (batch.empty()) return 0.0;
  const auto trace = net.forward_trace(as_prefixes(batch));
  const auto heads = net.head_preacts(trace);
  const double semiaxis = net.config().semiaxis_scale;
  std::vector<double> losses(batch.size());
  std::vector<HeadGrad> head_grads(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const TrainingSample& s = *batch[b];
    const LossValue lv = joint_loss_grad(s.label, loss_heads(heads[b], s), opt_x(s), opt_y(s), cfg.loss, semiaxis);
    losses[b] = lv.loss;
    head_grads[b] = lv.grad;
  }
  if (grads) {
    const double factor = cfg.reduction == Reduction::Mean ? 1.0 / static_cast<double>(batch.size()) : 1.0;
    for (auto& g : head_grads) {
      g.logit *= factor;
      g.cx *= factor;
      g.cy *= factor;
      g.a1 *= factor;
      g.a2 *= factor;
    }
    net.backward(trace, head_grads, *grads);
  }
  return reduce_losses(losses, cfg.reduction);
}

double dataset_loss(const CatchProlongNet& net, const SampleGroups& samples, const TrainConfig& cfg) {
  const auto res = evaluation_pass(net, samples, &cfg, EvalOptions{cfg.threshold, 512});
  return res.count == 0 ? 0.0 : res.loss_sum / static_cast<double>(res.count);
}

MetricsTable evaluate(const CatchProlongNet& net, const SampleGroups& samples, const EvalOptions& opt) {
  if (!(opt.threshold > 0.0 && opt.threshold < 1.0)) throw Error("threshold must be in (0, 1)");
  return evaluation_pass(net, samples, nullptr, opt).metrics;
}

TrainResult train(CatchProlongNet& net, const SampleGroups& train_set, const SampleGroups* test_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (total_samples(train_set) == 0) throw Error("training set is empty");

  std::mt19937_64 rng(cfg.shuffle_seed);
  AdamState adam(net.params(), cfg.adam);
  TrainResult result;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    adam.config.lr = cfg.adam.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch - 1));
    std::vector<std::vector<const TrainingSample*>> batches;
    for (const auto& [len, group] : train_set) {
      std::vector<const TrainingSample*> order;
      order.reserve(group.size());
      for (const auto& s : group) order.push_back(&s);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
        batches.emplace_back(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(stop));
      }
    }
    std::shuffle(batches.begin(), batches.end(), rng);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      ParamSet grads = zeros_like(net.params());
      const double loss = batch_loss(net, batch, cfg, &grads);
      if (!std::isfinite(loss)) {
        throw Error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(bi));
      }
      clip_global_norm(grads, cfg.clip_norm);
      adam_step(net.mutable_params(), grads, adam);
      const double weight = cfg.reduction == Reduction::Mean ? static_cast<double>(batch.size()) : 1.0;
      loss_sum += loss * weight;
      seen += batch.size();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = seen == 0 ? 0.0 : loss_sum / static_cast<double>(seen);
    if (test_set && total_samples(*test_set) > 0) {
      const auto pass = evaluation_pass(net, *test_set, &cfg, EvalOptions{cfg.threshold, 512});
      rec.test_loss = pass.count == 0 ? 0.0 : pass.loss_sum / static_cast<double>(pass.count);
      rec.metrics = pass.metrics;
    }
    if (on_epoch) on_epoch(rec);
    result.history.push_back(std::move(rec));
  }
  return result;
}

std::string metrics_table_csv(const MetricsTable& table, std::size_t n_stations) {
  std::vector<const LengthMetrics*> cols;
  for (std::size_t len = 3; len <= n_stations; ++len) cols.push_back(table.find(len));
  std::ostringstream os;
  os.precision(17);
  os << "metric";
  for (std::size_t len = 3; len <= n_stations; ++len) os << "," << len << " points";
  os << "\n";
  auto line = [&](const char* name, auto getter) {
    os << name;
    for (const auto* c : cols) {
      os << ",";
      if (c) os << getter(*c);
    }
    os << "\n";
  };
  line("Recall", [](const LengthMetrics& m) { return m.recall; });
  line("Precision", [](const LengthMetrics& m) { return m.precision; });
  line("Accuracy", [](const LengthMetrics& m) { return m.accuracy; });
  line("Ellipse square", [](const LengthMetrics& m) { return m.mean_area; });
  return os.str();
}

std::string metrics_tidy_csv(const MetricsTable& table) {
  std::ostringstream os;
  os.precision(17);
  os << "length,metric,value\n";
  for (const auto& r : table.rows) {
    auto put = [&](const char* name, double v) { os << r.length << "," << name << "," << v << "\n"; };
    put("samples", static_cast<double>(r.samples));
    if (r.has_classification) {
      put("tp", static_cast<double>(r.tp));
      put("fp", static_cast<double>(r.fp));
      put("tn", static_cast<double>(r.tn));
      put("fn", static_cast<double>(r.fn));
      put("recall", r.recall);
      put("precision", r.precision);
      put("accuracy", r.accuracy);
    }
    if (r.ellipses > 0) {
      put("ellipses", static_cast<double>(r.ellipses));
      put("mean_area_cm2", r.mean_area);
      put("coverage", r.coverage);
    }
  }
  return os.str();
}

}  // namespace cp
