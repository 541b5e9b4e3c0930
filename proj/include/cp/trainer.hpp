#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cp/adam.hpp"
#include "cp/dataset.hpp"
#include "cp/loss.hpp"
#include "cp/model.hpp"

namespace cp {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  LossConfig loss;
  AdamConfig adam;
  double clip_norm = 5.0;  // <= 0 disables clipping
  // lr of epoch e is adam.lr * lr_decay^(e - 1)
  double lr_decay = 1.0;
  double threshold = 0.5;
  std::uint64_t shuffle_seed = 11;
  std::uint64_t init_seed = 5;
  Reduction reduction = Reduction::Mean;

  void validate() const;
};

struct LengthMetrics {
  std::size_t length = 0;
  std::size_t samples = 0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  bool has_classification = false;
  double recall = 0.0;
  double precision = 0.0;
  double accuracy = 0.0;
  // Over true samples with a regression target.
  std::size_t ellipses = 0;
  double mean_area = 0.0;  // pi R1 R2, cm^2
  double coverage = 0.0;   // fraction of true next hits inside the ellipse
};

struct MetricsTable {
  std::vector<LengthMetrics> rows;  // ascending length; empty groups are absent

  const LengthMetrics* find(std::size_t length) const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  MetricsTable metrics;
};

struct TrainResult {
  std::vector<EpochRecord> history;
};

// Per-sample joint loss and head adjoints for a same-length batch; gradients
// of the reduced batch loss accumulate into grads when it is non-null.
double batch_loss(const CatchProlongNet& net, std::span<const TrainingSample* const> batch, const TrainConfig& cfg,
                  ParamSet* grads);

// Mean joint loss over all samples.
double dataset_loss(const CatchProlongNet& net, const SampleGroups& samples, const TrainConfig& cfg);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Adam on the mean joint loss of same-length batches. Each epoch shuffles
// every length group, cuts it into batches and visits the batches of all
// groups in one shuffled, interleaved order. Throws on a non-finite loss.
TrainResult train(CatchProlongNet& net, const SampleGroups& train_set, const SampleGroups* test_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct EvalOptions {
  double threshold = 0.5;
  std::size_t batch_size = 512;
};

MetricsTable evaluate(const CatchProlongNet& net, const SampleGroups& samples, const EvalOptions& opt = {});

// Confusion-matrix ratios; zero denominators yield 0.
void finalize_rates(LengthMetrics& row);

// CSV with the metric rows as lines and input lengths as columns.
std::string metrics_table_csv(const MetricsTable& table, std::size_t n_stations);
// One row per (length, metric, value).
std::string metrics_tidy_csv(const MetricsTable& table);

}  // namespace cp
