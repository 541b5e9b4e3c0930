#pragma once

// Small training setups shared by the unit tests and the acceptance run.

#include <limits>

#include "cp/trainer.hpp"

namespace cp::testing {

// 32 samples taken at an even stride from every prefix of the candidates of
// three simulated events.
inline SampleGroups overfit_samples() {
  const auto events = simulate_events(DetectorConfig{}, GenerationConfig{}, 3, 3);
  std::vector<TrainingSample> all;
  for (std::size_t e = 0; e < events.size(); ++e) {
    const auto s = expand_candidates(events[e], run_seed_search(events[e], 5, SearchWindow{}), 5, e);
    all.insert(all.end(), s.begin(), s.end());
  }
  std::vector<TrainingSample> pick;
  for (std::size_t i = 0; i < all.size() && pick.size() < 32; i += all.size() / 32) pick.push_back(all[i]);
  return group_by_length(std::move(pick));
}

inline TrainConfig overfit_config() {
  TrainConfig tc;
  tc.epochs = 500;
  tc.batch_size = 32;
  tc.adam.lr = 3e-2;
  tc.lr_decay = 0.99;
  return tc;
}

struct OverfitResult {
  std::size_t first_epoch = 0;  // first epoch whose loss over the 32 samples is < 0.01, 0 if none
  double best = std::numeric_limits<double>::infinity();
};

// The loss is the mean joint loss over the whole set after each epoch.
inline OverfitResult overfit_probe() {
  const SampleGroups samples = overfit_samples();
  const TrainConfig tc = overfit_config();
  CatchProlongNet net(ModelConfig::for_detector(DetectorConfig{}), tc.init_seed);
  OverfitResult r;
  train(net, samples, nullptr, tc, [&](const EpochRecord& rec) {
    const double loss = dataset_loss(net, samples, tc);
    r.best = std::min(r.best, loss);
    if (loss < 0.01 && r.first_epoch == 0) r.first_epoch = rec.epoch;
  });
  return r;
}

}  // namespace cp::testing
