#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cp/dataset.hpp"
#include "cp/detector.hpp"
#include "cp/follower.hpp"
#include "cp/loss.hpp"
#include "cp/model.hpp"
#include "cp/seed_search.hpp"
#include "cp/trainer.hpp"

namespace cp {

using json = nlohmann::json;

// Every tunable of the pipeline. Serialises to one JSON object whose
// sections mirror the struct; unknown keys are rejected on load.
struct RunConfig {
  std::uint64_t seed = 1;
  DetectorConfig detector;
  GenerationConfig generation;
  SearchWindow search;
  ModelConfig model;  // scales and n_stations are derived from the detector
  LossConfig loss;
  TrainConfig train;
  SplitConfig split;
  FollowConfig follow;

  // Model config with detector-derived scales and the user's layer sizes.
  ModelConfig effective_model() const;
  TrainConfig effective_train() const;  // train with the loss section folded in
  void validate() const;
};

json to_json(const DetectorConfig& c);
json to_json(const GenerationConfig& c);
json to_json(const SearchWindow& c);
json to_json(const ModelConfig& c);
json to_json(const LossConfig& c);
json to_json(const TrainConfig& c);
json to_json(const SplitConfig& c);
json to_json(const FollowConfig& c);
json to_json(const RunConfig& c);

DetectorConfig detector_from_json(const json& j);
ModelConfig model_from_json(const json& j);
RunConfig run_config_from_json(const json& j);

RunConfig load_run_config(const std::string& path);
// Applies "section.key=value" (value parsed as JSON, else taken as a string).
void apply_override(json& config, const std::string& assignment);

}  // namespace cp
