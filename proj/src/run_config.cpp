#include "cp/run_config.hpp"

#include <fstream>
#include <set>

#include "cp/error.hpp"

namespace cp {

namespace {

// Reads known keys of one JSON object and rejects everything else.
class Reader {
 public:
  Reader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw Error("config section '" + section_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& field) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      field = it->template get<T>();
    } catch (const json::exception& e) {
      throw Error("config key '" + section_ + "." + key + "': " + e.what());
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw Error("unknown config key '" + section_ + "." + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

void read_detector(const json& j, DetectorConfig& c) {
  Reader r(j, "detector");
  r.get("station_z", c.station_z);
  r.get("half_extent_x", c.half_extent_x);
  r.get("half_extent_y", c.half_extent_y);
  r.get("station0_half_x", c.station0_half_x);
  r.get("station0_half_y", c.station0_half_y);
  r.get("smear_sigma", c.smear_sigma);
  std::string mode = to_string(c.fake_mode);
  r.get("fake_mode", mode);
  c.fake_mode = fake_mode_from_string(mode);
  r.get("fake_fraction", c.fake_fraction);
  r.get("uniform_fakes_per_hit", c.uniform_fakes_per_hit);
  r.finish();
}

void read_generation(const json& j, GenerationConfig& c) {
  Reader r(j, "generation");
  r.get("min_tracks", c.min_tracks);
  r.get("max_tracks", c.max_tracks);
  r.get("kappa_min", c.kappa_min);
  r.get("kappa_max", c.kappa_max);
  r.get("phi0_min", c.phi0_min);
  r.get("phi0_max", c.phi0_max);
  r.get("ty_min", c.ty_min);
  r.get("ty_max", c.ty_max);
  r.get("max_turn", c.max_turn);
  r.finish();
}

void read_search(const json& j, SearchWindow& c) {
  Reader r(j, "search");
  r.get("dy", c.dy);
  r.get("dtheta_max", c.dtheta_max);
  r.get("rotation_from_target", c.rotation_from_target);
  r.finish();
}

void read_model_layers(const json& j, ModelConfig& c) {
  Reader r(j, "model");
  r.get("conv_filters", c.conv_filters);
  r.get("conv_kernel", c.conv_kernel);
  r.get("gru_hidden", c.gru_hidden);
  r.get("semiaxis_scale", c.semiaxis_scale);
  r.get("extrapolate_centre", c.extrapolate_centre);
  r.get("centre_offset_scale", c.centre_offset_scale);
  r.get("residual_features", c.residual_features);
  r.get("residual_scale", c.residual_scale);
  r.finish();
}

void read_loss(const json& j, LossConfig& c, Reduction& reduction) {
  Reader r(j, "loss");
  r.get("lambda1", c.lambda1);
  r.get("lambda2", c.lambda2);
  r.get("lambda3", c.lambda3);
  r.get("alpha", c.alpha);
  r.get("gamma", c.gamma);
  r.get("prob_clamp", c.prob_clamp);
  r.get("dist_eps", c.dist_eps);
  std::string red = reduction == Reduction::Mean ? "mean" : "sum";
  r.get("reduction", red);
  if (red != "mean" && red != "sum") throw Error("loss.reduction must be 'mean' or 'sum'");
  reduction = red == "mean" ? Reduction::Mean : Reduction::Sum;
  r.finish();
}

void read_train(const json& j, TrainConfig& c) {
  Reader r(j, "train");
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("lr", c.adam.lr);
  r.get("beta1", c.adam.beta1);
  r.get("beta2", c.adam.beta2);
  r.get("adam_eps", c.adam.eps);
  r.get("clip_norm", c.clip_norm);
  r.get("lr_decay", c.lr_decay);
  r.get("threshold", c.threshold);
  r.get("shuffle_seed", c.shuffle_seed);
  r.get("init_seed", c.init_seed);
  r.finish();
}

void read_split(const json& j, SplitConfig& c) {
  Reader r(j, "split");
  r.get("train_fraction", c.train_fraction);
  r.get("train_ghost_ratio", c.train_ghost_ratio);
  r.get("test_ghost_ratio", c.test_ghost_ratio);
  r.get("seed", c.seed);
  r.finish();
}

void read_follow(const json& j, FollowConfig& c) {
  Reader r(j, "follow");
  r.get("prune_threshold", c.prune_threshold);
  r.get("accept_threshold", c.accept_threshold);
  std::size_t branches = c.max_branches == std::numeric_limits<std::size_t>::max() ? 0 : c.max_branches;
  r.get("max_branches", branches);
  c.max_branches = branches == 0 ? std::numeric_limits<std::size_t>::max() : branches;
  r.get("ellipse_inflate", c.ellipse_inflate);
  r.get("allow_early_stop", c.allow_early_stop);
  r.get("max_candidates", c.max_candidates);
  r.finish();
}

}  // namespace

ModelConfig RunConfig::effective_model() const {
  ModelConfig m = ModelConfig::for_detector(detector);
  m.conv_filters = model.conv_filters;
  m.conv_kernel = model.conv_kernel;
  m.gru_hidden = model.gru_hidden;
  m.semiaxis_scale = model.semiaxis_scale;
  m.extrapolate_centre = model.extrapolate_centre;
  m.centre_offset_scale = model.centre_offset_scale;
  m.residual_features = model.residual_features;
  m.residual_scale = model.residual_scale;
  return m;
}

TrainConfig RunConfig::effective_train() const {
  TrainConfig t = train;
  t.loss = loss;
  return t;
}

void RunConfig::validate() const {
  detector.validate();
  generation.validate();
  search.validate();
  effective_model().validate();
  effective_train().validate();
  split.validate();
  follow.validate();
}

json to_json(const DetectorConfig& c) {
  return json{{"station_z", c.station_z},
              {"half_extent_x", c.half_extent_x},
              {"half_extent_y", c.half_extent_y},
              {"station0_half_x", c.station0_half_x},
              {"station0_half_y", c.station0_half_y},
              {"smear_sigma", c.smear_sigma},
              {"fake_mode", to_string(c.fake_mode)},
              {"fake_fraction", c.fake_fraction},
              {"uniform_fakes_per_hit", c.uniform_fakes_per_hit}};
}

json to_json(const GenerationConfig& c) {
  return json{{"min_tracks", c.min_tracks}, {"max_tracks", c.max_tracks}, {"kappa_min", c.kappa_min},
              {"kappa_max", c.kappa_max},   {"phi0_min", c.phi0_min},     {"phi0_max", c.phi0_max},
              {"ty_min", c.ty_min},         {"ty_max", c.ty_max},         {"max_turn", c.max_turn}};
}

json to_json(const SearchWindow& c) {
  return json{{"dy", c.dy}, {"dtheta_max", c.dtheta_max}, {"rotation_from_target", c.rotation_from_target}};
}

json to_json(const ModelConfig& c) {
  return json{{"n_stations", c.n_stations},     {"conv_filters", c.conv_filters}, {"conv_kernel", c.conv_kernel},
              {"gru_hidden", c.gru_hidden},     {"scale_x", c.scale_x},           {"scale_y", c.scale_y},
              {"scale_z", c.scale_z},           {"semiaxis_scale", c.semiaxis_scale},
              {"station_z", c.station_z},       {"extrapolate_centre", c.extrapolate_centre},
              {"centre_offset_scale", c.centre_offset_scale},
              {"residual_features", c.residual_features},
              {"residual_scale", c.residual_scale}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig c;
  Reader r(j, "model");
  r.get("n_stations", c.n_stations);
  r.get("conv_filters", c.conv_filters);
  r.get("conv_kernel", c.conv_kernel);
  r.get("gru_hidden", c.gru_hidden);
  r.get("scale_x", c.scale_x);
  r.get("scale_y", c.scale_y);
  r.get("scale_z", c.scale_z);
  r.get("semiaxis_scale", c.semiaxis_scale);
  r.get("station_z", c.station_z);
  r.get("extrapolate_centre", c.extrapolate_centre);
  r.get("centre_offset_scale", c.centre_offset_scale);
  r.get("residual_features", c.residual_features);
  r.get("residual_scale", c.residual_scale);
  r.finish();
  c.validate();
  return c;
}

json to_json(const LossConfig& c) {
  return json{{"lambda1", c.lambda1}, {"lambda2", c.lambda2},       {"lambda3", c.lambda3},
              {"alpha", c.alpha},     {"gamma", c.gamma},           {"prob_clamp", c.prob_clamp},
              {"dist_eps", c.dist_eps}};
}

json to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},         {"batch_size", c.batch_size},     {"lr", c.adam.lr},
              {"beta1", c.adam.beta1},      {"beta2", c.adam.beta2},          {"adam_eps", c.adam.eps},
              {"clip_norm", c.clip_norm}, {"lr_decay", c.lr_decay},   {"threshold", c.threshold},       {"shuffle_seed", c.shuffle_seed},
              {"init_seed", c.init_seed}};
}

json to_json(const SplitConfig& c) {
  return json{{"train_fraction", c.train_fraction},
              {"train_ghost_ratio", c.train_ghost_ratio},
              {"test_ghost_ratio", c.test_ghost_ratio},
              {"seed", c.seed}};
}

json to_json(const FollowConfig& c) {
  const bool unlimited = c.max_branches == std::numeric_limits<std::size_t>::max();
  return json{{"prune_threshold", c.prune_threshold},
              {"accept_threshold", c.accept_threshold},
              {"max_branches", unlimited ? 0 : c.max_branches},
              {"ellipse_inflate", c.ellipse_inflate},
              {"allow_early_stop", c.allow_early_stop},
              {"max_candidates", c.max_candidates}};
}

json to_json(const RunConfig& c) {
  json loss = to_json(c.loss);
  loss["reduction"] = c.train.reduction == Reduction::Mean ? "mean" : "sum";
  return json{{"seed", c.seed},
              {"detector", to_json(c.detector)},
              {"generation", to_json(c.generation)},
              {"search", to_json(c.search)},
              {"model",
               {{"conv_filters", c.model.conv_filters},
                {"conv_kernel", c.model.conv_kernel},
                {"gru_hidden", c.model.gru_hidden},
                {"semiaxis_scale", c.model.semiaxis_scale},
                {"extrapolate_centre", c.model.extrapolate_centre},
                {"centre_offset_scale", c.model.centre_offset_scale},
                {"residual_features", c.model.residual_features},
                {"residual_scale", c.model.residual_scale}}},
              {"loss", loss},
              {"train", to_json(c.train)},
              {"split", to_json(c.split)},
              {"follow", to_json(c.follow)}};
}

DetectorConfig detector_from_json(const json& j) {
  DetectorConfig c;
  read_detector(j, c);
  c.validate();
  return c;
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw Error("config must be a JSON object");
  RunConfig c;
  static const std::set<std::string> sections{"seed",  "detector", "generation", "search", "model",
                                              "loss",  "train",    "split",      "follow"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!sections.count(it.key())) throw Error("unknown config key '" + it.key() + "'");
  }
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("detector")) read_detector(j.at("detector"), c.detector);
  if (j.contains("generation")) read_generation(j.at("generation"), c.generation);
  if (j.contains("search")) read_search(j.at("search"), c.search);
  if (j.contains("model")) read_model_layers(j.at("model"), c.model);
  if (j.contains("loss")) read_loss(j.at("loss"), c.loss, c.train.reduction);
  if (j.contains("train")) read_train(j.at("train"), c.train);
  if (j.contains("split")) read_split(j.at("split"), c.split);
  if (j.contains("follow")) read_follow(j.at("follow"), c.follow);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("config file '" + path + "': " + e.what());
  }
  return run_config_from_json(j);
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw Error("unknown config key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = value;
}

}  // namespace cp
