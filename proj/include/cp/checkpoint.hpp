#pragma once

#include <string>

#include <json.hpp>

#include "cp/model.hpp"

namespace cp {

struct Checkpoint {
  ModelConfig model;
  ParamSet params;
  nlohmann::json training;  // hyperparameters, seeds, provenance
};

// Binary layout: 8-byte magic, u32 version, u64 header length, JSON header
// (model config, training echo, tensor table), raw little-endian doubles in
// table order, then a u64 FNV-1a checksum of everything before it.
void save_checkpoint(const std::string& path, const CatchProlongNet& net, const nlohmann::json& training = nullptr);
std::string encode_checkpoint(const CatchProlongNet& net, const nlohmann::json& training = nullptr);

Checkpoint load_checkpoint(const std::string& path);
Checkpoint decode_checkpoint(const std::string& bytes);

CatchProlongNet to_network(const Checkpoint& ckpt);

}  // namespace cp
