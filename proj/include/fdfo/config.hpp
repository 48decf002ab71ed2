#pragma once
// Strict JSON experiment configuration: every key must be known, every value
// well-typed; violations raise ConfigError with a line-anchored message.

#include <cstdint>
#include <string>

#include "fdfo/datasets.hpp"
#include "fdfo/errors.hpp"
#include "fdfo/posttrain.hpp"
#include "fdfo/rewards.hpp"

namespace fdfo {

struct ModelConfig {
  int hidden = 64;
  int layers = 3;
  int embed = 8;
};

struct RewardConfig {
  std::string kind = "sigmoid_halfplane";
  double gain = 4.0;
  Vec u;                       // defaults to the last-axis unit vector
  Vec mu;                      // defaults to the origin
  Vec b;                       // defaults to u's default
  double tau = 0.0;
  std::vector<int> preferred;  // empty -> bind to the sampling condition
  double scale = 1.0;
};

struct ExperimentConfig {
  std::string dataset = "ring8";
  double sigma_d = 1.0;
  ModelConfig model;
  PretrainConfig pretrain;
  PostTrainConfig posttrain;
  RewardConfig reward;
  uint64_t seed = 1;
  std::string out = "runs/out";
  uint64_t text_hash = 0;  // FNV-1a of the raw config file bytes
};

// Parses and validates; throws ConfigError on I/O, syntax, unknown keys, or
// bad value types/ranges.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin);

DatasetSpec make_dataset(const ExperimentConfig& cfg);
RewardBinding make_reward(const ExperimentConfig& cfg, const DatasetSpec& data);

}  // namespace fdfo
