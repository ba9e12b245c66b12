#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtvrp/policy/config.hpp"

namespace mtvrp::training {

// Hyperparameters shared by all three stages.
struct TrainConfig {
  int epochs = 20;
  int instances_per_epoch = 2000;
  int batch_size = 64;
  double lr = 3e-4;
  double weight_decay = 1e-6;
  // lr is multiplied by lr_decay_factor once for every milestone <= the (0-based) epoch index.
  std::vector<int> lr_decay_epochs = {18, 19};
  double lr_decay_factor = 0.1;
  int n = 20;
  int starts = 20;
  std::uint64_t seed = 1;
  // Worker threads for rollouts; results do not depend on it.
  int jobs = 1;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// 300 epochs x 100k instances, batch 256, decay x0.1 at epochs 270 and 295, N = 100.
TrainConfig paper_train_config();

// Minutes-scale profile for one CPU core.
TrainConfig desk_train_config();

// Model dimensions that go with the desk profile.
policy::ModelConfig desk_model_config();

// Throws std::invalid_argument on inconsistent settings.
void validate(const TrainConfig& cfg);

double learning_rate(const TrainConfig& cfg, int epoch);

// Pipeline settings as one JSON object {"train": {...}, "model": {...}}. Field names match the
// struct members. Parsing starts from `base` and overrides only the keys present; unknown keys
// are rejected.
struct PipelineConfig {
  TrainConfig train = desk_train_config();
  policy::ModelConfig model = desk_model_config();
};
std::string serialize_config(const PipelineConfig& cfg);
PipelineConfig parse_config(const std::string& text, const PipelineConfig& base = {});

}  // namespace mtvrp::training
