#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cir/model.hpp"
#include "cir/optim.hpp"

namespace cir {

// Versioned binary checkpoint: "CIR1" magic, config block, parameter
// blocks in declaration order as little-endian f64, batch-norm running
// statistics, optional Adam moments, training counters, and the trainer
// RNG stream state.
struct CheckpointExtras {
  std::optional<std::int64_t> adam_step;
  std::vector<nd::Mat> adam_m;
  std::vector<nd::Mat> adam_v;
  int epoch = 0;
  std::int64_t global_step = 0;
  std::string rng_state;
};

void save_checkpoint(const std::filesystem::path& path, const CirModel& model,
                     const CheckpointExtras& extras = {});

struct LoadedCheckpoint {
  CirModel model;
  CheckpointExtras extras;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cir
