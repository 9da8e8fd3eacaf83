#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cir/checkpoint.hpp"
#include "cir/data.hpp"
#include "cir/eval.hpp"
#include "cir/optim.hpp"
#include "cir/reconstruction.hpp"

namespace cir {

enum class Method { cir, cir_no_text, erm, mixup, coral, mmd };

std::string to_string(Method m);
Method method_from_string(const std::string& name);

// Mask policies round-trip as "none" or a comma list of
// no-same-scenario / no-same-location / no-other-scenario /
// no-other-location tokens.
std::string to_string(const MaskPolicy& policy);
MaskPolicy mask_policy_from_string(const std::string& text);

struct TrainConfig {
  Method method = Method::cir;
  double lr = 2e-4;
  int epochs = 50;
  std::vector<int> lr_decay_epochs = {30, 40};
  double lr_decay_factor = 10.0;
  int batch_size = 128;
  double lambda1 = 1.0;
  double lambda2 = 0.5;
  std::uint64_t seed = 0;
  MaskPolicy mask_policy;
  AdamConfig adam;
  double mixup_alpha = 0.2;
  double gamma1 = 1.0;   // scenario-loss weight (coral / mmd)
  double gamma2 = 0.5;   // location-loss weight
  double val_fraction = 0.10;

  // Model dimensions; video_dim / text_dim / num_classes come from the
  // dataset at run time.
  int hidden_dim = 4096;
  int embed_dim = 512;
  int qk_dim = 128;

  void validate() const;
};

// The learning rates and loss weights the experiments settled on per
// method; everything else keeps the struct defaults.
TrainConfig defaults_for(Method method);

// JSON round-trip for the fully resolved config (config.json contract).
std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);

double lr_at_epoch(const TrainConfig& config, int epoch);

struct StepLog {
  std::int64_t step = 0;
  double total = 0.0, l_c = 0.0, l_rt = 0.0, l_rc = 0.0, tau = 0.0, lr = 0.0;
};

struct EpochLog {
  int epoch = 0;
  double val_top1 = 0.0;
  double mean_loss = 0.0;
};

struct TrainRunResult {
  CirModel model;  // final parameters
  double final_val_top1 = 0.0;
  double best_val_top1 = 0.0;
  int best_epoch = -1;
  double final_test_top1 = 0.0;
  double best_test_top1 = 0.0;
  std::vector<StepLog> metrics;
  std::vector<EpochLog> epochs;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  int skipped_domain_batches = 0;
};

// Full experiment: video-held-out validation split, epoch loop with the
// configured objective, per-step metrics.csv, per-epoch val.csv, last/best
// checkpoints, report.json. Deterministic given config + seed. Passing
// resume_from continues a run from an epoch-boundary checkpoint and
// reproduces uninterrupted training bit for bit.
TrainRunResult train_run(
    const TrainConfig& config, const Dataset& data, const Split& split,
    const std::filesystem::path& out_dir,
    const std::optional<std::filesystem::path>& resume_from = std::nullopt);

}  // namespace cir
