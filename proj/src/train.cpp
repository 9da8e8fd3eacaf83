#include "cir/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "cir/baselines.hpp"
#include "cir/rng.hpp"

namespace cir {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Method m) {
  switch (m) {
    case Method::cir: return "cir";
    case Method::cir_no_text: return "cir_no_text";
    case Method::erm: return "erm";
    case Method::mixup: return "mixup";
    case Method::coral: return "coral";
    case Method::mmd: return "mmd";
  }
  throw ValueError("unknown method");
}

Method method_from_string(const std::string& name) {
  if (name == "cir") return Method::cir;
  if (name == "cir_no_text") return Method::cir_no_text;
  if (name == "erm") return Method::erm;
  if (name == "mixup") return Method::mixup;
  if (name == "coral") return Method::coral;
  if (name == "mmd") return Method::mmd;
  throw ValueError("unknown method: " + name);
}

std::string to_string(const MaskPolicy& policy) {
  if (policy.permissive()) return "none";
  std::string s;
  auto push = [&s](const char* token) {
    if (!s.empty()) s += ",";
    s += token;
  };
  if (!policy.allow_same_scenario) push("no-same-scenario");
  if (!policy.allow_same_location) push("no-same-location");
  if (!policy.allow_other_scenario) push("no-other-scenario");
  if (!policy.allow_other_location) push("no-other-location");
  return s;
}

MaskPolicy mask_policy_from_string(const std::string& text) {
  MaskPolicy policy;
  if (text.empty() || text == "none") return policy;
  std::size_t at = 0;
  while (at <= text.size()) {
    std::size_t comma = text.find(',', at);
    std::string token = text.substr(
        at, comma == std::string::npos ? std::string::npos : comma - at);
    if (token == "no-same-scenario") policy.allow_same_scenario = false;
    else if (token == "no-same-location") policy.allow_same_location = false;
    else if (token == "no-other-scenario") policy.allow_other_scenario = false;
    else if (token == "no-other-location") policy.allow_other_location = false;
    else throw ValueError("unknown mask-policy token: " + token);
    if (comma == std::string::npos) break;
    at = comma + 1;
  }
  policy.validate();
  return policy;
}

std::string train_config_to_json(const TrainConfig& c) {
  json j = {
      {"method", to_string(c.method)},
      {"lr", c.lr},
      {"epochs", c.epochs},
      {"lr_decay_epochs", c.lr_decay_epochs},
      {"lr_decay_factor", c.lr_decay_factor},
      {"batch_size", c.batch_size},
      {"lambda1", c.lambda1},
      {"lambda2", c.lambda2},
      {"seed", c.seed},
      {"mask_policy", to_string(c.mask_policy)},
      {"adam_beta1", c.adam.beta1},
      {"adam_beta2", c.adam.beta2},
      {"adam_eps", c.adam.eps},
      {"mixup_alpha", c.mixup_alpha},
      {"gamma1", c.gamma1},
      {"gamma2", c.gamma2},
      {"val_fraction", c.val_fraction},
      {"hidden_dim", c.hidden_dim},
      {"embed_dim", c.embed_dim},
      {"qk_dim", c.qk_dim},
  };
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError("config: malformed JSON");
  TrainConfig c;
  c.method = method_from_string(j.at("method").get<std::string>());
  c.lr = j.at("lr").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.lr_decay_epochs = j.at("lr_decay_epochs").get<std::vector<int>>();
  c.lr_decay_factor = j.at("lr_decay_factor").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lambda1 = j.at("lambda1").get<double>();
  c.lambda2 = j.at("lambda2").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.mask_policy = mask_policy_from_string(j.at("mask_policy").get<std::string>());
  c.adam.beta1 = j.at("adam_beta1").get<double>();
  c.adam.beta2 = j.at("adam_beta2").get<double>();
  c.adam.eps = j.at("adam_eps").get<double>();
  c.mixup_alpha = j.at("mixup_alpha").get<double>();
  c.gamma1 = j.at("gamma1").get<double>();
  c.gamma2 = j.at("gamma2").get<double>();
  c.val_fraction = j.at("val_fraction").get<double>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.qk_dim = j.at("qk_dim").get<int>();
  return c;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ValueError("TrainConfig: lr must be positive");
  if (epochs < 0) throw ValueError("TrainConfig: epochs must be >= 0");
  if (batch_size < 2) throw ValueError("TrainConfig: batch_size must be >= 2");
  if (lambda1 < 0.0 || lambda2 < 0.0)
    throw ValueError("TrainConfig: lambdas must be >= 0");
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ValueError("TrainConfig: val_fraction must be in (0, 1)");
  if (!(mixup_alpha > 0.0))
    throw ValueError("TrainConfig: mixup_alpha must be positive");
  if (gamma1 < 0.0 || gamma2 < 0.0)
    throw ValueError("TrainConfig: gammas must be >= 0");
  if (!(lr_decay_factor > 0.0))
    throw ValueError("TrainConfig: lr_decay_factor must be positive");
  for (std::size_t i = 0; i < lr_decay_epochs.size(); ++i) {
    if (i > 0 && lr_decay_epochs[i] <= lr_decay_epochs[i - 1])
      throw ValueError("TrainConfig: decay epochs must be strictly increasing");
    if (lr_decay_epochs[i] >= epochs)
      throw ValueError("TrainConfig: decay epoch " +
                       std::to_string(lr_decay_epochs[i]) +
                       " is not below epochs=" + std::to_string(epochs));
  }
  mask_policy.validate();
}

TrainConfig defaults_for(Method method) {
  TrainConfig c;
  c.method = method;
  switch (method) {
    case Method::cir:
      break;  // struct defaults are the CIR settings
    case Method::cir_no_text:
      c.lambda1 = 0.0;
      break;
    case Method::erm:
      c.lr = 1e-4;
      break;
    case Method::mixup:
      c.lr = 1e-5;
      break;
    case Method::coral:
      c.lr = 1e-5;
      c.gamma1 = 0.1;
      c.gamma2 = 0.1;
      break;
    case Method::mmd:
      c.lr = 1e-5;
      c.gamma1 = 1.0;
      c.gamma2 = 0.5;
      break;
  }
  return c;
}

double lr_at_epoch(const TrainConfig& config, int epoch) {
  double lr = config.lr;
  for (int decay : config.lr_decay_epochs)
    if (epoch >= decay) lr /= config.lr_decay_factor;
  return lr;
}

namespace {

struct StepOutcome {
  Tensor loss;
  StepLog log;
  bool skipped_domains = false;
};

StepOutcome objective(CirModel& model, const Batch& batch,
                      const TrainConfig& cfg, Rng& stream) {
  StepOutcome out;
  switch (cfg.method) {
    case Method::cir:
    case Method::cir_no_text: {
      double l1 = cfg.method == Method::cir_no_text ? 0.0 : cfg.lambda1;
      CirLossResult r =
          cir_total_loss(model, batch, l1, cfg.lambda2, cfg.mask_policy);
      out.loss = r.total;
      out.log.l_c = r.parts.l_c;
      out.log.l_rt = r.parts.l_rt;
      out.log.l_rc = r.parts.l_rc;
      break;
    }
    case Method::erm: {
      out.loss = erm_loss(model, batch);
      out.log.l_c = out.loss.item();
      break;
    }
    case Method::mixup: {
      MixedBatch mixed = mixup_batch(batch, model.config.num_classes,
                                     cfg.mixup_alpha, stream.next());
      Tensor f_v = encode_video(model, mixed.video, Mode::train);
      out.loss =
          nd::cross_entropy_soft(classify(model, f_v), mixed.soft_targets);
      out.log.l_c = out.loss.item();
      break;
    }
    case Method::coral:
    case Method::mmd: {
      Tensor f_v = encode_video(model, batch.video, Mode::train);
      Tensor l_c = nd::cross_entropy(classify(model, f_v), batch.labels);
      out.log.l_c = l_c.item();
      auto penalty = [&cfg](const Tensor& e, const std::vector<int>& d) {
        return cfg.method == Method::coral ? coral_loss(e, d)
                                           : mmd_loss(e, d);
      };
      DomainPairLoss scen = penalty(f_v, batch.scenario);
      DomainPairLoss loc = penalty(f_v, batch.location);
      out.loss = nd::add(l_c, nd::add(nd::scale(scen.value, cfg.gamma1),
                                      nd::scale(loc.value, cfg.gamma2)));
      if (scen.pairs == 0 || loc.pairs == 0) out.skipped_domains = true;
      break;
    }
  }
  out.log.total = out.loss.item();
  out.log.tau = model.tau();
  return out;
}

void write_metrics_csv(const fs::path& path,
                       const std::vector<StepLog>& metrics) {
  std::ofstream os(path);
  if (!os) throw FormatError("metrics: cannot write " + path.string());
  os << "step,L,L_c,L_rt,L_rc,tau,lr\n";
  char buf[256];
  for (const StepLog& m : metrics) {
    std::snprintf(buf, sizeof(buf),
                  "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(m.step), m.total, m.l_c, m.l_rt,
                  m.l_rc, m.tau, m.lr);
    os << buf;
  }
}

void write_val_csv(const fs::path& path, const std::vector<EpochLog>& epochs) {
  std::ofstream os(path);
  if (!os) throw FormatError("val: cannot write " + path.string());
  os << "epoch,top1\n";
  char buf[128];
  for (const EpochLog& e : epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g\n", e.epoch, e.val_top1);
    os << buf;
  }
}

}  // namespace

TrainRunResult train_run(const TrainConfig& config, const Dataset& data,
                         const Split& split, const fs::path& out_dir,
                         const std::optional<fs::path>& resume_from) {
  config.validate();
  if (split.train.empty() || split.test.empty())
    throw SplitError("train_run: empty split");
  fs::create_directories(out_dir);

  ModelConfig model_cfg;
  model_cfg.video_dim = data.video_dim();
  model_cfg.text_dim = data.text_dim();
  model_cfg.hidden_dim = config.hidden_dim;
  model_cfg.embed_dim = config.embed_dim;
  model_cfg.qk_dim = config.qk_dim;
  model_cfg.num_classes = data.num_classes;
  model_cfg.seed = config.seed;

  auto [train_ids, val_ids] = validation_split(
      data, split.train, config.val_fraction, derive_seed(config.seed, "val"));

  TrainRunResult result;
  result.model = init_parameters(model_cfg, config.seed);
  Adam adam(result.model.parameters(), config.adam);
  Rng stream(derive_seed(config.seed, "train_stream"));
  std::int64_t global_step = 0;
  int start_epoch = 0;

  if (resume_from) {
    LoadedCheckpoint loaded = load_checkpoint(*resume_from);
    result.model = std::move(loaded.model);
    adam = Adam(result.model.parameters(), config.adam);
    if (loaded.extras.adam_step)
      adam.restore(std::move(loaded.extras.adam_m),
                   std::move(loaded.extras.adam_v), *loaded.extras.adam_step);
    if (!loaded.extras.rng_state.empty())
      stream.set_state(loaded.extras.rng_state);
    start_epoch = loaded.extras.epoch;
    global_step = loaded.extras.global_step;
  }

  auto params = result.model.parameters();
  auto checkpoint_extras = [&](int epoch) {
    CheckpointExtras ex;
    ex.adam_step = adam.step_count();
    ex.adam_m = adam.first_moments();
    ex.adam_v = adam.second_moments();
    ex.epoch = epoch;
    ex.global_step = global_step;
    ex.rng_state = stream.state();
    return ex;
  };

  result.last_checkpoint = out_dir / "last.ckpt";
  result.best_checkpoint = out_dir / "best.ckpt";

  // Epoch 0 records the untrained model, so epochs=0 still reports the
  // init-state validation accuracy.
  double init_val = top1(result.model, data, val_ids);
  result.epochs.push_back({start_epoch, init_val, 0.0});
  result.best_val_top1 = init_val;
  result.best_epoch = start_epoch;
  if (!resume_from)
    save_checkpoint(result.best_checkpoint, result.model,
                    checkpoint_extras(start_epoch));

  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    const double lr = lr_at_epoch(config, epoch);
    double loss_sum = 0.0;
    std::int64_t loss_count = 0;
    int batch_index = 0;
    for (const auto& batch_ids :
         batch_iter(train_ids, config.batch_size, config.seed, epoch)) {
      Batch batch = make_batch(data, batch_ids);
      for (const ParamRef& p : params) p.tensor.zero_grad();
      nd::Tape tape;
      {
        nd::Tape::Scope scope(tape);
        StepOutcome step;
        try {
          step = objective(result.model, batch, config, stream);
        } catch (const DegenerateError& e) {
          throw DegenerateError("epoch " + std::to_string(epoch) + " batch " +
                                std::to_string(batch_index) + ": " + e.what());
        }
        tape.backward(step.loss);
        step.log.step = ++global_step;
        step.log.lr = lr;
        loss_sum += step.log.total;
        ++loss_count;
        if (step.skipped_domains) {
          ++result.skipped_domain_batches;
          std::cerr << "train: batch at step " << global_step
                    << " had no eligible domain pair; penalty skipped\n";
        }
        result.metrics.push_back(step.log);
      }
      adam.step(lr);
      result.model.clamp_tau();
      ++batch_index;
    }
    double val = top1(result.model, data, val_ids);
    double mean_loss =
        loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    result.epochs.push_back({epoch + 1, val, mean_loss});
    save_checkpoint(result.last_checkpoint, result.model,
                    checkpoint_extras(epoch + 1));
    if (val > result.best_val_top1) {
      result.best_val_top1 = val;
      result.best_epoch = epoch + 1;
      save_checkpoint(result.best_checkpoint, result.model,
                      checkpoint_extras(epoch + 1));
    }
  }

  if (config.epochs <= start_epoch)  // no epoch ran; still emit a checkpoint
    save_checkpoint(result.last_checkpoint, result.model,
                    checkpoint_extras(start_epoch));

  result.final_val_top1 = result.epochs.back().val_top1;
  result.final_test_top1 = top1(result.model, data, split.test);
  if (fs::exists(result.best_checkpoint)) {
    LoadedCheckpoint best = load_checkpoint(result.best_checkpoint);
    result.best_test_top1 = top1(best.model, data, split.test);
  } else {
    result.best_test_top1 = result.final_test_top1;
  }

  write_metrics_csv(out_dir / "metrics.csv", result.metrics);
  write_val_csv(out_dir / "val.csv", result.epochs);

  RunReport report;
  report.method = to_string(config.method);
  report.seed = config.seed;
  report.split_top1["test_final"] = result.final_test_top1;
  report.split_top1["test_best"] = result.best_test_top1;
  report.mean_top1 = result.final_test_top1;
  report.final_val_top1 = result.final_val_top1;
  report.best_val_top1 = result.best_val_top1;
  report.best_epoch = result.best_epoch;
  for (std::size_t i = 1; i < result.epochs.size(); ++i)  // [0] is init
    report.loss_curve.push_back(result.epochs[i].mean_loss);
  report.composition = batch_composition(
      data, batch_iter(train_ids, config.batch_size, config.seed, 0));
  write_report_json(report, out_dir / "report.json");
  return result;
}

}  // namespace cir
