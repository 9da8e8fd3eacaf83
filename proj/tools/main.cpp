#include <CLI11.hpp>
#include <Eigen/Core>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>

#include "cir/checkpoint.hpp"
#include "cir/rng.hpp"
#include "cir/data.hpp"
#include "cir/eval.hpp"
#include "cir/gradcheck_suite.hpp"
#include "cir/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct GenerateArgs {
  std::string out;
  std::string spec_file;
  cir::SyntheticSpec spec;
};

struct SplitArgs {
  std::string data;
  std::string out;
  int held_scenario = 0;
  int held_location = 0;
  std::string mode = "exclude_both";
};

struct TrainArgs {
  std::string data;
  std::string split;
  std::string out;
  std::string config_file;
  std::string method = "cir";
  std::string mask_policy = "none";
  std::string decay_epochs = "30,40";
  cir::TrainConfig config;
};

struct EvalArgs {
  std::string data;
  std::string split;
  std::string checkpoint;
  std::string out;
  std::string label = "model";
  bool use_train_ids = false;
};

struct AnalyzeArgs {
  std::string data;
  std::string split;
  std::string checkpoint;
  std::string out;
  int batch_size = 128;
  int num_batches = -1;  // full epoch
  std::uint64_t seed = 0;
  int topk_query = -1;
  int topk = 5;
  int topk_batch = 16;
};

struct SweepArgs {
  TrainArgs base;
  std::string param;
  std::string values;
};

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::size_t at = 0;
  while (at < text.size()) {
    std::size_t comma = text.find(',', at);
    std::string token = text.substr(
        at, comma == std::string::npos ? std::string::npos : comma - at);
    if (!token.empty()) out.push_back(std::stoi(token));
    if (comma == std::string::npos) break;
    at = comma + 1;
  }
  return out;
}

cir::SyntheticSpec spec_from_json(const json& j) {
  cir::SyntheticSpec s;
  s.num_classes = j.value("num_classes", s.num_classes);
  s.num_scenarios = j.value("num_scenarios", s.num_scenarios);
  s.num_locations = j.value("num_locations", s.num_locations);
  s.samples_per_cell = j.value("samples_per_cell", s.samples_per_cell);
  s.video_dim = j.value("video_dim", s.video_dim);
  s.text_dim = j.value("text_dim", s.text_dim);
  s.class_signal = j.value("class_signal", s.class_signal);
  s.scenario_shift = j.value("scenario_shift", s.scenario_shift);
  s.location_shift = j.value("location_shift", s.location_shift);
  s.noise = j.value("noise", s.noise);
  s.seed = j.value("seed", s.seed);
  return s;
}

json spec_to_json(const cir::SyntheticSpec& s) {
  return {
      {"num_classes", s.num_classes},
      {"num_scenarios", s.num_scenarios},
      {"num_locations", s.num_locations},
      {"samples_per_cell", s.samples_per_cell},
      {"video_dim", s.video_dim},
      {"text_dim", s.text_dim},
      {"class_signal", s.class_signal},
      {"scenario_shift", s.scenario_shift},
      {"location_shift", s.location_shift},
      {"noise", s.noise},
      {"seed", s.seed},
  };
}

int cmd_generate(GenerateArgs& args) {
  if (!args.spec_file.empty()) {
    std::ifstream is(args.spec_file);
    if (!is) throw cir::FormatError("cannot open spec " + args.spec_file);
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded())
      throw cir::FormatError("malformed spec JSON in " + args.spec_file);
    args.spec = spec_from_json(j);
  }
  cir::Dataset data = cir::generate_synthetic(args.spec);
  fs::create_directories(args.out);
  cir::write_feature_store(data, args.out);
  std::ofstream os(fs::path(args.out) / "synthetic_spec.json");
  os << spec_to_json(args.spec).dump(2) << "\n";
  std::cout << "wrote " << data.size() << " samples (" << data.num_classes
            << " classes, " << data.num_scenarios << " scenarios, "
            << data.num_locations << " locations) to " << args.out << "\n";
  return kExitOk;
}

int cmd_split(const SplitArgs& args) {
  cir::Dataset data = cir::read_feature_store(args.data);
  cir::SplitSpec spec{args.held_scenario, args.held_location,
                      cir::split_mode_from_string(args.mode)};
  cir::Split split = cir::make_split(data, spec);
  cir::write_split_manifest(split, args.out);
  std::cout << "split " << cir::to_string(spec.mode) << " on ("
            << spec.held_scenario << ", " << spec.held_location << "): "
            << split.train.size() << " train / " << split.test.size()
            << " test -> " << args.out << "\n";
  return kExitOk;
}

void write_run_config(const TrainArgs& args, const fs::path& out_dir) {
  json j = json::parse(cir::train_config_to_json(args.config));
  j["data"] = args.data;
  j["split"] = args.split;
  j["out"] = out_dir.string();
  std::ofstream os(out_dir / "config.json");
  os << j.dump(2) << "\n";
}

// Applies --config first, then any explicitly passed flags on top.
void resolve_train_config(TrainArgs& args, const CLI::App* cmd) {
  cir::TrainConfig base =
      cir::defaults_for(cir::method_from_string(args.method));
  if (!args.config_file.empty()) {
    std::ifstream is(args.config_file);
    if (!is) throw cir::FormatError("cannot open config " + args.config_file);
    std::string text((std::istreambuf_iterator<char>(is)), {});
    base = cir::train_config_from_json(text);
    json j = json::parse(text);
    if (args.data.empty()) args.data = j.value("data", "");
    if (args.split.empty()) args.split = j.value("split", "");
    if (args.out.empty()) args.out = j.value("out", "");
  }
  auto passed = [cmd](const std::string& flag) {
    return cmd->count(flag) > 0;
  };
  if (passed("--method")) base.method = cir::method_from_string(args.method);
  if (passed("--lr")) base.lr = args.config.lr;
  if (passed("--epochs")) base.epochs = args.config.epochs;
  if (passed("--decay-epochs"))
    base.lr_decay_epochs = parse_int_list(args.decay_epochs);
  if (passed("--decay-factor"))
    base.lr_decay_factor = args.config.lr_decay_factor;
  if (passed("--batch-size")) base.batch_size = args.config.batch_size;
  if (passed("--lambda1")) base.lambda1 = args.config.lambda1;
  if (passed("--lambda2")) base.lambda2 = args.config.lambda2;
  if (passed("--seed")) base.seed = args.config.seed;
  if (passed("--mask-policy"))
    base.mask_policy = cir::mask_policy_from_string(args.mask_policy);
  if (passed("--mixup-alpha")) base.mixup_alpha = args.config.mixup_alpha;
  if (passed("--gamma1")) base.gamma1 = args.config.gamma1;
  if (passed("--gamma2")) base.gamma2 = args.config.gamma2;
  if (passed("--val-fraction")) base.val_fraction = args.config.val_fraction;
  if (passed("--hidden-dim")) base.hidden_dim = args.config.hidden_dim;
  if (passed("--embed-dim")) base.embed_dim = args.config.embed_dim;
  if (passed("--qk-dim")) base.qk_dim = args.config.qk_dim;
  args.config = base;
  if (args.data.empty() || args.split.empty() || args.out.empty())
    throw cir::ValueError("train: --data, --split and --out are required");
}

int cmd_train(TrainArgs& args, const CLI::App* cmd) {
  resolve_train_config(args, cmd);
  args.config.validate();
  cir::Dataset data = cir::read_feature_store(args.data);
  cir::Split split = cir::read_split_manifest(args.split);
  fs::create_directories(args.out);
  write_run_config(args, args.out);
  cir::TrainRunResult result =
      cir::train_run(args.config, data, split, args.out);
  std::cout << "method " << cir::to_string(args.config.method) << " seed "
            << args.config.seed << ": final val " << result.final_val_top1
            << ", best val " << result.best_val_top1 << " (epoch "
            << result.best_epoch << "), final test " << result.final_test_top1
            << ", best test " << result.best_test_top1 << "\n";
  return kExitOk;
}

int cmd_eval(const EvalArgs& args) {
  cir::Dataset data = cir::read_feature_store(args.data);
  cir::Split split = cir::read_split_manifest(args.split);
  cir::LoadedCheckpoint loaded = cir::load_checkpoint(args.checkpoint);
  const std::vector<int>& ids = args.use_train_ids ? split.train : split.test;
  double acc = cir::top1(loaded.model, data, ids);
  fs::create_directories(args.out);
  {
    json cfg = {{"data", args.data},           {"split", args.split},
                {"checkpoint", args.checkpoint}, {"label", args.label},
                {"train_ids", args.use_train_ids}};
    std::ofstream os(fs::path(args.out) / "config.json");
    os << cfg.dump(2) << "\n";
  }
  cir::RunReport report;
  report.method = args.label;
  report.seed = loaded.model.config.seed;
  report.split_top1[args.use_train_ids ? "train" : "test"] = acc;
  report.mean_top1 = acc;
  cir::write_report_json(report, fs::path(args.out) / "report.json");
  cir::append_summary_csv(report, fs::path(args.out) / "summary.csv");
  std::cout << "top1 " << acc << " on " << ids.size() << " samples\n";
  return kExitOk;
}

int cmd_analyze(const AnalyzeArgs& args) {
  cir::Dataset data = cir::read_feature_store(args.data);
  cir::Split split = cir::read_split_manifest(args.split);
  cir::LoadedCheckpoint loaded = cir::load_checkpoint(args.checkpoint);
  fs::create_directories(args.out);
  {
    json cfg = {{"data", args.data},     {"split", args.split},
                {"checkpoint", args.checkpoint},
                {"batch_size", args.batch_size},
                {"num_batches", args.num_batches},
                {"seed", args.seed},     {"topk_query", args.topk_query},
                {"topk", args.topk},     {"topk_batch", args.topk_batch}};
    std::ofstream os(fs::path(args.out) / "config.json");
    os << cfg.dump(2) << "\n";
  }

  cir::AttentionReport attention =
      cir::attention_report(loaded.model, data, split.train, args.batch_size,
                            args.num_batches, args.seed);
  cir::write_attention_csv(attention, fs::path(args.out) / "attention.csv");

  cir::RunReport report;
  report.method = "analysis";
  report.seed = loaded.model.config.seed;
  report.attention = attention;
  report.composition = attention.composition;
  cir::write_report_json(report, fs::path(args.out) / "report.json");

  if (args.topk_query >= 0) {
    // a seeded batch containing the query plus sampled companions
    std::vector<int> pool = split.train;
    pool.erase(std::remove(pool.begin(), pool.end(), args.topk_query),
               pool.end());
    cir::Rng rng(cir::derive_seed(args.seed, "topk"));
    rng.shuffle(pool);
    std::vector<int> batch = {args.topk_query};
    for (int id : pool) {
      if (static_cast<int>(batch.size()) >= args.topk_batch) break;
      batch.push_back(id);
    }
    cir::TopkSupport top =
        cir::topk_support(loaded.model, data, args.topk_query, batch,
                          args.topk);
    std::ofstream os(fs::path(args.out) / "topk.csv");
    os << "support_id,clip_id,weight\n";
    for (const auto& e : top.entries)
      os << e.id << "," << data.clip_id[static_cast<std::size_t>(e.id)] << ","
         << e.weight << "\n";
    os << "residual,," << top.residual << "\n";
  }
  std::cout << "attention masses: SS " << attention.ss << " OS "
            << attention.os << " SL " << attention.sl << " OL " << attention.ol
            << " over " << attention.batches << " batches\n";
  return kExitOk;
}

int cmd_sweep(SweepArgs& args, const CLI::App* train_cmd) {
  std::vector<std::string> values;
  {
    std::size_t at = 0;
    while (at < args.values.size()) {
      std::size_t comma = args.values.find(',', at);
      std::string token = args.values.substr(
          at, comma == std::string::npos ? std::string::npos : comma - at);
      if (!token.empty()) values.push_back(token);
      if (comma == std::string::npos) break;
      at = comma + 1;
    }
  }
  if (values.empty())
    throw cir::ValueError("sweep: --values must be a non-empty list");

  resolve_train_config(args.base, train_cmd);
  cir::Dataset data = cir::read_feature_store(args.base.data);
  cir::Split split = cir::read_split_manifest(args.base.split);
  fs::path root(args.base.out);
  fs::create_directories(root);

  int failures = 0;
  for (const std::string& value : values) {
    cir::TrainConfig config = args.base.config;
    if (args.param == "batch_size") config.batch_size = std::stoi(value);
    else if (args.param == "seed") config.seed = std::stoull(value);
    else if (args.param == "lr") config.lr = std::stod(value);
    else if (args.param == "lambda1") config.lambda1 = std::stod(value);
    else if (args.param == "lambda2") config.lambda2 = std::stod(value);
    else throw cir::ValueError("sweep: unknown parameter " + args.param);

    fs::path run_dir = root / (args.param + "_" + value);
    try {
      fs::create_directories(run_dir);
      TrainArgs run_args = args.base;
      run_args.config = config;
      run_args.out = run_dir.string();
      write_run_config(run_args, run_dir);
      cir::TrainRunResult result =
          cir::train_run(config, data, split, run_dir);
      cir::RunReport report;
      report.method = cir::to_string(config.method);
      report.seed = config.seed;
      report.split_top1[args.param + "=" + value + "/final"] =
          result.final_test_top1;
      report.split_top1[args.param + "=" + value + "/best"] =
          result.best_test_top1;
      cir::append_summary_csv(report, root / "summary.csv");
      std::cout << args.param << "=" << value << ": final test "
                << result.final_test_top1 << ", best test "
                << result.best_test_top1 << "\n";
    } catch (const std::exception& e) {
      ++failures;
      std::cerr << "sweep " << args.param << "=" << value
                << " failed: " << e.what() << "\n";
    }
  }
  return failures == 0 ? kExitOk : kExitRuntime;
}

int cmd_gradcheck(std::uint64_t seed) {
  auto entries = cir::run_gradcheck_battery(seed);
  double worst = 0.0;
  for (const auto& e : entries) {
    std::printf("%-28s max rel err %.3e\n", e.name.c_str(), e.max_rel_error);
    worst = std::max(worst, e.max_rel_error);
  }
  std::printf("worst: %.3e (tolerance 1e-5)\n", worst);
  return worst < 1e-5 ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* det = std::getenv("CIR_DETERMINISTIC");
      det && std::string(det) == "1")
    Eigen::setNbThreads(1);

  CLI::App app{"Cross-instance reconstruction experiments on precomputed "
               "feature datasets"};
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* c_gen =
      app.add_subcommand("generate", "Write a synthetic feature store");
  c_gen->add_option("--out", gen.out, "output directory")->required();
  c_gen->add_option("--spec", gen.spec_file, "JSON spec file");
  c_gen->add_option("--classes", gen.spec.num_classes);
  c_gen->add_option("--scenarios", gen.spec.num_scenarios);
  c_gen->add_option("--locations", gen.spec.num_locations);
  c_gen->add_option("--samples-per-cell", gen.spec.samples_per_cell);
  c_gen->add_option("--video-dim", gen.spec.video_dim);
  c_gen->add_option("--text-dim", gen.spec.text_dim);
  c_gen->add_option("--class-signal", gen.spec.class_signal);
  c_gen->add_option("--scenario-shift", gen.spec.scenario_shift);
  c_gen->add_option("--location-shift", gen.spec.location_shift);
  c_gen->add_option("--noise", gen.spec.noise);
  c_gen->add_option("--seed", gen.spec.seed);

  SplitArgs spl;
  CLI::App* c_split = app.add_subcommand("split", "Curate a train/test split");
  c_split->add_option("--data", spl.data, "feature store directory")
      ->required();
  c_split->add_option("--out", spl.out, "manifest file")->required();
  c_split->add_option("--held-scenario", spl.held_scenario)->required();
  c_split->add_option("--held-location", spl.held_location)->required();
  c_split->add_option("--mode", spl.mode,
                      "exclude_both | include_scenario | include_location | "
                      "include_union | include_pair");

  auto add_train_flags = [](CLI::App* cmd, TrainArgs& args) {
    cmd->add_option("--data", args.data, "feature store directory");
    cmd->add_option("--split", args.split, "split manifest");
    cmd->add_option("--out", args.out, "run directory");
    cmd->add_option("--config", args.config_file,
                    "resolved config.json to reproduce");
    cmd->add_option("--method", args.method,
                    "cir | cir_no_text | erm | mixup | coral | mmd");
    cmd->add_option("--lr", args.config.lr);
    cmd->add_option("--epochs", args.config.epochs);
    cmd->add_option("--decay-epochs", args.decay_epochs,
                    "comma list, e.g. 30,40");
    cmd->add_option("--decay-factor", args.config.lr_decay_factor);
    cmd->add_option("--batch-size", args.config.batch_size);
    cmd->add_option("--lambda1", args.config.lambda1);
    cmd->add_option("--lambda2", args.config.lambda2);
    cmd->add_option("--seed", args.config.seed);
    cmd->add_option("--mask-policy", args.mask_policy,
                    "none or comma list of no-same-scenario, "
                    "no-same-location, no-other-scenario, no-other-location");
    cmd->add_option("--mixup-alpha", args.config.mixup_alpha);
    cmd->add_option("--gamma1", args.config.gamma1);
    cmd->add_option("--gamma2", args.config.gamma2);
    cmd->add_option("--val-fraction", args.config.val_fraction);
    cmd->add_option("--hidden-dim", args.config.hidden_dim);
    cmd->add_option("--embed-dim", args.config.embed_dim);
    cmd->add_option("--qk-dim", args.config.qk_dim);
  };

  TrainArgs tr;
  CLI::App* c_train = app.add_subcommand("train", "Train one configuration");
  add_train_flags(c_train, tr);

  EvalArgs ev;
  CLI::App* c_eval = app.add_subcommand("eval", "Score a checkpoint");
  c_eval->add_option("--data", ev.data)->required();
  c_eval->add_option("--split", ev.split)->required();
  c_eval->add_option("--checkpoint", ev.checkpoint)->required();
  c_eval->add_option("--out", ev.out)->required();
  c_eval->add_option("--label", ev.label, "method label for summary rows");
  c_eval->add_flag("--train-ids", ev.use_train_ids,
                   "score the training ids instead of the test ids");

  AnalyzeArgs an;
  CLI::App* c_an = app.add_subcommand(
      "analyze", "Attention composition and top-k support export");
  c_an->add_option("--data", an.data)->required();
  c_an->add_option("--split", an.split)->required();
  c_an->add_option("--checkpoint", an.checkpoint)->required();
  c_an->add_option("--out", an.out)->required();
  c_an->add_option("--batch-size", an.batch_size);
  c_an->add_option("--num-batches", an.num_batches,
                   "-1 runs one full epoch of the training split");
  c_an->add_option("--seed", an.seed);
  c_an->add_option("--topk-query", an.topk_query,
                   "sample id whose support set to export");
  c_an->add_option("--topk", an.topk);
  c_an->add_option("--topk-batch", an.topk_batch,
                   "batch size for the top-k export");

  SweepArgs sw;
  CLI::App* c_sweep = app.add_subcommand(
      "sweep", "Run one configuration per value of a parameter");
  add_train_flags(c_sweep, sw.base);
  c_sweep->add_option("--param", sw.param,
                      "batch_size | seed | lr | lambda1 | lambda2")
      ->required();
  c_sweep->add_option("--values", sw.values, "comma-separated list")
      ->required();

  std::uint64_t gradcheck_seed = 0;
  CLI::App* c_grad = app.add_subcommand(
      "gradcheck", "Check every backward rule against central differences");
  c_grad->add_option("--seed", gradcheck_seed);

  try {
    app.parse(argc, argv);
    if (c_gen->parsed()) return cmd_generate(gen);
    if (c_split->parsed()) return cmd_split(spl);
    if (c_train->parsed()) return cmd_train(tr, c_train);
    if (c_eval->parsed()) return cmd_eval(ev);
    if (c_an->parsed()) return cmd_analyze(an);
    if (c_sweep->parsed()) return cmd_sweep(sw, c_sweep);
    if (c_grad->parsed()) return cmd_gradcheck(gradcheck_seed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const cir::ValueError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
