#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cir/data.hpp"
#include "cir/model.hpp"

namespace cir {

// Fraction of samples whose highest-logit class matches the label; ties
// broken toward the lowest class id. Eval-mode forward, so the result is
// independent of how the ids are batched.
double top1(CirModel& model, const Dataset& data, const std::vector<int>& ids,
            int eval_batch = 256);

// Where learned-attention mass goes, accumulated over sampled batches.
// ss/os and sl/ol each sum to 1 after normalization; the matrices are
// row-normalized scenario->scenario and location->location mass.
struct AttentionReport {
  double ss = 0.0, os = 0.0;
  double sl = 0.0, ol = 0.0;
  nd::Mat scenario_matrix;
  nd::Mat location_matrix;
  BatchCompositionStats composition;
  int batches = 0;
};

// num_batches <= 0 means one full epoch over the ids.
AttentionReport attention_report(CirModel& model, const Dataset& data,
                                 const std::vector<int>& ids, int batch_size,
                                 int num_batches, std::uint64_t seed);

struct SupportEntry {
  int id = 0;
  double weight = 0.0;
};

struct TopkSupport {
  std::vector<SupportEntry> entries;  // descending weight
  double residual = 0.0;              // mass beyond the top k
};

// The k strongest supports for one query under learned attention.
TopkSupport topk_support(CirModel& model, const Dataset& data, int query_id,
                         const std::vector<int>& batch_ids, int k);

struct DropRecovery {
  double acc_exclude_both = 0.0;
  double acc_with_scenario = 0.0;
  double acc_with_location = 0.0;
  double acc_with_union = 0.0;
  double acc_with_pair = 0.0;
  // Percent of the exclude_both -> include_pair gap recovered; absent when
  // the gap is not positive.
  std::optional<double> recovered_scenario;
  std::optional<double> recovered_location;
};

DropRecovery drop_recovery(double acc_exclude_both, double acc_with_scenario,
                           double acc_with_location, double acc_with_union,
                           double acc_with_pair);

// Everything one experiment reports; serialized as report.json plus
// summary.csv / attention.csv rows.
struct RunReport {
  std::string method;
  std::uint64_t seed = 0;
  std::map<std::string, double> split_top1;
  double mean_top1 = 0.0;
  double final_val_top1 = 0.0;
  double best_val_top1 = 0.0;
  int best_epoch = -1;
  std::vector<double> loss_curve;  // per-epoch mean training loss
  std::optional<AttentionReport> attention;
  BatchCompositionStats composition;
};

void write_report_json(const RunReport& report,
                       const std::filesystem::path& path);
void append_summary_csv(const RunReport& report,
                        const std::filesystem::path& path);
void write_attention_csv(const AttentionReport& report,
                         const std::filesystem::path& path);

}  // namespace cir
