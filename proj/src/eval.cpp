#include "cir/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "cir/rng.hpp"

namespace cir {

using nlohmann::json;

double top1(CirModel& model, const Dataset& data, const std::vector<int>& ids,
            int eval_batch) {
  if (ids.empty()) throw ValueError("top1: empty id set");
  if (eval_batch < 1) throw ValueError("top1: eval batch must be >= 1");
  std::size_t correct = 0;
  for (std::size_t at = 0; at < ids.size(); at += eval_batch) {
    std::vector<int> chunk(
        ids.begin() + static_cast<std::ptrdiff_t>(at),
        ids.begin() + static_cast<std::ptrdiff_t>(
                          std::min(ids.size(), at + eval_batch)));
    Batch batch = make_batch(data, chunk);
    Tensor logits =
        classify(model, encode_video(model, batch.video, Mode::eval));
    for (nd::Index i = 0; i < logits.rows(); ++i) {
      // lowest class id wins ties
      nd::Index best = 0;
      for (nd::Index c = 1; c < logits.cols(); ++c)
        if (logits.value()(i, c) > logits.value()(i, best)) best = c;
      if (static_cast<int>(best) == batch.labels[static_cast<std::size_t>(i)])
        ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ids.size());
}

AttentionReport attention_report(CirModel& model, const Dataset& data,
                                 const std::vector<int>& ids, int batch_size,
                                 int num_batches, std::uint64_t seed) {
  AttentionReport report;
  report.scenario_matrix =
      nd::Mat::Zero(data.num_scenarios, data.num_scenarios);
  report.location_matrix =
      nd::Mat::Zero(data.num_locations, data.num_locations);

  auto batches = batch_iter(ids, batch_size, seed, /*epoch=*/0);
  if (num_batches > 0 &&
      batches.size() > static_cast<std::size_t>(num_batches))
    batches.resize(static_cast<std::size_t>(num_batches));
  report.composition = batch_composition(data, batches);

  double ss = 0.0, os = 0.0, sl = 0.0, ol = 0.0;
  for (const auto& batch_ids : batches) {
    Batch batch = make_batch(data, batch_ids);
    Tensor f_v = encode_video(model, batch.video, Mode::eval);
    Tensor scores = attention_scores_learned(model, f_v);
    Reconstruction rec = reconstruct(scores, f_v, MaskPolicy{}, batch.scenario,
                                     batch.location);
    const nd::Mat& w = rec.weights.value();
    for (nd::Index i = 0; i < w.rows(); ++i) {
      for (nd::Index j = 0; j < w.cols(); ++j) {
        if (i == j) continue;
        double mass = w(i, j);
        int si = batch.scenario[static_cast<std::size_t>(i)];
        int sj = batch.scenario[static_cast<std::size_t>(j)];
        int li = batch.location[static_cast<std::size_t>(i)];
        int lj = batch.location[static_cast<std::size_t>(j)];
        (si == sj ? ss : os) += mass;
        (li == lj ? sl : ol) += mass;
        report.scenario_matrix(si, sj) += mass;
        report.location_matrix(li, lj) += mass;
      }
    }
    ++report.batches;
  }

  double scen_total = ss + os;
  double loc_total = sl + ol;
  if (scen_total > 0.0) {
    report.ss = ss / scen_total;
    report.os = 1.0 - report.ss;  // exact complement after normalization
  }
  if (loc_total > 0.0) {
    report.sl = sl / loc_total;
    report.ol = 1.0 - report.sl;
  }
  for (nd::Index i = 0; i < report.scenario_matrix.rows(); ++i) {
    double row = report.scenario_matrix.row(i).sum();
    if (row > 0.0) report.scenario_matrix.row(i) /= row;
  }
  for (nd::Index i = 0; i < report.location_matrix.rows(); ++i) {
    double row = report.location_matrix.row(i).sum();
    if (row > 0.0) report.location_matrix.row(i) /= row;
  }
  return report;
}

TopkSupport topk_support(CirModel& model, const Dataset& data, int query_id,
                         const std::vector<int>& batch_ids, int k) {
  auto it = std::find(batch_ids.begin(), batch_ids.end(), query_id);
  if (it == batch_ids.end())
    throw ValueError("topk_support: query id not in batch");
  if (k < 1 || k >= static_cast<int>(batch_ids.size()))
    throw ValueError("topk_support: k must be in [1, batch size)");
  const auto query_row =
      static_cast<nd::Index>(std::distance(batch_ids.begin(), it));

  Batch batch = make_batch(data, batch_ids);
  Tensor f_v = encode_video(model, batch.video, Mode::eval);
  Tensor scores = attention_scores_learned(model, f_v);
  Reconstruction rec =
      reconstruct(scores, f_v, MaskPolicy{}, batch.scenario, batch.location);

  std::vector<SupportEntry> all;
  for (nd::Index j = 0; j < rec.weights.cols(); ++j) {
    if (j == query_row) continue;
    all.push_back({batch_ids[static_cast<std::size_t>(j)],
                   rec.weights.value()(query_row, j)});
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.id < b.id;
  });
  TopkSupport out;
  out.entries.assign(all.begin(), all.begin() + k);
  for (std::size_t i = static_cast<std::size_t>(k); i < all.size(); ++i)
    out.residual += all[i].weight;
  return out;
}

DropRecovery drop_recovery(double acc_exclude_both, double acc_with_scenario,
                           double acc_with_location, double acc_with_union,
                           double acc_with_pair) {
  DropRecovery d;
  d.acc_exclude_both = acc_exclude_both;
  d.acc_with_scenario = acc_with_scenario;
  d.acc_with_location = acc_with_location;
  d.acc_with_union = acc_with_union;
  d.acc_with_pair = acc_with_pair;
  double gap = acc_with_pair - acc_exclude_both;
  if (gap > 0.0) {
    d.recovered_scenario = 100.0 * (acc_with_scenario - acc_exclude_both) / gap;
    d.recovered_location = 100.0 * (acc_with_location - acc_exclude_both) / gap;
  }
  return d;
}

namespace {

json matrix_to_json(const nd::Mat& m) {
  json rows = json::array();
  for (nd::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (nd::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void write_report_json(const RunReport& report,
                       const std::filesystem::path& path) {
  json j = {
      {"method", report.method},
      {"seed", report.seed},
      {"split_top1", report.split_top1},
      {"mean_top1", report.mean_top1},
      {"final_val_top1", report.final_val_top1},
      {"best_val_top1", report.best_val_top1},
      {"best_epoch", report.best_epoch},
      {"loss_curve", report.loss_curve},
      {"batch_composition",
       {{"same_scenario", report.composition.same_scenario},
        {"same_location", report.composition.same_location},
        {"same_both", report.composition.same_both}}},
  };
  if (report.attention) {
    j["attention"] = {
        {"ss", report.attention->ss},
        {"os", report.attention->os},
        {"sl", report.attention->sl},
        {"ol", report.attention->ol},
        {"batches", report.attention->batches},
        {"scenario_matrix", matrix_to_json(report.attention->scenario_matrix)},
        {"location_matrix", matrix_to_json(report.attention->location_matrix)},
    };
  }
  std::ofstream os(path);
  if (!os) throw FormatError("report: cannot write " + path.string());
  os << j.dump(2) << "\n";
}

void append_summary_csv(const RunReport& report,
                        const std::filesystem::path& path) {
  bool fresh = !std::filesystem::exists(path);
  std::ofstream os(path, std::ios::app);
  if (!os) throw FormatError("summary: cannot write " + path.string());
  if (fresh) os << "split,method,seed,top1\n";
  char buf[64];
  for (const auto& [split, acc] : report.split_top1) {
    std::snprintf(buf, sizeof(buf), "%.6f", acc);
    os << split << "," << report.method << "," << report.seed << "," << buf
       << "\n";
  }
}

void write_attention_csv(const AttentionReport& report,
                         const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("attention: cannot write " + path.string());
  char buf[64];
  auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.9f", v);
    return std::string(buf);
  };
  os << "bucket,mass\n";
  os << "SS," << fmt(report.ss) << "\nOS," << fmt(report.os) << "\nSL,"
     << fmt(report.sl) << "\nOL," << fmt(report.ol) << "\n";
  auto dump_matrix = [&](const char* name, const nd::Mat& m) {
    os << "matrix," << name << "\n";
    for (nd::Index i = 0; i < m.rows(); ++i) {
      for (nd::Index j = 0; j < m.cols(); ++j)
        os << (j ? "," : "") << fmt(m(i, j));
      os << "\n";
    }
  };
  dump_matrix("scenario", report.scenario_matrix);
  dump_matrix("location", report.location_matrix);
}

}  // namespace cir
