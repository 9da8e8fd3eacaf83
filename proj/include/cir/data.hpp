#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cir/reconstruction.hpp"
#include "cir/tensor.hpp"

namespace cir {

// One clip's features and metadata, materialized from the dataset matrices.
struct SampleRecord {
  std::string clip_id;
  Eigen::RowVectorXd video_feat;
  Eigen::RowVectorXd text_feat;
  int class_id = 0;
  int scenario_id = 0;
  int location_id = 0;
  std::string video_id;
};

// Immutable after load; features live in two row-major matrices with
// aligned per-row metadata.
struct Dataset {
  nd::Mat video;  // N x D_v
  nd::Mat text;   // N x D_t
  std::vector<std::string> clip_id;
  std::vector<std::string> video_id;
  std::vector<int> class_id;
  std::vector<int> scenario_id;
  std::vector<int> location_id;

  int num_classes = 0;
  int num_scenarios = 0;
  int num_locations = 0;

  std::size_t size() const { return clip_id.size(); }
  int video_dim() const { return static_cast<int>(video.cols()); }
  int text_dim() const { return static_cast<int>(text.cols()); }

  SampleRecord record(std::size_t i) const;
  // Recomputes the id ranges from the metadata columns.
  void refresh_ranges();
  void validate() const;
};

// Synthetic scenario x location grid standing in for precomputed clip
// features. Video features carry class, scenario, and location components;
// text features carry only the class component.
struct SyntheticSpec {
  int num_classes = 5;
  int num_scenarios = 4;
  int num_locations = 4;
  int samples_per_cell = 200;
  int video_dim = 64;
  int text_dim = 32;
  double class_signal = 1.0;
  double scenario_shift = 1.0;
  double location_shift = 1.0;
  double noise = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

enum class SplitMode {
  exclude_both,
  include_scenario,
  include_location,
  include_union,
  include_pair,
};

std::string to_string(SplitMode mode);
SplitMode split_mode_from_string(const std::string& name);

struct SplitSpec {
  int held_scenario = 0;
  int held_location = 0;
  SplitMode mode = SplitMode::exclude_both;
};

struct Split {
  SplitSpec spec;
  std::vector<int> train;
  std::vector<int> test;
};

// Test set is every sample of the held (scenario, location) cell in every
// mode; only the train membership varies with the mode.
Split make_split(const Dataset& data, const SplitSpec& spec);

// Splits train ids at whole-video granularity: validation gets the
// smallest set of whole videos reaching at least `fraction` of the clips
// (ties between equal-sized videos broken by seed).
std::pair<std::vector<int>, std::vector<int>> validation_split(
    const Dataset& data, const std::vector<int>& train_ids,
    double fraction = 0.10, std::uint64_t seed = 0);

// Seeded per-epoch shuffle into batches; a trailing batch smaller than 2
// is dropped (batch norm and self-masked reconstruction both need support).
std::vector<std::vector<int>> batch_iter(const std::vector<int>& ids,
                                         int batch_size, std::uint64_t seed,
                                         int epoch);

// Fraction of ordered in-batch pairs sharing scenario / location / both.
struct BatchCompositionStats {
  double same_scenario = 0.0;
  double same_location = 0.0;
  double same_both = 0.0;
};

BatchCompositionStats batch_composition(
    const Dataset& data, const std::vector<std::vector<int>>& batches);

Batch make_batch(const Dataset& data, const std::vector<int>& ids);

// Feature store: index.jsonl (clip metadata + row offsets) plus one raw
// matrix file per modality ("ARGF0001" magic, u64 rows/cols header,
// little-endian f64 payload). Round-trips losslessly.
void write_feature_store(const Dataset& data,
                         const std::filesystem::path& dir);
Dataset read_feature_store(const std::filesystem::path& dir);

void write_split_manifest(const Split& split,
                          const std::filesystem::path& path);
Split read_split_manifest(const std::filesystem::path& path);

}  // namespace cir
