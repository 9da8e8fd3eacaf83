#include "cir/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cir/rng.hpp"

namespace cir {

namespace fs = std::filesystem;
using nlohmann::json;

SampleRecord Dataset::record(std::size_t i) const {
  SampleRecord r;
  r.clip_id = clip_id[i];
  r.video_feat = video.row(static_cast<nd::Index>(i));
  r.text_feat = text.row(static_cast<nd::Index>(i));
  r.class_id = class_id[i];
  r.scenario_id = scenario_id[i];
  r.location_id = location_id[i];
  r.video_id = video_id[i];
  return r;
}

void Dataset::refresh_ranges() {
  num_classes = num_scenarios = num_locations = 0;
  for (std::size_t i = 0; i < size(); ++i) {
    num_classes = std::max(num_classes, class_id[i] + 1);
    num_scenarios = std::max(num_scenarios, scenario_id[i] + 1);
    num_locations = std::max(num_locations, location_id[i] + 1);
  }
}

void Dataset::validate() const {
  const std::size_t n = size();
  if (video.rows() != static_cast<nd::Index>(n) ||
      text.rows() != static_cast<nd::Index>(n) || video_id.size() != n ||
      class_id.size() != n || scenario_id.size() != n ||
      location_id.size() != n)
    throw FormatError("dataset: column lengths disagree");
  for (std::size_t i = 0; i < n; ++i) {
    if (class_id[i] < 0 || class_id[i] >= num_classes ||
        scenario_id[i] < 0 || scenario_id[i] >= num_scenarios ||
        location_id[i] < 0 || location_id[i] >= num_locations)
      throw FormatError("dataset: id out of declared range at row " +
                        std::to_string(i));
  }
}

void SyntheticSpec::validate() const {
  if (num_classes < 2 || num_scenarios < 2 || num_locations < 2 ||
      samples_per_cell < 2 || video_dim < 2 || text_dim < 2)
    throw ValueError("SyntheticSpec: all counts must be >= 2");
  if (class_signal < 0.0 || scenario_shift < 0.0 || location_shift < 0.0 ||
      noise < 0.0)
    throw ValueError("SyntheticSpec: magnitudes must be >= 0");
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "synthetic"));

  auto draw = [&rng](int rows, int cols) {
    nd::Mat m(rows, cols);
    for (nd::Index i = 0; i < m.rows(); ++i)
      for (nd::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal();
    return m;
  };

  nd::Mat class_proto = draw(spec.num_classes, spec.video_dim);
  nd::Mat scen_proto = draw(spec.num_scenarios, spec.video_dim);
  nd::Mat loc_proto = draw(spec.num_locations, spec.video_dim);
  nd::Mat text_proto = draw(spec.num_classes, spec.text_dim);

  const int total =
      spec.num_scenarios * spec.num_locations * spec.samples_per_cell;
  const int videos_per_cell = std::max(2, spec.samples_per_cell / 25);

  Dataset data;
  data.video.resize(total, spec.video_dim);
  data.text.resize(total, spec.text_dim);
  data.clip_id.reserve(total);
  data.video_id.reserve(total);
  data.class_id.reserve(total);
  data.scenario_id.reserve(total);
  data.location_id.reserve(total);

  nd::Index row = 0;
  for (int s = 0; s < spec.num_scenarios; ++s) {
    for (int l = 0; l < spec.num_locations; ++l) {
      for (int k = 0; k < spec.samples_per_cell; ++k, ++row) {
        int y = k % spec.num_classes;
        for (int d = 0; d < spec.video_dim; ++d)
          data.video(row, d) = spec.class_signal * class_proto(y, d) +
                               spec.scenario_shift * scen_proto(s, d) +
                               spec.location_shift * loc_proto(l, d) +
                               spec.noise * rng.normal();
        for (int d = 0; d < spec.text_dim; ++d)
          data.text(row, d) = spec.class_signal * text_proto(y, d) +
                              0.5 * spec.noise * rng.normal();
        std::ostringstream cid, vid;
        cid << "clip_s" << s << "_l" << l << "_" << k;
        vid << "video_s" << s << "_l" << l << "_" << (k % videos_per_cell);
        data.clip_id.push_back(cid.str());
        data.video_id.push_back(vid.str());
        data.class_id.push_back(y);
        data.scenario_id.push_back(s);
        data.location_id.push_back(l);
      }
    }
  }
  data.refresh_ranges();
  return data;
}

std::string to_string(SplitMode mode) {
  switch (mode) {
    case SplitMode::exclude_both: return "exclude_both";
    case SplitMode::include_scenario: return "include_scenario";
    case SplitMode::include_location: return "include_location";
    case SplitMode::include_union: return "include_union";
    case SplitMode::include_pair: return "include_pair";
  }
  throw ValueError("unknown split mode");
}

SplitMode split_mode_from_string(const std::string& name) {
  if (name == "exclude_both") return SplitMode::exclude_both;
  if (name == "include_scenario") return SplitMode::include_scenario;
  if (name == "include_location") return SplitMode::include_location;
  if (name == "include_union") return SplitMode::include_union;
  if (name == "include_pair") return SplitMode::include_pair;
  throw ValueError("unknown split mode: " + name);
}

Split make_split(const Dataset& data, const SplitSpec& spec) {
  const int sc = spec.held_scenario;
  const int lo = spec.held_location;
  Split split;
  split.spec = spec;
  std::set<int> test_set;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.scenario_id[i] == sc && data.location_id[i] == lo)
      test_set.insert(static_cast<int>(i));
  if (test_set.empty())
    throw SplitError("make_split: no samples for held pair (" +
                     std::to_string(sc) + ", " + std::to_string(lo) + ")");
  split.test.assign(test_set.begin(), test_set.end());

  for (std::size_t i = 0; i < data.size(); ++i) {
    const int s = data.scenario_id[i];
    const int l = data.location_id[i];
    bool keep = false;
    switch (spec.mode) {
      case SplitMode::exclude_both: keep = (s != sc && l != lo); break;
      case SplitMode::include_scenario: keep = (l != lo); break;
      case SplitMode::include_location: keep = (s != sc); break;
      case SplitMode::include_union: keep = (s != sc || l != lo); break;
      case SplitMode::include_pair:
        keep = test_set.count(static_cast<int>(i)) == 0;
        break;
    }
    if (keep) split.train.push_back(static_cast<int>(i));
  }
  if (split.train.empty())
    throw SplitError("make_split: empty training set for mode " +
                     to_string(spec.mode));
  return split;
}

std::pair<std::vector<int>, std::vector<int>> validation_split(
    const Dataset& data, const std::vector<int>& train_ids, double fraction,
    std::uint64_t seed) {
  std::map<std::string, std::vector<int>> by_video;
  for (int id : train_ids)
    by_video[data.video_id[static_cast<std::size_t>(id)]].push_back(id);
  if (by_video.size() < 2)
    throw SplitError("validation_split: need >= 2 distinct videos, got " +
                     std::to_string(by_video.size()));

  std::vector<const std::vector<int>*> videos;
  videos.reserve(by_video.size());
  for (auto& [_, ids] : by_video) videos.push_back(&ids);
  // Seeded shuffle then a stable sort by size: the seed picks among
  // equal-sized videos, largest-first keeps the selected set smallest.
  Rng rng(derive_seed(seed, "val_split"));
  rng.shuffle(videos);
  std::stable_sort(videos.begin(), videos.end(),
                   [](const auto* a, const auto* b) {
                     return a->size() > b->size();
                   });

  const double target = fraction * static_cast<double>(train_ids.size());
  std::set<int> val_set;
  for (const auto* ids : videos) {
    if (static_cast<double>(val_set.size()) >= target) break;
    val_set.insert(ids->begin(), ids->end());
  }
  std::vector<int> train_out, val_out;
  for (int id : train_ids)
    (val_set.count(id) ? val_out : train_out).push_back(id);
  if (train_out.empty())
    throw SplitError("validation_split: validation would consume every video");
  return {train_out, val_out};
}

std::vector<std::vector<int>> batch_iter(const std::vector<int>& ids,
                                         int batch_size, std::uint64_t seed,
                                         int epoch) {
  if (batch_size < 2)
    throw ValueError("batch_iter: batch_size must be >= 2");
  std::vector<int> order = ids;
  Rng rng(derive_seed(seed, "batch", static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);
  std::vector<std::vector<int>> batches;
  for (std::size_t at = 0; at < order.size(); at += batch_size) {
    std::size_t end = std::min(order.size(), at + batch_size);
    if (end - at < 2) break;  // short tail dropped
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

BatchCompositionStats batch_composition(
    const Dataset& data, const std::vector<std::vector<int>>& batches) {
  BatchCompositionStats stats;
  double pairs = 0.0;
  for (const auto& batch : batches) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (std::size_t j = 0; j < batch.size(); ++j) {
        if (i == j) continue;
        pairs += 1.0;
        bool ss = data.scenario_id[batch[i]] == data.scenario_id[batch[j]];
        bool sl = data.location_id[batch[i]] == data.location_id[batch[j]];
        stats.same_scenario += ss;
        stats.same_location += sl;
        stats.same_both += ss && sl;
      }
    }
  }
  if (pairs > 0.0) {
    stats.same_scenario /= pairs;
    stats.same_location /= pairs;
    stats.same_both /= pairs;
  }
  return stats;
}

Batch make_batch(const Dataset& data, const std::vector<int>& ids) {
  Batch b;
  nd::Mat v(static_cast<nd::Index>(ids.size()), data.video.cols());
  nd::Mat t(static_cast<nd::Index>(ids.size()), data.text.cols());
  b.labels.reserve(ids.size());
  b.scenario.reserve(ids.size());
  b.location.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto id = static_cast<std::size_t>(ids[i]);
    v.row(static_cast<nd::Index>(i)) = data.video.row(ids[i]);
    t.row(static_cast<nd::Index>(i)) = data.text.row(ids[i]);
    b.labels.push_back(data.class_id[id]);
    b.scenario.push_back(data.scenario_id[id]);
    b.location.push_back(data.location_id[id]);
  }
  b.video = Tensor::from_matrix(std::move(v));
  b.text = Tensor::from_matrix(std::move(t));
  return b;
}

// ---- feature store --------------------------------------------------------

namespace {

constexpr char kStoreMagic[9] = "ARGF0001";

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (!is) throw FormatError("feature store: truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{buf[i]} << (8 * i);
  return v;
}

void write_matrix_file(const nd::Mat& m, const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("feature store: cannot write " + path.string());
  os.write(kStoreMagic, 8);
  write_u64(os, static_cast<std::uint64_t>(m.rows()));
  write_u64(os, static_cast<std::uint64_t>(m.cols()));
  static_assert(sizeof(double) == 8);
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!os) throw FormatError("feature store: short write to " + path.string());
}

nd::Mat read_matrix_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("feature store: cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kStoreMagic, 8) != 0)
    throw FormatError("feature store: bad magic in " + path.string());
  auto rows = static_cast<nd::Index>(read_u64(is));
  auto cols = static_cast<nd::Index>(read_u64(is));
  nd::Mat m(rows, cols);
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!is || is.gcount() !=
                 static_cast<std::streamsize>(m.size() * sizeof(double)))
    throw FormatError("feature store: truncated payload in " + path.string());
  return m;
}

}  // namespace

void write_feature_store(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  write_matrix_file(data.video, dir / "video.bin");
  write_matrix_file(data.text, dir / "text.bin");
  std::ofstream os(dir / "index.jsonl");
  if (!os) throw FormatError("feature store: cannot write index");
  for (std::size_t i = 0; i < data.size(); ++i) {
    json rec = {
        {"clip_id", data.clip_id[i]},       {"class_id", data.class_id[i]},
        {"scenario_id", data.scenario_id[i]},
        {"location_id", data.location_id[i]},
        {"video_id", data.video_id[i]},     {"row", i},
    };
    os << rec.dump() << "\n";
  }
}

Dataset read_feature_store(const fs::path& dir) {
  Dataset data;
  data.video = read_matrix_file(dir / "video.bin");
  data.text = read_matrix_file(dir / "text.bin");
  if (data.video.rows() != data.text.rows())
    throw FormatError("feature store: modality row counts disagree");

  std::ifstream is(dir / "index.jsonl");
  if (!is) throw FormatError("feature store: missing index.jsonl");
  const auto rows = static_cast<std::size_t>(data.video.rows());
  data.clip_id.resize(rows);
  data.video_id.resize(rows);
  data.class_id.resize(rows);
  data.scenario_id.resize(rows);
  data.location_id.resize(rows);
  std::vector<bool> seen(rows, false);
  std::size_t count = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded())
      throw FormatError("feature store: malformed index line");
    auto row = rec.at("row").get<std::size_t>();
    if (row >= rows || seen[row])
      throw FormatError("feature store: index row " + std::to_string(row) +
                        " invalid or duplicated");
    seen[row] = true;
    ++count;
    data.clip_id[row] = rec.at("clip_id").get<std::string>();
    data.video_id[row] = rec.at("video_id").get<std::string>();
    data.class_id[row] = rec.at("class_id").get<int>();
    data.scenario_id[row] = rec.at("scenario_id").get<int>();
    data.location_id[row] = rec.at("location_id").get<int>();
  }
  if (count != rows)
    throw FormatError("feature store: index has " + std::to_string(count) +
                      " rows, payload has " + std::to_string(rows));
  data.refresh_ranges();
  data.validate();
  return data;
}

void write_split_manifest(const Split& split, const fs::path& path) {
  std::vector<int> train = split.train, test = split.test;
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  json j = {
      {"held_scenario", split.spec.held_scenario},
      {"held_location", split.spec.held_location},
      {"mode", to_string(split.spec.mode)},
      {"train", train},
      {"test", test},
  };
  std::ofstream os(path);
  if (!os) throw FormatError("split manifest: cannot write " + path.string());
  os << j.dump(2) << "\n";
}

Split read_split_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("split manifest: cannot open " + path.string());
  json j = json::parse(is, nullptr, false);
  if (j.is_discarded())
    throw FormatError("split manifest: malformed JSON in " + path.string());
  Split split;
  split.spec.held_scenario = j.at("held_scenario").get<int>();
  split.spec.held_location = j.at("held_location").get<int>();
  split.spec.mode = split_mode_from_string(j.at("mode").get<std::string>());
  split.train = j.at("train").get<std::vector<int>>();
  split.test = j.at("test").get<std::vector<int>>();
  return split;
}

}  // namespace cir
