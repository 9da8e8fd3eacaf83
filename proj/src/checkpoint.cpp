#include "cir/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace cir {

namespace {

using nlohmann::json;

constexpr char kMagic[5] = "CIR1";

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (!is) throw FormatError("checkpoint: truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{buf[i]} << (8 * i);
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  auto len = read_u64(is);
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  if (!is) throw FormatError("checkpoint: truncated string");
  return s;
}

void write_doubles(std::ostream& os, const double* p, std::size_t n) {
  static_assert(sizeof(double) == 8);
  os.write(reinterpret_cast<const char*>(p),
           static_cast<std::streamsize>(n * sizeof(double)));
}

void read_doubles(std::istream& is, double* p, std::size_t n) {
  is.read(reinterpret_cast<char*>(p),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw FormatError("checkpoint: truncated payload");
}

void write_mat(std::ostream& os, const nd::Mat& m) {
  write_u64(os, static_cast<std::uint64_t>(m.rows()));
  write_u64(os, static_cast<std::uint64_t>(m.cols()));
  write_doubles(os, m.data(), static_cast<std::size_t>(m.size()));
}

nd::Mat read_mat(std::istream& is) {
  auto rows = static_cast<nd::Index>(read_u64(is));
  auto cols = static_cast<nd::Index>(read_u64(is));
  nd::Mat m(rows, cols);
  read_doubles(is, m.data(), static_cast<std::size_t>(m.size()));
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CirModel& model,
                     const CheckpointExtras& extras) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("checkpoint: cannot write " + path.string());
  os.write(kMagic, 4);

  json cfg = {
      {"video_dim", model.config.video_dim},
      {"text_dim", model.config.text_dim},
      {"hidden_dim", model.config.hidden_dim},
      {"embed_dim", model.config.embed_dim},
      {"qk_dim", model.config.qk_dim},
      {"num_classes", model.config.num_classes},
      {"seed", model.config.seed},
  };
  write_string(os, cfg.dump());

  auto params = model.parameters();
  write_u64(os, params.size());
  for (const ParamRef& p : params) {
    write_string(os, p.name);
    write_u64(os, static_cast<std::uint64_t>(p.tensor.rank()));
    write_mat(os, p.tensor.value());
  }

  write_u64(os, static_cast<std::uint64_t>(model.f_bn.state.running_mean.size()));
  write_doubles(os, model.f_bn.state.running_mean.data(),
                static_cast<std::size_t>(model.f_bn.state.running_mean.size()));
  write_doubles(os, model.f_bn.state.running_var.data(),
                static_cast<std::size_t>(model.f_bn.state.running_var.size()));

  os.put(extras.adam_step ? 1 : 0);
  if (extras.adam_step) {
    if (extras.adam_m.size() != params.size() ||
        extras.adam_v.size() != params.size())
      throw ValueError("checkpoint: adam buffer count does not match params");
    write_u64(os, static_cast<std::uint64_t>(*extras.adam_step));
    for (std::size_t k = 0; k < params.size(); ++k) {
      write_mat(os, extras.adam_m[k]);
      write_mat(os, extras.adam_v[k]);
    }
  }

  write_u64(os, static_cast<std::uint64_t>(extras.epoch));
  write_u64(os, static_cast<std::uint64_t>(extras.global_step));
  write_string(os, extras.rng_state);
  if (!os) throw FormatError("checkpoint: short write to " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("checkpoint: cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic in " + path.string());

  json cfg = json::parse(read_string(is), nullptr, false);
  if (cfg.is_discarded()) throw FormatError("checkpoint: malformed config");
  ModelConfig config;
  config.video_dim = cfg.at("video_dim").get<int>();
  config.text_dim = cfg.at("text_dim").get<int>();
  config.hidden_dim = cfg.at("hidden_dim").get<int>();
  config.embed_dim = cfg.at("embed_dim").get<int>();
  config.qk_dim = cfg.at("qk_dim").get<int>();
  config.num_classes = cfg.at("num_classes").get<int>();
  config.seed = cfg.at("seed").get<std::uint64_t>();

  LoadedCheckpoint out;
  out.model = init_parameters(config, config.seed);
  auto params = out.model.parameters();
  auto n_params = read_u64(is);
  if (n_params != params.size())
    throw FormatError("checkpoint: expected " + std::to_string(params.size()) +
                      " parameter blocks, found " + std::to_string(n_params));
  for (ParamRef& p : params) {
    std::string name = read_string(is);
    if (name != p.name)
      throw FormatError("checkpoint: parameter order mismatch at " + name);
    auto rank = static_cast<int>(read_u64(is));
    nd::Mat value = read_mat(is);
    if (value.rows() != p.tensor.rows() || value.cols() != p.tensor.cols())
      throw FormatError("checkpoint: shape mismatch for " + name);
    p.tensor.value() = std::move(value);
    p.tensor.set_rank(rank);
  }

  auto bn_width = static_cast<nd::Index>(read_u64(is));
  if (bn_width != out.model.f_bn.state.running_mean.size())
    throw FormatError("checkpoint: batch-norm width mismatch");
  read_doubles(is, out.model.f_bn.state.running_mean.data(),
               static_cast<std::size_t>(bn_width));
  read_doubles(is, out.model.f_bn.state.running_var.data(),
               static_cast<std::size_t>(bn_width));

  int has_adam = is.get();
  if (has_adam == 1) {
    out.extras.adam_step = static_cast<std::int64_t>(read_u64(is));
    for (std::size_t k = 0; k < params.size(); ++k) {
      out.extras.adam_m.push_back(read_mat(is));
      out.extras.adam_v.push_back(read_mat(is));
    }
  } else if (has_adam != 0) {
    throw FormatError("checkpoint: corrupt optimizer flag");
  }

  out.extras.epoch = static_cast<int>(read_u64(is));
  out.extras.global_step = static_cast<std::int64_t>(read_u64(is));
  out.extras.rng_state = read_string(is);
  return out;
}

}  // namespace cir
