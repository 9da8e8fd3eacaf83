#include "cir/model.hpp"

#include <cmath>

#include "cir/rng.hpp"

namespace cir {

namespace {

constexpr double kTauInit = 0.07;
constexpr double kTauMin = 1e-3;
constexpr double kTauMax = 10.0;

Linear make_linear(int in, int out, Rng& rng) {
  // Kaiming-uniform for ReLU fan-in, zero bias.
  double bound = std::sqrt(6.0 / static_cast<double>(in));
  nd::Mat w(in, out);
  for (nd::Index i = 0; i < w.rows(); ++i)
    for (nd::Index j = 0; j < w.cols(); ++j)
      w(i, j) = rng.uniform(-bound, bound);
  Linear l;
  l.weight = Tensor::from_matrix(std::move(w), true);
  l.bias = Tensor::zeros(1, out, true);
  l.bias.set_rank(1);
  return l;
}

LayerNormParams make_layer_norm(int width) {
  LayerNormParams ln;
  ln.gamma = Tensor::from_matrix(nd::Mat::Ones(1, width), true);
  ln.gamma.set_rank(1);
  ln.beta = Tensor::zeros(1, width, true);
  ln.beta.set_rank(1);
  return ln;
}

BatchNormBlock make_batch_norm(int width) {
  BatchNormBlock bn;
  bn.gamma = Tensor::from_matrix(nd::Mat::Ones(1, width), true);
  bn.gamma.set_rank(1);
  bn.beta = Tensor::zeros(1, width, true);
  bn.beta.set_rank(1);
  bn.state = nd::BatchNormState(width);
  return bn;
}

Tensor affine(const Linear& l, const Tensor& x) {
  return nd::add_bias(nd::matmul(x, l.weight), l.bias);
}

}  // namespace

void ModelConfig::validate() const {
  if (video_dim < 1 || text_dim < 1 || hidden_dim < 1 || embed_dim < 1 ||
      qk_dim < 1)
    throw ValueError("ModelConfig: all dimensions must be >= 1");
  if (num_classes < 2)
    throw ValueError("ModelConfig: num_classes must be >= 2, got " +
                     std::to_string(num_classes));
}

std::vector<ParamRef> CirModel::parameters() {
  return {
      {"f.fc1.weight", f_fc1.weight}, {"f.fc1.bias", f_fc1.bias},
      {"f.bn.gamma", f_bn.gamma},     {"f.bn.beta", f_bn.beta},
      {"f.fc2.weight", f_fc2.weight}, {"f.fc2.bias", f_fc2.bias},
      {"g.fc1.weight", g_fc1.weight}, {"g.fc1.bias", g_fc1.bias},
      {"g.fc2.weight", g_fc2.weight}, {"g.fc2.bias", g_fc2.bias},
      {"q.weight", q_proj.weight},    {"q.bias", q_proj.bias},
      {"q.ln.gamma", q_ln.gamma},     {"q.ln.beta", q_ln.beta},
      {"k.weight", k_proj.weight},    {"k.bias", k_proj.bias},
      {"k.ln.gamma", k_ln.gamma},     {"k.ln.beta", k_ln.beta},
      {"h.weight", classifier.weight},{"h.bias", classifier.bias},
      {"log_tau_inv", log_tau_inv},
  };
}

std::vector<ParamRef> CirModel::parameters() const {
  return const_cast<CirModel*>(this)->parameters();
}

double CirModel::tau() const { return std::exp(-log_tau_inv.value()(0, 0)); }

void CirModel::clamp_tau() {
  double lo = std::log(1.0 / kTauMax);
  double hi = std::log(1.0 / kTauMin);
  double& v = log_tau_inv.value()(0, 0);
  v = std::min(std::max(v, lo), hi);
}

CirModel init_parameters(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, "init"));
  CirModel m;
  m.config = config;
  m.f_fc1 = make_linear(config.video_dim, config.hidden_dim, rng);
  m.f_bn = make_batch_norm(config.hidden_dim);
  m.f_fc2 = make_linear(config.hidden_dim, config.embed_dim, rng);
  m.g_fc1 = make_linear(config.text_dim, config.embed_dim, rng);
  m.g_fc2 = make_linear(config.embed_dim, config.embed_dim, rng);
  m.q_proj = make_linear(config.embed_dim, config.qk_dim, rng);
  m.q_ln = make_layer_norm(config.qk_dim);
  m.k_proj = make_linear(config.embed_dim, config.qk_dim, rng);
  m.k_ln = make_layer_norm(config.qk_dim);
  m.classifier = make_linear(config.embed_dim, config.num_classes, rng);
  m.log_tau_inv = Tensor::scalar(std::log(1.0 / kTauInit), true);
  return m;
}

Tensor encode_video(CirModel& model, const Tensor& videos, Mode mode) {
  if (videos.cols() != model.config.video_dim)
    throw ShapeError("encode_video: input width " +
                     std::to_string(videos.cols()) + " != video_dim " +
                     std::to_string(model.config.video_dim));
  Tensor z = affine(model.f_fc1, videos);
  z = nd::batch_norm_1d(z, model.f_bn.gamma, model.f_bn.beta,
                        model.f_bn.state, mode);
  z = nd::relu(z);
  return affine(model.f_fc2, z);
}

Tensor encode_text(CirModel& model, const Tensor& texts) {
  if (texts.cols() != model.config.text_dim)
    throw ShapeError("encode_text: input width " +
                     std::to_string(texts.cols()) + " != text_dim " +
                     std::to_string(model.config.text_dim));
  Tensor z = nd::relu(affine(model.g_fc1, texts));
  return affine(model.g_fc2, z);
}

Tensor classify(const CirModel& model, const Tensor& embeddings) {
  if (embeddings.cols() != model.config.embed_dim)
    throw ShapeError("classify: input width " +
                     std::to_string(embeddings.cols()) + " != embed_dim " +
                     std::to_string(model.config.embed_dim));
  return affine(model.classifier, embeddings);
}

Tensor query_embed(const CirModel& model, const Tensor& f_v) {
  return nd::layer_norm(affine(model.q_proj, f_v), model.q_ln.gamma,
                        model.q_ln.beta, model.q_ln.eps);
}

Tensor key_embed(const CirModel& model, const Tensor& f_v) {
  return nd::layer_norm(affine(model.k_proj, f_v), model.k_ln.gamma,
                        model.k_ln.beta, model.k_ln.eps);
}

}  // namespace cir
