#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cir/ops.hpp"
#include "cir/tensor.hpp"

namespace cir {

using nd::Mode;
using nd::Tensor;

struct ModelConfig {
  int video_dim = 6912;
  int text_dim = 512;
  int hidden_dim = 4096;
  int embed_dim = 512;
  int qk_dim = 128;
  int num_classes = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;
};

struct BatchNormBlock {
  Tensor gamma;
  Tensor beta;
  nd::BatchNormState state;
};

struct ParamRef {
  std::string name;
  Tensor tensor;
};

// Trainable state of the method: video encoder f (FC -> batch norm -> ReLU
// -> FC), text encoder g (FC -> ReLU -> FC), query/key heads with layer
// norms, shared classifier h, and the temperature parameter. tau is stored
// as log(1/tau) and clamped to keep tau within [1e-3, 10].
struct CirModel {
  ModelConfig config;

  Linear f_fc1;
  BatchNormBlock f_bn;
  Linear f_fc2;

  Linear g_fc1;
  Linear g_fc2;

  Linear q_proj;
  LayerNormParams q_ln;
  Linear k_proj;
  LayerNormParams k_ln;

  Linear classifier;

  Tensor log_tau_inv;  // 1x1

  // Trainable parameters in declaration order (the checkpoint order).
  std::vector<ParamRef> parameters();
  std::vector<ParamRef> parameters() const;

  double tau() const;
  void clamp_tau();
};

// Kaiming-uniform weights, zero biases, unit norm scales, tau = 0.07;
// bit-reproducible per seed.
CirModel init_parameters(const ModelConfig& config, std::uint64_t seed);
inline CirModel init_parameters(const ModelConfig& config) {
  return init_parameters(config, config.seed);
}

// f(v): batch of raw video features -> embedding rows.
Tensor encode_video(CirModel& model, const Tensor& videos, Mode mode);
// g(t): batch of raw text features -> embedding rows.
Tensor encode_text(CirModel& model, const Tensor& texts);
// h(e): shared affine classifier over embeddings (from f(v) or from
// reconstructions; one parameter block serves both).
Tensor classify(const CirModel& model, const Tensor& embeddings);

// L(Q(f(v))) and L(K(f(v))): projection plus layer norm.
Tensor query_embed(const CirModel& model, const Tensor& f_v);
Tensor key_embed(const CirModel& model, const Tensor& f_v);

}  // namespace cir
