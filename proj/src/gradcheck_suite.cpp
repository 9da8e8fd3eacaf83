#include "cir/gradcheck_suite.hpp"

#include <cmath>

#include "cir/gradcheck.hpp"
#include "cir/reconstruction.hpp"
#include "cir/rng.hpp"

namespace cir {

namespace {

using nd::BoolMat;
using nd::Index;
using nd::Mat;

Mat random_matrix(Index rows, Index cols, Rng& rng) {
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

Mat away_from_kinks(Mat m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      if (std::abs(m(i, j)) < 0.05) m(i, j) = 0.5;
  return m;
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_battery(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "gradcheck"));
  std::vector<GradCheckEntry> results;
  auto run = [&results](const std::string& name, auto fn,
                        std::vector<nd::Tensor> inputs) {
    auto report = nd::gradcheck(fn, std::move(inputs));
    results.push_back({name, report.max_rel_error});
  };
  using nd::Tensor;
  using V = std::vector<Tensor>;

  Mat a = random_matrix(3, 4, rng);
  Mat b = random_matrix(3, 4, rng);
  Mat c = random_matrix(4, 2, rng);
  Mat row = random_matrix(1, 4, rng);
  Mat row2 = random_matrix(1, 4, rng);

  run("add", [](const V& in) { return sum(add(in[0], in[1])); },
      {Tensor::from_matrix(a), Tensor::from_matrix(b)});
  run("sub", [](const V& in) { return sum(mul(sub(in[0], in[1]), in[1])); },
      {Tensor::from_matrix(a), Tensor::from_matrix(b)});
  run("mul", [](const V& in) { return sum(mul(in[0], in[1])); },
      {Tensor::from_matrix(a), Tensor::from_matrix(b)});
  run("scale", [](const V& in) { return sum(scale(in[0], -1.7)); },
      {Tensor::from_matrix(a)});
  run("scale_by", [](const V& in) { return sum(scale_by(in[0], in[1])); },
      {Tensor::from_matrix(a), Tensor::scalar(0.6)});
  run("exp_elem", [](const V& in) { return sum(exp_elem(in[0])); },
      {Tensor::from_matrix(a)});
  run("square", [](const V& in) { return sum(square(in[0])); },
      {Tensor::from_matrix(a)});
  run("relu", [](const V& in) { return sum(relu(in[0])); },
      {Tensor::from_matrix(away_from_kinks(a))});
  run("sum", [](const V& in) { return sum(square(in[0])); },
      {Tensor::from_matrix(a)});
  run("mean_rows", [](const V& in) { return sum(square(mean_rows(in[0]))); },
      {Tensor::from_matrix(a)});
  run("transpose", [](const V& in) { return sum(square(transpose(in[0]))); },
      {Tensor::from_matrix(a)});
  run("gather_rows",
      [](const V& in) { return sum(square(gather_rows(in[0], {1, 0, 1}))); },
      {Tensor::from_matrix(a)});
  run("matmul", [](const V& in) { return sum(square(matmul(in[0], in[1]))); },
      {Tensor::from_matrix(a), Tensor::from_matrix(c)});
  run("add_bias",
      [](const V& in) { return sum(square(add_bias(in[0], in[1]))); },
      {Tensor::from_matrix(a), Tensor::from_matrix(row)});
  run("pairwise_sqdist",
      [](const V& in) { return sum(square(pairwise_sqdist(in[0], in[1]))); },
      {Tensor::from_matrix(a), Tensor::from_matrix(b)});
  run("l2_normalize_rows",
      [](const V& in) { return sum(square(l2_normalize_rows(in[0]))); },
      {Tensor::from_matrix(a)});
  run("cosine_similarity_matrix",
      [](const V& in) {
        return sum(square(cosine_similarity_matrix(in[0], in[1])));
      },
      {Tensor::from_matrix(a), Tensor::from_matrix(b)});
  run("layer_norm",
      [](const V& in) {
        return sum(square(layer_norm(in[0], in[1], in[2])));
      },
      {Tensor::from_matrix(a), Tensor::from_matrix(row),
       Tensor::from_matrix(row2)});
  run("batch_norm_train",
      [](const V& in) {
        nd::BatchNormState state(4);
        return sum(square(
            nd::batch_norm_1d(in[0], in[1], in[2], state, nd::Mode::train)));
      },
      {Tensor::from_matrix(a), Tensor::from_matrix(row),
       Tensor::from_matrix(row2)});
  run("batch_norm_eval",
      [](const V& in) {
        nd::BatchNormState state(4);
        state.running_mean << 0.2, -0.3, 0.4, 0.0;
        state.running_var << 1.0, 0.5, 2.0, 1.5;
        return sum(square(
            nd::batch_norm_1d(in[0], in[1], in[2], state, nd::Mode::eval)));
      },
      {Tensor::from_matrix(a), Tensor::from_matrix(row),
       Tensor::from_matrix(row2)});
  run("softmax_rows_masked",
      [](const V& in) {
        BoolMat masked = BoolMat::Constant(3, 4, false);
        masked(0, 2) = masked(1, 0) = true;
        return sum(square(softmax_rows(in[0], masked)));
      },
      {Tensor::from_matrix(a)});
  run("cross_entropy",
      [](const V& in) { return cross_entropy(in[0], {0, 3, 1}); },
      {Tensor::from_matrix(a)});
  Mat soft(3, 4);
  soft << 0.5, 0.5, 0, 0, 0, 0, 1, 0, 0.25, 0.25, 0.25, 0.25;
  run("cross_entropy_soft",
      [soft](const V& in) { return cross_entropy_soft(in[0], soft); },
      {Tensor::from_matrix(a)});

  // Full objective on the toy model: every parameter block is an input.
  ModelConfig cfg;
  cfg.video_dim = 6;
  cfg.text_dim = 5;
  cfg.hidden_dim = 10;
  cfg.embed_dim = 8;
  cfg.qk_dim = 4;
  cfg.num_classes = 4;
  CirModel model = init_parameters(cfg, derive_seed(seed, "gradcheck_model"));
  Batch batch;
  batch.labels = {0, 1, 2, 3, 0, 2};
  batch.scenario = {0, 1, 0, 1, 0, 1};
  batch.location = {0, 0, 1, 1, 0, 1};
  // Redraw until the forward sits away from relu kinks and zero-norm
  // embedding rows; a fully dead relu row makes g's output hit the cosine
  // epsilon guard, where central differences cannot follow the gradient.
  for (int attempt = 0; attempt < 64; ++attempt) {
    batch.video = Tensor::from_matrix(random_matrix(6, 6, rng));
    batch.text = Tensor::from_matrix(random_matrix(6, 5, rng));
    Tensor f_pre = nd::add_bias(nd::matmul(batch.video, model.f_fc1.weight),
                                model.f_fc1.bias);
    nd::BatchNormState probe = model.f_bn.state;
    Tensor f_bn = nd::batch_norm_1d(f_pre, model.f_bn.gamma, model.f_bn.beta,
                                    probe, nd::Mode::train);
    Tensor g_pre = nd::add_bias(nd::matmul(batch.text, model.g_fc1.weight),
                                model.g_fc1.bias);
    Tensor f_v = nd::add_bias(nd::matmul(nd::relu(f_bn), model.f_fc2.weight),
                              model.f_fc2.bias);
    Tensor g_t = encode_text(model, batch.text);
    Reconstruction learned =
        reconstruct(attention_scores_learned(model, f_v), f_v, {}, {}, {});
    double kink_margin = std::min(f_bn.value().cwiseAbs().minCoeff(),
                                  g_pre.value().cwiseAbs().minCoeff());
    double norm_margin =
        std::min({f_v.value().rowwise().norm().minCoeff(),
                  g_t.value().rowwise().norm().minCoeff(),
                  learned.recon.value().rowwise().norm().minCoeff()});
    if (kink_margin > 1e-3 && norm_margin > 1e-2) break;
  }
  std::vector<Tensor> params;
  for (auto& p : model.parameters()) params.push_back(p.tensor);
  run("cir_total_loss",
      [&model, &batch](const V&) {
        return cir_total_loss(model, batch, 1.0, 0.5).total;
      },
      params);
  return results;
}

}  // namespace cir
