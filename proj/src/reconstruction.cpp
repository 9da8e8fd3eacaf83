#include "cir/reconstruction.hpp"

#include <cmath>
#include <numeric>

namespace cir {

void MaskPolicy::validate() const {
  if (!allow_same_scenario && !allow_same_location && !allow_other_scenario &&
      !allow_other_location)
    throw ValueError("MaskPolicy: at least one support group must be allowed");
}

std::string MaskPolicy::describe() const {
  std::string s;
  auto flag = [&s](const char* name, bool allowed) {
    if (!s.empty()) s += ",";
    s += name;
    s += allowed ? "=allow" : "=mask";
  };
  flag("same_scenario", allow_same_scenario);
  flag("same_location", allow_same_location);
  flag("other_scenario", allow_other_scenario);
  flag("other_location", allow_other_location);
  return s;
}

Tensor attention_scores_learned(const CirModel& model, const Tensor& f_v) {
  if (f_v.rows() < 2)
    throw DegenerateError("attention_scores_learned: batch size >= 2 required");
  Tensor q = query_embed(model, f_v);
  Tensor k = key_embed(model, f_v);
  return nd::matmul(q, nd::transpose(k));
}

Tensor attention_scores_crossprod(const Tensor& f_v) {
  if (f_v.rows() < 2)
    throw DegenerateError(
        "attention_scores_crossprod: batch size >= 2 required");
  return nd::matmul(f_v, nd::transpose(f_v));
}

namespace {

nd::BoolMat build_mask(nd::Index batch, const MaskPolicy& policy,
                       const std::vector<int>& scenario,
                       const std::vector<int>& location) {
  policy.validate();
  nd::BoolMat masked = nd::BoolMat::Constant(batch, batch, false);
  const bool needs_domains = !policy.permissive();
  if (needs_domains && (static_cast<nd::Index>(scenario.size()) != batch ||
                        static_cast<nd::Index>(location.size()) != batch))
    throw ValueError(
        "reconstruct: restrictive mask policy requires per-sample scenario "
        "and location labels");
  for (nd::Index i = 0; i < batch; ++i) {
    for (nd::Index j = 0; j < batch; ++j) {
      if (i == j) {
        masked(i, j) = true;  // self is always excluded
        continue;
      }
      if (!needs_domains) continue;
      auto si = scenario[static_cast<std::size_t>(i)];
      auto sj = scenario[static_cast<std::size_t>(j)];
      auto li = location[static_cast<std::size_t>(i)];
      auto lj = location[static_cast<std::size_t>(j)];
      bool drop = (!policy.allow_same_scenario && si == sj) ||
                  (!policy.allow_other_scenario && si != sj) ||
                  (!policy.allow_same_location && li == lj) ||
                  (!policy.allow_other_location && li != lj);
      masked(i, j) = drop;
    }
  }
  return masked;
}

}  // namespace

Reconstruction reconstruct(const Tensor& scores, const Tensor& f_v,
                           const MaskPolicy& policy,
                           const std::vector<int>& scenario,
                           const std::vector<int>& location) {
  const nd::Index batch = scores.rows();
  if (scores.cols() != batch || f_v.rows() != batch)
    throw ShapeError("reconstruct: scores " + scores.shape_str() +
                     " and embeddings " + f_v.shape_str() + " disagree");
  nd::BoolMat masked = build_mask(batch, policy, scenario, location);
  for (nd::Index i = 0; i < batch; ++i) {
    if ((masked.row(i) == false).count() == 0)
      throw DegenerateError("reconstruct: sample " + std::to_string(i) +
                            " has an empty support set under policy " +
                            policy.describe());
  }
  Reconstruction r;
  r.weights = nd::softmax_rows(scores, masked);
  r.recon = nd::matmul(r.weights, f_v);
  return r;
}

NceResult nce_loss(const Tensor& recon, const Tensor& g_t,
                   const Tensor& inv_tau) {
  if (recon.rows() != g_t.rows())
    throw ShapeError("nce_loss: batch sizes differ, " + recon.shape_str() +
                     " vs " + g_t.shape_str());
  if (!(inv_tau.item() > 0.0))
    throw ValueError("nce_loss: temperature must be positive");
  NceResult out;
  out.similarity = nd::cosine_similarity_matrix(recon, g_t);
  std::vector<int> diag(static_cast<std::size_t>(recon.rows()));
  std::iota(diag.begin(), diag.end(), 0);
  // Reconstruction anchors over rows, text anchors over columns.
  Tensor r_to_t = nd::cross_entropy(nd::scale_by(out.similarity, inv_tau), diag);
  Tensor t_to_r = nd::cross_entropy(
      nd::scale_by(nd::transpose(out.similarity), inv_tau), diag);
  out.loss = nd::add(r_to_t, t_to_r);
  return out;
}

NceResult nce_loss(const Tensor& recon, const Tensor& g_t, double tau) {
  if (!(tau > 0.0)) throw ValueError("nce_loss: temperature must be positive");
  return nce_loss(recon, g_t, Tensor::scalar(1.0 / tau));
}

CirLossResult cir_total_loss(CirModel& model, const Batch& batch,
                             double lambda1, double lambda2,
                             const MaskPolicy& policy, Mode mode) {
  if (lambda1 < 0.0 || lambda2 < 0.0)
    throw ValueError("cir_total_loss: loss weights must be >= 0");
  CirLossResult out;
  out.recon.f_v = encode_video(model, batch.video, mode);
  Tensor l_c = nd::cross_entropy(classify(model, out.recon.f_v), batch.labels);
  Tensor total = l_c;

  if (lambda1 > 0.0) {
    out.recon.g_t = encode_text(model, batch.text);
    Tensor scores = attention_scores_learned(model, out.recon.f_v);
    Reconstruction rec = reconstruct(scores, out.recon.f_v, policy,
                                     batch.scenario, batch.location);
    out.recon.recon_text = rec.recon;
    out.recon.weights_text = rec.weights;
    Tensor inv_tau = nd::exp_elem(model.log_tau_inv);
    NceResult nce = nce_loss(rec.recon, out.recon.g_t, inv_tau);
    out.parts.l_rt = nce.loss.item();
    total = nd::add(total, nd::scale(nce.loss, lambda1));
  }

  if (lambda2 > 0.0) {
    Tensor scores = attention_scores_crossprod(out.recon.f_v);
    Reconstruction rec = reconstruct(scores, out.recon.f_v, policy,
                                     batch.scenario, batch.location);
    out.recon.recon_cls = rec.recon;
    out.recon.weights_cls = rec.weights;
    Tensor l_rc = nd::cross_entropy(classify(model, rec.recon), batch.labels);
    out.parts.l_rc = l_rc.item();
    total = nd::add(total, nd::scale(l_rc, lambda2));
  }

  out.total = total;
  out.parts.l_c = l_c.item();
  out.parts.total = total.item();
  out.parts.tau = model.tau();
  return out;
}

}  // namespace cir
