#pragma once

#include <string>
#include <vector>

#include "cir/model.hpp"

namespace cir {

// Which support samples a query may attend to, by domain relation. The
// sample itself is always excluded regardless of policy; domain labels are
// only consulted when a restrictive flag is set.
struct MaskPolicy {
  bool allow_same_scenario = true;
  bool allow_same_location = true;
  bool allow_other_scenario = true;
  bool allow_other_location = true;

  bool permissive() const {
    return allow_same_scenario && allow_same_location &&
           allow_other_scenario && allow_other_location;
  }
  void validate() const;
  std::string describe() const;
};

// One training batch: raw features plus labels and (optional) domain ids.
struct Batch {
  Tensor video;  // B x D_v
  Tensor text;   // B x D_t
  std::vector<int> labels;
  std::vector<int> scenario;
  std::vector<int> location;

  nd::Index size() const { return video.rows(); }
};

// c_ij = L(Q(f(v_i))) . L(K(f(v_j))); raw scores, not yet masked.
Tensor attention_scores_learned(const CirModel& model, const Tensor& f_v);
// c'_ij = f(v_i) . f(v_j); the Gram matrix, no learned projections.
Tensor attention_scores_crossprod(const Tensor& f_v);

struct Reconstruction {
  Tensor recon;    // B x E, rows in the convex hull of the support rows
  Tensor weights;  // B x B, row-stochastic, exact-zero diagonal
};

// Self-masked (and policy-masked) row softmax over scores, then
// weights . f_v. Gradients flow through both the weights and the values.
Reconstruction reconstruct(const Tensor& scores, const Tensor& f_v,
                           const MaskPolicy& policy,
                           const std::vector<int>& scenario,
                           const std::vector<int>& location);

struct NceResult {
  Tensor loss;        // scalar
  Tensor similarity;  // B x B cosine similarities
};

// InfoNCE over reconstruction-text pairs, both directions summed; the
// normalizer runs over all pairs including the positive. inv_tau is the
// 1/tau tensor so the temperature stays learnable.
NceResult nce_loss(const Tensor& recon, const Tensor& g_t,
                   const Tensor& inv_tau);
NceResult nce_loss(const Tensor& recon, const Tensor& g_t, double tau);

struct LossParts {
  double total = 0.0;
  double l_c = 0.0;
  double l_rt = 0.0;
  double l_rc = 0.0;
  double tau = 0.0;
};

// All per-batch products of the forward pass, exposed for analysis.
struct ReconstructionBatch {
  Tensor f_v;
  Tensor g_t;
  Tensor recon_text;    // from learned attention
  Tensor recon_cls;     // from cross-product attention
  Tensor weights_text;  // B x B
  Tensor weights_cls;   // B x B
};

struct CirLossResult {
  Tensor total;
  LossParts parts;
  ReconstructionBatch recon;
};

// L = L_c + lambda1 * L_rt + lambda2 * L_rc. A zero lambda skips the
// corresponding branch entirely, so lambda1 = lambda2 = 0 reduces to the
// plain cross-entropy objective bit for bit.
CirLossResult cir_total_loss(CirModel& model, const Batch& batch,
                             double lambda1, double lambda2,
                             const MaskPolicy& policy = {},
                             Mode mode = Mode::train);

}  // namespace cir
