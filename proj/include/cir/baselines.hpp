#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cir/reconstruction.hpp"

namespace cir {

// Plain cross-entropy on h(f(v)); identical to cir_total_loss with both
// reconstruction weights at zero.
Tensor erm_loss(CirModel& model, const Batch& batch, Mode mode = Mode::train);

struct MixedBatch {
  Tensor video;          // interpolated raw video features
  nd::Mat soft_targets;  // B x C, rows sum to 1
};

// Per-pair Beta(alpha, alpha) interpolation of raw features and one-hot
// labels; pairs come from a seeded permutation. forced_lambda pins the
// interpolation coefficient (test hook).
MixedBatch mixup_batch(const Batch& batch, int num_classes, double alpha,
                       std::uint64_t seed,
                       std::optional<double> forced_lambda = std::nullopt);

struct DomainPairLoss {
  Tensor value;    // scalar; zero tensor when no eligible pair exists
  int pairs = 0;   // number of domain pairs that contributed
};

// Mean over unordered domain pairs of squared mean distance plus
// Frobenius covariance distance scaled by 1/(4 E^2). Domains with fewer
// than two samples are skipped.
DomainPairLoss coral_loss(const Tensor& f_v, const std::vector<int>& domains);

// Squared MMD (all-pairs kernel-mean estimator) with a sum of Gaussian
// kernels at bandwidths {0.5, 1, 2} x median pairwise squared distance,
// averaged over unordered domain pairs. Exactly zero on identical sample
// sets and invariant to sample order within a domain. Same skip rule as
// coral_loss.
DomainPairLoss mmd_loss(const Tensor& f_v, const std::vector<int>& domains);

// Same estimator with explicit kernel bandwidths (absolute gamma values in
// exp(-d^2 / gamma)), bypassing the median heuristic.
DomainPairLoss mmd_loss(const Tensor& f_v, const std::vector<int>& domains,
                        const std::vector<double>& gammas);

}  // namespace cir
