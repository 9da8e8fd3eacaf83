#pragma once

#include <optional>
#include <vector>

#include "cir/tensor.hpp"

namespace cir::nd {

enum class Mode { train, eval };

// ---- elementwise and reduction primitives -------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
// y = x * s where s is a scalar tensor; gradients flow into both.
Tensor scale_by(const Tensor& x, const Tensor& s);
Tensor exp_elem(const Tensor& x);
Tensor square(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sum(const Tensor& x);        // -> 1x1
Tensor mean_rows(const Tensor& x);  // BxC -> 1xC

// ---- structural primitives ----------------------------------------------

Tensor transpose(const Tensor& x);
Tensor gather_rows(const Tensor& x, const std::vector<int>& rows);

// ---- linear-algebra primitives ------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// y[i] = x[i] + b for a rank-1 bias row b.
Tensor add_bias(const Tensor& x, const Tensor& b);
// D[i][j] = squared Euclidean distance between row i of a and row j of b.
Tensor pairwise_sqdist(const Tensor& a, const Tensor& b);
// Rows scaled to unit L2 norm; rows with norm below eps are scaled by
// 1/eps (zero rows stay zero).
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);
Tensor cosine_similarity_matrix(const Tensor& a, const Tensor& b);

// ---- normalization layers ------------------------------------------------

// Per-row normalization with learned scale/shift (biased variance).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// Running statistics for batch_norm_1d; updated in train mode only.
struct BatchNormState {
  Eigen::RowVectorXd running_mean;
  Eigen::RowVectorXd running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(Index features = 0, double momentum = 0.1,
                          double eps = 1e-5)
      : running_mean(Eigen::RowVectorXd::Zero(features)),
        running_var(Eigen::RowVectorXd::Ones(features)),
        momentum(momentum),
        eps(eps) {}
};

// Per-feature normalization over the batch. Train mode requires batch size
// >= 2 and updates the running statistics (unbiased variance, as usual);
// eval mode normalizes with the stored statistics.
Tensor batch_norm_1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     BatchNormState& state, Mode mode);

// ---- softmax / loss primitives -------------------------------------------

// Row-stabilized softmax. Entries where masked_out is true contribute
// nothing and come out exactly zero; each row needs at least one live
// entry. Masking is applied as an additive -inf before the row-max shift,
// so masked gradients are exactly zero.
Tensor softmax_rows(const Tensor& x,
                    const std::optional<BoolMat>& masked_out = std::nullopt);

// Mean over the batch of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);
// Soft-target form: mean over the batch of -sum target * log softmax.
Tensor cross_entropy_soft(const Tensor& logits, const Mat& targets);

}  // namespace cir::nd
