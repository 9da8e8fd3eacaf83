#include "cir/ops.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace cir::nd {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
}

Tensor make_output(Mat m, bool track, int rank = 2) {
  Tensor out = Tensor::from_matrix(std::move(m), track);
  out.set_rank(rank);
  if (track) out.mark_produced();
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  bool track = recording(a, b);
  Tensor out = make_output(a.value() + b.value(), track, a.rank());
  if (track) {
    Tape::active()->record({a, b, out}, [a, b, out] {
      if (a.requires_grad()) a.grad() += out.grad();
      if (b.requires_grad()) b.grad() += out.grad();
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  bool track = recording(a, b);
  Tensor out = make_output(a.value() - b.value(), track, a.rank());
  if (track) {
    Tape::active()->record({a, b, out}, [a, b, out] {
      if (a.requires_grad()) a.grad() += out.grad();
      if (b.requires_grad()) b.grad() -= out.grad();
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  bool track = recording(a, b);
  Tensor out =
      make_output(a.value().cwiseProduct(b.value()), track, a.rank());
  if (track) {
    Tape::active()->record({a, b, out}, [a, b, out] {
      if (a.requires_grad()) a.grad() += out.grad().cwiseProduct(b.value());
      if (b.requires_grad()) b.grad() += out.grad().cwiseProduct(a.value());
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double c) {
  bool track = recording(x);
  Tensor out = make_output(x.value() * c, track, x.rank());
  if (track) {
    Tape::active()->record({x, out}, [x, out, c] {
      if (x.requires_grad()) x.grad() += out.grad() * c;
    });
  }
  return out;
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.size() != 1)
    throw ShapeError("scale_by: scalar expected, got " + s.shape_str());
  bool track = recording(x, s);
  Tensor out = make_output(x.value() * s.item(), track, x.rank());
  if (track) {
    Tape::active()->record({x, s, out}, [x, s, out] {
      if (x.requires_grad()) x.grad() += out.grad() * s.item();
      if (s.requires_grad())
        s.grad()(0, 0) += out.grad().cwiseProduct(x.value()).sum();
    });
  }
  return out;
}

Tensor exp_elem(const Tensor& x) {
  bool track = recording(x);
  Tensor out = make_output(x.value().array().exp().matrix(), track, x.rank());
  if (track) {
    Tape::active()->record({x, out}, [x, out] {
      if (x.requires_grad())
        x.grad() += out.grad().cwiseProduct(out.value());
    });
  }
  return out;
}

Tensor square(const Tensor& x) {
  bool track = recording(x);
  Tensor out =
      make_output(x.value().cwiseProduct(x.value()), track, x.rank());
  if (track) {
    Tape::active()->record({x, out}, [x, out] {
      if (x.requires_grad())
        x.grad() += 2.0 * out.grad().cwiseProduct(x.value());
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  bool track = recording(x);
  Tensor out = make_output(x.value().cwiseMax(0.0), track, x.rank());
  if (track) {
    Tape::active()->record({x, out}, [x, out] {
      if (!x.requires_grad()) return;
      x.grad() += out.grad().cwiseProduct(
          (x.value().array() > 0.0).cast<double>().matrix());
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  bool track = recording(x);
  Tensor out = make_output(Mat::Constant(1, 1, x.value().sum()), track, 1);
  if (track) {
    Tape::active()->record({x, out}, [x, out] {
      if (x.requires_grad())
        x.grad().array() += out.grad()(0, 0);
    });
  }
  return out;
}

Tensor mean_rows(const Tensor& x) {
  bool track = recording(x);
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  Tensor out = make_output(x.value().colwise().mean(), track, 1);
  if (track) {
    Tape::active()->record({x, out}, [x, out, inv_n] {
      if (!x.requires_grad()) return;
      x.grad() += (Eigen::VectorXd::Ones(x.rows()) * (out.grad() * inv_n));
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  bool track = recording(x);
  Tensor out = make_output(x.value().transpose(), track, 2);
  if (track) {
    Tape::active()->record({x, out}, [x, out] {
      if (x.requires_grad()) x.grad() += out.grad().transpose();
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& rows) {
  Mat picked(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= x.rows())
      throw ShapeError("gather_rows: row " + std::to_string(rows[r]) +
                       " out of range for " + x.shape_str());
    picked.row(static_cast<Index>(r)) = x.value().row(rows[r]);
  }
  bool track = recording(x);
  Tensor out = make_output(std::move(picked), track);
  if (track) {
    Tape::active()->record({x, out}, [x, out, rows] {
      if (!x.requires_grad()) return;
      for (std::size_t r = 0; r < rows.size(); ++r)
        x.grad().row(rows[r]) += out.grad().row(static_cast<Index>(r));
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions differ, " + a.shape_str() +
                     " x " + b.shape_str());
  bool track = recording(a, b);
  Tensor out = make_output(a.value() * b.value(), track);
  if (track) {
    Tape::active()->record({a, b, out}, [a, b, out] {
      if (a.requires_grad()) a.grad() += out.grad() * b.value().transpose();
      if (b.requires_grad()) b.grad() += a.value().transpose() * out.grad();
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (b.rows() != 1 || b.cols() != x.cols())
    throw ShapeError("add_bias: bias " + b.shape_str() +
                     " does not match input " + x.shape_str());
  bool track = recording(x, b);
  Mat y = x.value();
  y.rowwise() += b.value().row(0);
  Tensor out = make_output(std::move(y), track, x.rank());
  if (track) {
    Tape::active()->record({x, b, out}, [x, b, out] {
      if (x.requires_grad()) x.grad() += out.grad();
      if (b.requires_grad()) b.grad() += out.grad().colwise().sum();
    });
  }
  return out;
}

Tensor pairwise_sqdist(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols())
    throw ShapeError("pairwise_sqdist: feature widths differ, " +
                     a.shape_str() + " vs " + b.shape_str());
  Eigen::VectorXd a_sq = a.value().rowwise().squaredNorm();
  Eigen::VectorXd b_sq = b.value().rowwise().squaredNorm();
  Mat d = (-2.0 * a.value() * b.value().transpose());
  d.colwise() += a_sq;
  d.rowwise() += b_sq.transpose();
  bool track = recording(a, b);
  Tensor out = make_output(std::move(d), track);
  if (track) {
    Tape::active()->record({a, b, out}, [a, b, out] {
      const Mat& g = out.grad();
      if (a.requires_grad()) {
        Eigen::VectorXd row_mass = g.rowwise().sum();
        a.grad() += 2.0 * (row_mass.asDiagonal() * a.value() - g * b.value());
      }
      if (b.requires_grad()) {
        Eigen::VectorXd col_mass = g.colwise().sum();
        b.grad() += 2.0 * (col_mass.asDiagonal() * b.value() -
                           g.transpose() * a.value());
      }
    });
  }
  return out;
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  Eigen::VectorXd norms = x.value().rowwise().norm();
  Eigen::VectorXd clamped = norms.cwiseMax(eps);
  Mat y = clamped.cwiseInverse().asDiagonal() * x.value();
  bool track = recording(x);
  Tensor out = make_output(std::move(y), track, x.rank());
  if (track) {
    Tape::active()->record({x, out}, [x, out, clamped, norms, eps] {
      if (!x.requires_grad()) return;
      const Mat& g = out.grad();
      const Mat& y = out.value();
      for (Index i = 0; i < x.rows(); ++i) {
        double inv_r = 1.0 / clamped(i);
        if (norms(i) > eps) {
          double proj = y.row(i).dot(g.row(i));
          x.grad().row(i) += inv_r * (g.row(i) - proj * y.row(i));
        } else {
          // norm clamped: treated as a constant scale
          x.grad().row(i) += inv_r * g.row(i);
        }
      }
    });
  }
  return out;
}

Tensor cosine_similarity_matrix(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols())
    throw ShapeError("cosine_similarity_matrix: feature widths differ, " +
                     a.shape_str() + " vs " + b.shape_str());
  return matmul(l2_normalize_rows(a), transpose(l2_normalize_rows(b)));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  if (gamma.cols() != x.cols() || beta.cols() != x.cols())
    throw ShapeError("layer_norm: scale/shift width does not match " +
                     x.shape_str());
  const Index n = x.cols();
  Eigen::VectorXd mean = x.value().rowwise().mean();
  Mat centered = x.value().colwise() - mean;
  Eigen::VectorXd var =
      centered.rowwise().squaredNorm() / static_cast<double>(n);
  Eigen::VectorXd istd = (var.array() + eps).rsqrt();
  Mat xhat = istd.asDiagonal() * centered;
  Eigen::RowVectorXd gamma_row = gamma.value().row(0);
  Mat y = xhat * gamma_row.asDiagonal();
  y.rowwise() += beta.value().row(0);
  bool track = recording(x, gamma, beta);
  Tensor out = make_output(std::move(y), track, x.rank());
  if (track) {
    Tape::active()->record({x, gamma, beta, out},
                           [x, gamma, beta, out, xhat, istd, n] {
      const Mat& g = out.grad();
      if (gamma.requires_grad())
        gamma.grad() += g.cwiseProduct(xhat).colwise().sum();
      if (beta.requires_grad()) beta.grad() += g.colwise().sum();
      if (!x.requires_grad()) return;
      Eigen::RowVectorXd gamma_row = gamma.value().row(0);
      Mat dxhat = g * gamma_row.asDiagonal();
      Eigen::VectorXd m1 = dxhat.rowwise().mean();
      Eigen::VectorXd m2 =
          dxhat.cwiseProduct(xhat).rowwise().sum() / static_cast<double>(n);
      Mat dx = dxhat;
      dx.colwise() -= m1;
      dx -= m2.asDiagonal() * xhat;
      x.grad() += istd.asDiagonal() * dx;
    });
  }
  return out;
}

Tensor batch_norm_1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     BatchNormState& state, Mode mode) {
  if (gamma.cols() != x.cols() || beta.cols() != x.cols() ||
      state.running_mean.size() != x.cols())
    throw ShapeError("batch_norm_1d: parameter width does not match " +
                     x.shape_str());
  const Index batch = x.rows();
  const double eps = state.eps;

  Eigen::RowVectorXd mean, istd;
  if (mode == Mode::train) {
    if (batch < 2)
      throw DegenerateError(
          "batch_norm_1d: train mode needs batch size >= 2, got " +
          std::to_string(batch));
    mean = x.value().colwise().mean();
    Mat centered = x.value().rowwise() - mean;
    Eigen::RowVectorXd var =
        centered.colwise().squaredNorm() / static_cast<double>(batch);
    istd = (var.array() + eps).rsqrt();
    // Running stats keep the unbiased variance estimate.
    double unbias = static_cast<double>(batch) / static_cast<double>(batch - 1);
    state.running_mean =
        (1.0 - state.momentum) * state.running_mean + state.momentum * mean;
    state.running_var = (1.0 - state.momentum) * state.running_var +
                        state.momentum * (var * unbias);
  } else {
    mean = state.running_mean;
    istd = (state.running_var.array() + eps).rsqrt();
  }

  Mat centered = x.value().rowwise() - mean;
  Mat xhat = centered * istd.asDiagonal();
  Eigen::RowVectorXd gamma_row = gamma.value().row(0);
  Mat y = xhat * gamma_row.asDiagonal();
  y.rowwise() += beta.value().row(0);
  bool track = recording(x, gamma, beta);
  Tensor out = make_output(std::move(y), track, x.rank());
  if (track) {
    Tape::active()->record(
        {x, gamma, beta, out}, [x, gamma, beta, out, xhat, istd, mode, batch] {
          const Mat& g = out.grad();
          if (gamma.requires_grad())
            gamma.grad() += g.cwiseProduct(xhat).colwise().sum();
          if (beta.requires_grad()) beta.grad() += g.colwise().sum();
          if (!x.requires_grad()) return;
          Eigen::RowVectorXd gamma_row = gamma.value().row(0);
          Mat dxhat = g * gamma_row.asDiagonal();
          if (mode == Mode::eval) {
            x.grad() += dxhat * istd.asDiagonal();
            return;
          }
          const double inv_b = 1.0 / static_cast<double>(batch);
          Eigen::RowVectorXd m1 = dxhat.colwise().mean();
          Eigen::RowVectorXd m2 =
              dxhat.cwiseProduct(xhat).colwise().sum() * inv_b;
          Mat dx = dxhat;
          dx.rowwise() -= m1;
          dx -= xhat * m2.asDiagonal();
          x.grad() += dx * istd.asDiagonal();
        });
  }
  return out;
}

Tensor softmax_rows(const Tensor& x, const std::optional<BoolMat>& masked_out) {
  check_finite(x, "softmax_rows input");
  if (masked_out &&
      (masked_out->rows() != x.rows() || masked_out->cols() != x.cols()))
    throw ShapeError("softmax_rows: mask shape does not match " +
                     x.shape_str());
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  Mat z = x.value();
  if (masked_out) {
    for (Index i = 0; i < z.rows(); ++i)
      for (Index j = 0; j < z.cols(); ++j)
        if ((*masked_out)(i, j)) z(i, j) = kNegInf;
  }
  Mat p(z.rows(), z.cols());
  for (Index i = 0; i < z.rows(); ++i) {
    double row_max = z.row(i).maxCoeff();
    if (row_max == kNegInf)
      throw DegenerateError("softmax_rows: row " + std::to_string(i) +
                            " is fully masked");
    // scalar std::exp: IEEE exp(-inf) is exactly 0, Eigen's packet exp
    // clamps and would leak denormals into masked slots
    double denom = 0.0;
    for (Index j = 0; j < z.cols(); ++j) {
      p(i, j) = std::exp(z(i, j) - row_max);
      denom += p(i, j);
    }
    p.row(i) /= denom;
  }
  bool track = recording(x);
  Tensor out = make_output(std::move(p), track, x.rank());
  if (track) {
    Tape::active()->record({x, out}, [x, out] {
      if (!x.requires_grad()) return;
      const Mat& g = out.grad();
      const Mat& p = out.value();
      for (Index i = 0; i < p.rows(); ++i) {
        double dot = g.row(i).dot(p.row(i));
        x.grad().row(i) +=
            (p.row(i).array() * (g.row(i).array() - dot)).matrix();
      }
    });
  }
  return out;
}

namespace {

// Row-stabilized softmax plus per-row log normalizer, shared by both
// cross-entropy forms.
void softmax_with_logz(const Mat& logits, Mat& p, Eigen::VectorXd& logz) {
  p.resize(logits.rows(), logits.cols());
  logz.resize(logits.rows());
  for (Index i = 0; i < logits.rows(); ++i) {
    double row_max = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - row_max).exp();
    double s = e.sum();
    p.row(i) = e / s;
    logz(i) = row_max + std::log(s);
  }
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  check_finite(logits, "cross_entropy logits");
  if (static_cast<Index>(labels.size()) != logits.rows())
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + logits.shape_str());
  const Index batch = logits.rows();
  const Index classes = logits.cols();
  for (int y : labels)
    if (y < 0 || y >= classes)
      throw ValueError("cross_entropy: label " + std::to_string(y) +
                       " outside [0, " + std::to_string(classes) + ")");
  Mat p;
  Eigen::VectorXd logz;
  softmax_with_logz(logits.value(), p, logz);
  double loss = 0.0;
  for (Index i = 0; i < batch; ++i)
    loss += logz(i) - logits.value()(i, labels[static_cast<std::size_t>(i)]);
  loss /= static_cast<double>(batch);
  bool track = recording(logits);
  Tensor out = make_output(Mat::Constant(1, 1, loss), track, 1);
  if (track) {
    Tape::active()->record({logits, out}, [logits, out, p, labels, batch] {
      if (!logits.requires_grad()) return;
      double g = out.grad()(0, 0) / static_cast<double>(batch);
      Mat d = p;
      for (Index i = 0; i < batch; ++i)
        d(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
      logits.grad() += g * d;
    });
  }
  return out;
}

Tensor cross_entropy_soft(const Tensor& logits, const Mat& targets) {
  check_finite(logits, "cross_entropy logits");
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols())
    throw ShapeError("cross_entropy_soft: target shape mismatch with logits " +
                     logits.shape_str());
  const Index batch = logits.rows();
  Mat p;
  Eigen::VectorXd logz;
  softmax_with_logz(logits.value(), p, logz);
  Mat log_p = logits.value().colwise() - logz;
  double loss = -targets.cwiseProduct(log_p).sum() / static_cast<double>(batch);
  bool track = recording(logits);
  Tensor out = make_output(Mat::Constant(1, 1, loss), track, 1);
  if (track) {
    Tape::active()->record({logits, out}, [logits, out, p, targets, batch] {
      if (!logits.requires_grad()) return;
      double g = out.grad()(0, 0) / static_cast<double>(batch);
      Eigen::VectorXd target_mass = targets.rowwise().sum();
      logits.grad() += g * (target_mass.asDiagonal() * p - targets);
    });
  }
  return out;
}

}  // namespace cir::nd
