#include "cir/optim.hpp"

#include <cmath>

namespace cir {

Adam::Adam(std::vector<ParamRef> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const ParamRef& p : params_) {
    m_.push_back(nd::Mat::Zero(p.tensor.rows(), p.tensor.cols()));
    v_.push_back(nd::Mat::Zero(p.tensor.rows(), p.tensor.cols()));
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const nd::Mat& g = params_[k].tensor.grad();
    if (!g.allFinite())
      throw NumericError("adam: non-finite gradient in " + params_[k].name);
    m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * g;
    v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    params_[k].tensor.value().array() -=
        lr * (m_[k].array() / bc1) /
        ((v_[k].array() / bc2).sqrt() + config_.eps);
  }
}

void Adam::restore(std::vector<nd::Mat> m, std::vector<nd::Mat> v,
                   std::int64_t step_count) {
  if (m.size() != params_.size() || v.size() != params_.size())
    throw ValueError("adam: moment buffer count mismatch on restore");
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (m[k].rows() != params_[k].tensor.rows() ||
        m[k].cols() != params_[k].tensor.cols() ||
        v[k].rows() != params_[k].tensor.rows() ||
        v[k].cols() != params_[k].tensor.cols())
      throw ValueError("adam: moment shape mismatch for " + params_[k].name);
  }
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = step_count;
}

}  // namespace cir
