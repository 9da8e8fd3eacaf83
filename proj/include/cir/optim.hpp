#pragma once

#include <cstdint>
#include <vector>

#include "cir/model.hpp"

namespace cir {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Gradients are read from
// each parameter's grad buffer; callers zero them between steps.
class Adam {
 public:
  explicit Adam(std::vector<ParamRef> params, AdamConfig config = {});

  // One update with the given learning rate. Throws NumericError naming
  // the parameter block on a non-finite gradient.
  void step(double lr);

  std::int64_t step_count() const { return t_; }
  const std::vector<nd::Mat>& first_moments() const { return m_; }
  const std::vector<nd::Mat>& second_moments() const { return v_; }
  const AdamConfig& config() const { return config_; }

  void restore(std::vector<nd::Mat> m, std::vector<nd::Mat> v,
               std::int64_t step_count);

 private:
  std::vector<ParamRef> params_;
  std::vector<nd::Mat> m_, v_;
  AdamConfig config_;
  std::int64_t t_ = 0;
};

}  // namespace cir
