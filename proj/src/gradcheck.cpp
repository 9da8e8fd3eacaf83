#include "cir/gradcheck.hpp"

#include <cmath>
#include <sstream>

namespace cir::nd {

GradCheckReport gradcheck(
    const std::function<Tensor(const std::vector<Tensor>&)>& fn,
    std::vector<Tensor> inputs, double step) {
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();  // stale leaf gradients would pollute the analytic pass
    if (!t.value().allFinite())
      throw NumericError("gradcheck: non-finite input");
  }

  std::vector<Mat> analytic;
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = fn(inputs);
    if (loss.size() != 1)
      throw ShapeError("gradcheck: fn must be scalar-valued, got " +
                       loss.shape_str());
    if (!std::isfinite(loss.item()))
      throw NumericError("gradcheck: non-finite loss value");
    tape.backward(loss);
    for (const Tensor& t : inputs) analytic.push_back(t.grad());
  }

  GradCheckReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Mat& v = inputs[k].value();
    for (Index i = 0; i < v.rows(); ++i) {
      for (Index j = 0; j < v.cols(); ++j) {
        const double saved = v(i, j);
        v(i, j) = saved + step;
        double up = fn(inputs).item();
        v(i, j) = saved - step;
        double down = fn(inputs).item();
        v(i, j) = saved;
        if (!std::isfinite(up) || !std::isfinite(down))
          throw NumericError("gradcheck: non-finite intermediate value");
        double numeric = (up - down) / (2.0 * step);
        double a = analytic[k](i, j);
        double rel = std::abs(a - numeric) /
                     std::max({std::abs(a), std::abs(numeric), 1e-3});
        if (rel > report.max_rel_error) {
          report.max_rel_error = rel;
          std::ostringstream os;
          os << "input " << k << " (" << i << "," << j << "): analytic " << a
             << " vs numeric " << numeric;
          report.worst = os.str();
        }
      }
    }
  }
  return report;
}

}  // namespace cir::nd
