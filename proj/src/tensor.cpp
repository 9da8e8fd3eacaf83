#include "cir/tensor.hpp"

#include <sstream>

namespace cir::nd {

Tensor Tensor::zeros(Index rows, Index cols, bool requires_grad) {
  Tensor t;
  t.data_->value = Mat::Zero(rows, cols);
  t.data_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from_matrix(Mat m, bool requires_grad) {
  Tensor t;
  t.data_->value = std::move(m);
  t.data_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::row(const Eigen::RowVectorXd& v, bool requires_grad) {
  Tensor t;
  t.data_->value = v;
  t.data_->requires_grad = requires_grad;
  t.data_->rank = 1;
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  Tensor t;
  t.data_->value = Mat::Constant(1, 1, v);
  t.data_->requires_grad = requires_grad;
  t.data_->rank = 1;
  return t;
}

Mat& Tensor::grad() const {
  if (data_->grad.size() == 0)
    data_->grad = Mat::Zero(data_->value.rows(), data_->value.cols());
  return data_->grad;
}

void Tensor::zero_grad() const {
  if (data_->grad.size() > 0) data_->grad.setZero();
}

std::vector<Index> Tensor::shape() const {
  if (data_->rank == 1) return {size()};
  return {rows(), cols()};
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  auto s = shape();
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

double Tensor::item() const {
  if (size() != 1)
    throw ShapeError("item() requires a scalar tensor, got " + shape_str());
  return data_->value(0, 0);
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

Tape::Scope::~Scope() { g_active_tape = previous_; }

void Tape::track(const Tensor& t) {
  if (seen_.insert(t.storage_id()).second) touched_.push_back(t);
}

void Tape::record(std::initializer_list<Tensor> touched,
                  std::function<void()> backward) {
  for (const Tensor& t : touched) track(t);
  nodes_.push_back(std::move(backward));
}

void Tape::backward(const Tensor& root) {
  if (root.size() != 1)
    throw ShapeError("backward() requires a scalar root, got " +
                     root.shape_str());
  // Grads of op-produced tensors are per-replay scratch; resetting them
  // here makes repeated backward calls accumulate leaf gradients
  // additively instead of compounding.
  for (const Tensor& t : touched_)
    if (t.produced()) t.zero_grad();
  root.grad()(0, 0) += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void Tape::zero_grad() {
  for (const Tensor& t : touched_) t.zero_grad();
}

bool recording(const Tensor& a) {
  return Tape::active() != nullptr && a.requires_grad();
}

bool recording(const Tensor& a, const Tensor& b) {
  return Tape::active() != nullptr && (a.requires_grad() || b.requires_grad());
}

bool recording(const Tensor& a, const Tensor& b, const Tensor& c) {
  return Tape::active() != nullptr &&
         (a.requires_grad() || b.requires_grad() || c.requires_grad());
}

void check_finite(const Tensor& t, const char* what) {
  if (!t.value().allFinite())
    throw NumericError(std::string("non-finite values in ") + what);
}

}  // namespace cir::nd
