#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "cir/errors.hpp"

namespace cir::nd {

// All dense storage is row-major double precision. 1-D tensors are kept as
// a single row; rank records whether a tensor is a vector or a matrix.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BoolMat =
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

// Shared handle to a dense value plus its gradient buffer. Copies alias the
// same storage, which is what lets backward rules accumulate into the
// tensors an expression was built from.
class Tensor {
 public:
  Tensor() : data_(std::make_shared<Storage>()) {}

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false);
  static Tensor from_matrix(Mat m, bool requires_grad = false);
  static Tensor row(const Eigen::RowVectorXd& v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  Mat& value() { return data_->value; }
  const Mat& value() const { return data_->value; }

  // Gradient buffer, allocated (zeroed) on first access.
  Mat& grad() const;
  bool has_grad() const { return data_->grad.size() > 0; }
  void zero_grad() const;

  bool requires_grad() const { return data_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    data_->requires_grad = v;
    return *this;
  }

  // True for tensors an op created while recording; their grads are
  // scratch space reset at the start of each backward replay, while leaf
  // gradients accumulate across replays.
  bool produced() const { return data_->produced; }
  Tensor& mark_produced() {
    data_->produced = true;
    return *this;
  }

  Index rows() const { return data_->value.rows(); }
  Index cols() const { return data_->value.cols(); }
  Index size() const { return data_->value.size(); }
  int rank() const { return data_->rank; }
  Tensor& set_rank(int r) {
    data_->rank = r;
    return *this;
  }
  std::vector<Index> shape() const;
  std::string shape_str() const;

  double item() const;

  bool same_storage(const Tensor& other) const { return data_ == other.data_; }
  const void* storage_id() const { return data_.get(); }

 private:
  struct Storage {
    Mat value;
    mutable Mat grad;  // empty until first use
    bool requires_grad = false;
    bool produced = false;
    int rank = 2;
  };
  std::shared_ptr<Storage> data_;
};

// Records primitive applications so gradients can be replayed in reverse.
// A tape is installed with Tape::Scope; ops record onto the active tape
// whenever an input requires gradients. Replaying backward twice without
// reset accumulates gradients additively; zero_grad() resets every buffer
// the tape touched so a fresh replay reproduces identical values.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  // Registers a backward rule together with every tensor whose gradient it
  // may touch. Ops call this; user code normally only calls backward().
  void record(std::initializer_list<Tensor> touched,
              std::function<void()> backward);

  // Seeds d(root)/d(root) = 1 (root must be scalar) and replays every
  // recorded rule in reverse order.
  void backward(const Tensor& root);

  // Zeroes the gradient buffer of every tensor this tape has touched.
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }

 private:
  void track(const Tensor& t);

  std::vector<std::function<void()>> nodes_;
  std::vector<Tensor> touched_;
  std::unordered_set<const void*> seen_;
};

// True when an op invoked now should record a node: a tape is active and at
// least one input requires gradients.
bool recording(const Tensor& a);
bool recording(const Tensor& a, const Tensor& b);
bool recording(const Tensor& a, const Tensor& b, const Tensor& c);

void check_finite(const Tensor& t, const char* what);

}  // namespace cir::nd
