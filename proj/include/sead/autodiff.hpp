// Copyright 2026 The sead Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SEAD_AUTODIFF_HPP_
#define SEAD_AUTODIFF_HPP_

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sead::ad {

using Matrix = Eigen::MatrixXd;

// A named dense tensor with a gradient accumulator of the same shape.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Matrix value, bool trainable = true);

  const std::string& name() const { return name_; }
  const Matrix& value() const { return value_; }
  Matrix& value() { return value_; }
  const Matrix& grad() const { return grad_; }
  bool trainable() const { return trainable_; }
  void set_trainable(bool t) { trainable_ = t; }
  // True once a backward pass has written into the accumulator since the
  // last ZeroGrad().
  bool has_grad() const { return has_grad_; }
  Eigen::Index size() const { return value_.size(); }

  // The accumulator is mutable so that read-only model code can be recorded
  // on a training tape; values are only changed through value().
  void AccumulateGrad(const Matrix& g) const;
  void ZeroGrad();

 private:
  std::string name_;
  Matrix value_;
  mutable Matrix grad_;
  bool trainable_ = true;
  mutable bool has_grad_ = false;
};

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// tape is alive.
class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Records primitive operations in execution order and replays them in
// reverse for gradients. In inference mode nothing is retained beyond the
// values, so the same model code serves training and evaluation.
class Tape {
 public:
  enum class Mode { kTrain, kInference };
  using BackwardFn = std::function<void(const Matrix& grad_out)>;

  explicit Tape(Mode mode = Mode::kTrain) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var Constant(Matrix value);
  Var Param(const Parameter& p);

  // Adds an operation node. `parents` decide whether the node needs a
  // gradient; `backward` receives dL/d(output) and must call
  // AccumulateGrad() on the parents. Checks the forward value for NaN/Inf.
  Var Record(const char* op, Matrix value, std::initializer_list<Var> parents,
             BackwardFn backward);
  Var Record(const char* op, Matrix value, const std::vector<Var>& parents,
             BackwardFn backward);

  bool NeedsGrad(Var v) const;
  void AccumulateGrad(Var v, const Matrix& g);
  // Adds g into columns [start, start + g.cols()) of v's gradient.
  void AccumulateGradCols(Var v, Eigen::Index start, const Matrix& g);

  // Reverse sweep from a 1x1 loss. Allowed once per tape.
  void Backward(Var loss);

  Mode mode() const { return mode_; }
  size_t size() const { return nodes_.size(); }
  const Matrix& ValueOf(int id) const { return nodes_[id].value; }

 private:
  struct Node {
    const char* op = "";
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    bool grad_set = false;
    const Parameter* param = nullptr;
    BackwardFn backward;
  };

  Var Push(Node node);

  Mode mode_;
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

// Primitives. Shapes follow Eigen conventions; operands must match exactly
// except AddColumn, which broadcasts a column vector across columns.
Var MatMul(Var a, Var b);
Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var AddColumn(Var a, Var column);
Var Scale(Var a, double s);
Var AddScalar(Var a, double s);
Var Sigmoid(Var a);
Var Tanh(Var a);
// Elementwise a^c. Fractional exponents require a >= 0; the derivative at an
// exact zero is taken as 0.
Var Power(Var a, double c);
Var Log10(Var a);
Var Sum(Var a);
Var Mean(Var a);
// 1 x cols row of column sums.
Var ColSum(Var a);
Var SliceCols(Var a, Eigen::Index start, Eigen::Index count);
Var ConcatCols(const std::vector<Var>& parts);

double Scalar(Var v);

struct GradCheckResult {
  double max_relative_error = 0.0;
  size_t coordinates_checked = 0;
  // Worst coordinate for diagnostics.
  std::string worst_parameter;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  // 0 checks every coordinate; otherwise a seeded random subset.
  size_t max_coordinates = 0;
  uint64_t seed = 0;
  // Denominator floor of |a - n| / max(|a|, |n|, floor).
  double absolute_floor = 1e-6;
};

// Compares the tape gradient of `loss` with central differences.
GradCheckResult GradCheck(const std::function<Var(Tape&)>& loss,
                          std::span<Parameter* const> params,
                          const GradCheckOptions& options = {});

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Frozen parameters in the
// list are skipped.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamOptions options = {});

  // Applies one update from the accumulated gradients, then zeroes them.
  void Step();

  double lr() const { return options_.lr; }
  void set_lr(double lr) { options_.lr = lr; }
  int64_t step_count() const { return step_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  AdamOptions options_;
  int64_t step_ = 0;
};

}  // namespace sead::ad

#endif  // SEAD_AUTODIFF_HPP_
