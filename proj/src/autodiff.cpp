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

#include "sead/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sead/error.hpp"
#include "sead/random.hpp"

namespace sead::ad {
namespace {

std::string ShapeOf(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void RequireSameShape(const char* op, Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    Fail(ErrorKind::kShape, std::string(op) + ": shape mismatch " +
                                ShapeOf(a.value()) + " vs " + ShapeOf(b.value()));
  }
}

void RequireSameTape(Var a, Var b) {
  Require(a.tape() != nullptr && a.tape() == b.tape(), ErrorKind::kContract,
          "operands recorded on different tapes");
}

}  // namespace

Parameter::Parameter(std::string name, Matrix value, bool trainable)
    : name_(std::move(name)),
      value_(std::move(value)),
      grad_(Matrix::Zero(value_.rows(), value_.cols())),
      trainable_(trainable) {}

void Parameter::AccumulateGrad(const Matrix& g) const {
  if (g.rows() != value_.rows() || g.cols() != value_.cols()) {
    Fail(ErrorKind::kShape, "gradient shape " + ShapeOf(g) + " does not match parameter '" +
                                name_ + "' " + ShapeOf(value_));
  }
  if (grad_.rows() != value_.rows() || grad_.cols() != value_.cols()) {
    grad_ = Matrix::Zero(value_.rows(), value_.cols());
  }
  grad_ += g;
  has_grad_ = true;
}

void Parameter::ZeroGrad() {
  grad_ = Matrix::Zero(value_.rows(), value_.cols());
  has_grad_ = false;
}

const Matrix& Var::value() const {
  Require(tape_ != nullptr, ErrorKind::kContract, "use of an unbound Var");
  return tape_->ValueOf(id_);
}

Var Tape::Push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::Constant(Matrix value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return Push(std::move(n));
}

Var Tape::Param(const Parameter& p) {
  Node n;
  n.op = "parameter";
  n.value = p.value();
  n.param = &p;
  n.needs_grad = mode_ == Mode::kTrain && p.trainable();
  return Push(std::move(n));
}

Var Tape::Record(const char* op, Matrix value, std::initializer_list<Var> parents,
                 BackwardFn backward) {
  return Record(op, std::move(value), std::vector<Var>(parents), std::move(backward));
}

Var Tape::Record(const char* op, Matrix value, const std::vector<Var>& parents,
                 BackwardFn backward) {
  if (!value.allFinite()) {
    Fail(ErrorKind::kNumeric, std::string("non-finite value produced by '") + op + "'");
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  if (mode_ == Mode::kTrain) {
    for (const Var& p : parents) {
      if (p.tape() != this) {
        Fail(ErrorKind::kContract, std::string(op) + ": operand from another tape");
      }
      if (nodes_[p.id()].needs_grad) n.needs_grad = true;
    }
    if (n.needs_grad) n.backward = std::move(backward);
  }
  return Push(std::move(n));
}

bool Tape::NeedsGrad(Var v) const { return nodes_[v.id()].needs_grad; }

void Tape::AccumulateGrad(Var v, const Matrix& g) {
  Node& n = nodes_[v.id()];
  if (!n.needs_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols()) {
    Fail(ErrorKind::kShape, std::string("gradient shape mismatch at '") + n.op + "'");
  }
  if (!n.grad_set) {
    n.grad = g;
    n.grad_set = true;
  } else {
    n.grad += g;
  }
}

void Tape::AccumulateGradCols(Var v, Eigen::Index start, const Matrix& g) {
  Node& n = nodes_[v.id()];
  if (!n.needs_grad) return;
  if (g.rows() != n.value.rows() || start + g.cols() > n.value.cols()) {
    Fail(ErrorKind::kShape, std::string("column gradient out of range at '") + n.op + "'");
  }
  if (!n.grad_set) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.grad_set = true;
  }
  n.grad.middleCols(start, g.cols()) += g;
}

void Tape::Backward(Var loss) {
  Require(mode_ == Mode::kTrain, ErrorKind::kContract,
          "backward on an inference-mode tape");
  Require(!backward_done_, ErrorKind::kContract,
          "backward called twice on the same tape");
  Require(loss.tape() == this, ErrorKind::kContract, "loss recorded on another tape");
  Require(loss.rows() == 1 && loss.cols() == 1, ErrorKind::kShape,
          "backward requires a 1x1 loss");
  backward_done_ = true;
  AccumulateGrad(loss, Matrix::Ones(1, 1));
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.grad_set) continue;
    if (n.param != nullptr) {
      n.param->AccumulateGrad(n.grad);
    } else if (n.backward) {
      n.backward(n.grad);
    }
    n.grad = Matrix();
    n.backward = nullptr;
  }
}

Var MatMul(Var a, Var b) {
  RequireSameTape(a, b);
  if (a.cols() != b.rows()) {
    Fail(ErrorKind::kShape, "matmul: inner dimensions differ " + ShapeOf(a.value()) +
                                " * " + ShapeOf(b.value()));
  }
  Tape* t = a.tape();
  return t->Record("matmul", a.value() * b.value(), {a, b}, [t, a, b](const Matrix& g) {
    if (t->NeedsGrad(a)) t->AccumulateGrad(a, g * b.value().transpose());
    if (t->NeedsGrad(b)) t->AccumulateGrad(b, a.value().transpose() * g);
  });
}

Var Add(Var a, Var b) {
  RequireSameTape(a, b);
  RequireSameShape("add", a, b);
  Tape* t = a.tape();
  return t->Record("add", a.value() + b.value(), {a, b}, [t, a, b](const Matrix& g) {
    t->AccumulateGrad(a, g);
    t->AccumulateGrad(b, g);
  });
}

Var Sub(Var a, Var b) {
  RequireSameTape(a, b);
  RequireSameShape("sub", a, b);
  Tape* t = a.tape();
  return t->Record("sub", a.value() - b.value(), {a, b}, [t, a, b](const Matrix& g) {
    t->AccumulateGrad(a, g);
    if (t->NeedsGrad(b)) t->AccumulateGrad(b, -g);
  });
}

Var Mul(Var a, Var b) {
  RequireSameTape(a, b);
  RequireSameShape("mul", a, b);
  Tape* t = a.tape();
  return t->Record("mul", a.value().cwiseProduct(b.value()), {a, b},
                   [t, a, b](const Matrix& g) {
                     if (t->NeedsGrad(a)) t->AccumulateGrad(a, g.cwiseProduct(b.value()));
                     if (t->NeedsGrad(b)) t->AccumulateGrad(b, g.cwiseProduct(a.value()));
                   });
}

Var AddColumn(Var a, Var column) {
  RequireSameTape(a, column);
  if (column.cols() != 1 || column.rows() != a.rows()) {
    Fail(ErrorKind::kShape, "add_column: expected a " + std::to_string(a.rows()) +
                                "x1 column, got " + ShapeOf(column.value()));
  }
  Tape* t = a.tape();
  Matrix out = a.value().colwise() + column.value().col(0);
  return t->Record("add_column", std::move(out), {a, column},
                   [t, a, column](const Matrix& g) {
                     t->AccumulateGrad(a, g);
                     if (t->NeedsGrad(column)) t->AccumulateGrad(column, g.rowwise().sum());
                   });
}

Var Scale(Var a, double s) {
  Tape* t = a.tape();
  return t->Record("scale", a.value() * s, {a},
                   [t, a, s](const Matrix& g) { t->AccumulateGrad(a, g * s); });
}

Var AddScalar(Var a, double s) {
  Tape* t = a.tape();
  return t->Record("add_scalar", (a.value().array() + s).matrix(), {a},
                   [t, a](const Matrix& g) { t->AccumulateGrad(a, g); });
}

Var Sigmoid(Var a) {
  Tape* t = a.tape();
  Matrix y = a.value().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  const int id = t->size();
  return t->Record("sigmoid", std::move(y), {a}, [t, a, id](const Matrix& g) {
    const Matrix& y = t->ValueOf(id);
    t->AccumulateGrad(a, g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var Tanh(Var a) {
  Tape* t = a.tape();
  const int id = t->size();
  return t->Record("tanh", a.value().array().tanh().matrix(), {a},
                   [t, a, id](const Matrix& g) {
                     const Matrix& y = t->ValueOf(id);
                     t->AccumulateGrad(a, g.cwiseProduct((1.0 - y.array().square()).matrix()));
                   });
}

Var Power(Var a, double c) {
  Tape* t = a.tape();
  const bool fractional = c != std::floor(c);
  if (fractional && (a.value().array() < 0.0).any()) {
    Fail(ErrorKind::kInvalidInput, "power: negative base with fractional exponent");
  }
  Matrix y = a.value().array().pow(c).matrix();
  return t->Record("power", std::move(y), {a}, [t, a, c](const Matrix& g) {
    Matrix d = a.value().unaryExpr([c](double x) {
      return x == 0.0 ? 0.0 : c * std::pow(x, c - 1.0);
    });
    t->AccumulateGrad(a, g.cwiseProduct(d));
  });
}

Var Log10(Var a) {
  Tape* t = a.tape();
  if ((a.value().array() <= 0.0).any()) {
    Fail(ErrorKind::kNumeric, "log10: non-positive argument");
  }
  return t->Record("log10", a.value().array().log10().matrix(), {a},
                   [t, a](const Matrix& g) {
                     const double k = 1.0 / std::log(10.0);
                     t->AccumulateGrad(a, (g.array() * k / a.value().array()).matrix());
                   });
}

Var Sum(Var a) {
  Tape* t = a.tape();
  Matrix s(1, 1);
  s(0, 0) = a.value().sum();
  return t->Record("sum", std::move(s), {a}, [t, a](const Matrix& g) {
    t->AccumulateGrad(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var Mean(Var a) {
  Tape* t = a.tape();
  Require(a.value().size() > 0, ErrorKind::kShape, "mean of an empty matrix");
  const double n = static_cast<double>(a.value().size());
  Matrix s(1, 1);
  s(0, 0) = a.value().sum() / n;
  return t->Record("mean", std::move(s), {a}, [t, a, n](const Matrix& g) {
    t->AccumulateGrad(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / n));
  });
}

Var ColSum(Var a) {
  Tape* t = a.tape();
  return t->Record("col_sum", a.value().colwise().sum(), {a}, [t, a](const Matrix& g) {
    t->AccumulateGrad(a, g.replicate(a.rows(), 1));
  });
}

Var SliceCols(Var a, Eigen::Index start, Eigen::Index count) {
  Require(start >= 0 && count >= 0 && start + count <= a.cols(), ErrorKind::kShape,
          "slice_cols: range out of bounds");
  Tape* t = a.tape();
  return t->Record("slice_cols", a.value().middleCols(start, count), {a},
                   [t, a, start](const Matrix& g) { t->AccumulateGradCols(a, start, g); });
}

Var ConcatCols(const std::vector<Var>& parts) {
  Require(!parts.empty(), ErrorKind::kShape, "concat_cols: no inputs");
  Tape* t = parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    Require(p.tape() == t, ErrorKind::kContract, "concat_cols: mixed tapes");
    Require(p.rows() == rows, ErrorKind::kShape, "concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return t->Record("concat_cols", std::move(out), parts, [t, parts](const Matrix& g) {
    Eigen::Index at = 0;
    for (const Var& p : parts) {
      if (t->NeedsGrad(p)) t->AccumulateGrad(p, g.middleCols(at, p.cols()));
      at += p.cols();
    }
  });
}

double Scalar(Var v) {
  Require(v.rows() == 1 && v.cols() == 1, ErrorKind::kShape, "scalar: not 1x1");
  return v.value()(0, 0);
}

GradCheckResult GradCheck(const std::function<Var(Tape&)>& loss,
                          std::span<Parameter* const> params,
                          const GradCheckOptions& options) {
  Require(options.epsilon > 0.0, ErrorKind::kInvalidConfig, "grad check: epsilon must be > 0");
  for (Parameter* p : params) p->ZeroGrad();
  {
    Tape tape;
    Var l = loss(tape);
    Require(std::isfinite(Scalar(l)), ErrorKind::kNumeric, "grad check: non-finite loss");
    tape.Backward(l);
  }
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) {
    analytic.push_back(p->trainable() ? p->grad()
                                      : Matrix::Zero(p->value().rows(), p->value().cols()));
    p->ZeroGrad();
  }

  struct Coord {
    size_t param;
    Eigen::Index index;
  };
  std::vector<Coord> coords;
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->trainable()) continue;
    for (Eigen::Index j = 0; j < params[i]->size(); ++j) coords.push_back({i, j});
  }
  if (options.max_coordinates > 0 && coords.size() > options.max_coordinates) {
    Rng rng(options.seed);
    for (size_t i = 0; i < options.max_coordinates; ++i) {
      const size_t j = i + rng.Index(coords.size() - i);
      std::swap(coords[i], coords[j]);
    }
    coords.resize(options.max_coordinates);
  }

  auto evaluate = [&loss]() {
    Tape tape(Tape::Mode::kInference);
    const double v = Scalar(loss(tape));
    Require(std::isfinite(v), ErrorKind::kNumeric, "grad check: non-finite loss");
    return v;
  };

  GradCheckResult result;
  for (const Coord& c : coords) {
    Parameter& p = *params[c.param];
    double& x = p.value().data()[c.index];
    const double saved = x;
    x = saved + options.epsilon;
    const double up = evaluate();
    x = saved - options.epsilon;
    const double down = evaluate();
    x = saved;
    const double numeric = (up - down) / (2.0 * options.epsilon);
    const double a = analytic[c.param].data()[c.index];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.absolute_floor});
    const double rel = std::abs(a - numeric) / denom;
    ++result.coordinates_checked;
    if (result.worst_index < 0 || rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_parameter = p.name();
      result.worst_index = c.index;
      result.worst_analytic = a;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

Adam::Adam(std::vector<Parameter*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  Require(options_.lr >= 0.0, ErrorKind::kInvalidConfig, "adam: learning rate must be >= 0");
  for (Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value().rows(), p->value().cols()));
    v_.push_back(Matrix::Zero(p->value().rows(), p->value().cols()));
  }
}

void Adam::Step() {
  const bool any = std::any_of(params_.begin(), params_.end(), [](const Parameter* p) {
    return p->trainable() && p->has_grad();
  });
  Require(any, ErrorKind::kContract, "adam: step requested before any backward pass");
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (!p.trainable()) {
      p.ZeroGrad();
      continue;
    }
    const Matrix& g = p.grad();
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseProduct(g);
    p.value().array() -= options_.lr * (m_[i].array() / c1) /
                         ((v_[i].array() / c2).sqrt() + options_.epsilon);
    p.ZeroGrad();
  }
}

}  // namespace sead::ad
