#pragma once

// Small fp64 reverse-mode automatic differentiation engine. Values are 2-D
// row-major matrices; scalars are 1x1.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "facplace/rng.hpp"

namespace facplace {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Tensor&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Constant sparse matrix as a sorted coordinate list (row-major order).
struct SparseMatrix {
  struct Entry {
    std::uint32_t row;
    std::uint32_t col;
    double value;
  };

  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Entry> entries;  // sorted by (row, col), unique

  // Sorts and sums duplicates.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Entry> entries);
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string name_, Tensor value_)
      : name(std::move(name_)), value(std::move(value_)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(0.0); }
};

void glorot_uniform(Tensor& t, Rng& rng);

class Tape;

// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Tensor& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf holding a constant (no gradient).
  Var constant(Tensor value);
  // Leaf holding a free input whose gradient is kept on the tape.
  Var input(Tensor value);
  // Leaf bound to a parameter; backward adds its gradient into param.grad.
  Var param(Parameter& p);

  // Records an op result. Throws NumericError when `value` is not finite.
  Var record(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  // Reverse sweep from a 1x1 loss. A second call without reset() throws.
  void backward(Var loss);
  void reset();

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient buffer of an input node, allocated on first use.
  Tensor& grad_buffer(std::size_t id);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---- forward ops ----------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                        // elementwise
Var add_row(Var a, Var bias);                 // a (n x c) + bias (1 x c) broadcast
Var affine(Var a, double alpha, double beta);  // alpha * a + beta
Var matmul(Var a, Var b);
Var sparse_matmul(const SparseMatrix& s, Var x);
Var concat_cols(const std::vector<Var>& parts);
Var gather_rows(Var x, std::span<const std::uint32_t> index);
// out[index[k]] += x[k]; out has `rows` rows.
Var scatter_add_rows(Var x, std::span<const std::uint32_t> index, std::size_t rows);
// x (n x c) scaled row-wise by w (n x 1).
Var mul_rows(Var x, Var w);
// Softmax of column vector `scores` (E x 1) within groups given by segment ids.
Var segment_softmax(Var scores, std::span<const std::uint32_t> segment, std::size_t n_segments);
Var relu(Var x);
Var leaky_relu(Var x, double slope);
Var tanh(Var x);
Var sigmoid(Var x);
// Inverted dropout; identity when !training or p == 0.
Var dropout(Var x, double p, Rng& rng, bool training);
Var sum(Var x);
// Mean negative log-likelihood of softmax(logits) over rows with mask 1.
Var softmax_cross_entropy(Var logits, std::span<const std::uint8_t> labels,
                          std::span<const std::uint8_t> mask);
// [T_0(L) X | T_1(L) X | ... | T_order(L) X] with Chebyshev polynomials T_k.
Var chebyshev_filter(const SparseMatrix& lhat, Var x, int order);

// Row-wise softmax of a constant logits matrix.
Tensor softmax_rows(const Tensor& logits);

// Graph-convolutional GRU cell over one snapshot.
struct GruParams {
  Parameter wxz, whz, bz;
  Parameter wxr, whr, br;
  Parameter wxh, whh, bh;

  GruParams() = default;
  GruParams(std::size_t in_dim, std::size_t hidden, int order, Rng& rng, const std::string& prefix);
  std::vector<Parameter*> all();
};

struct GruVars {
  Var wxz, whz, bz, wxr, whr, br, wxh, whh, bh;
};

GruVars bind(Tape& tape, GruParams& p);

Var gru_cell(const SparseMatrix& lhat, Var h, Var x, const GruVars& p, int order);

// ---- gradient checking ----------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates at a non-differentiable point
};

// `f` must build its scalar output on the given tape from the given inputs.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Compares backward gradients with central differences for every coordinate
// of every input. Relative error is |a - n| / max(|a|, |n|, floor).
// Coordinates where the one-sided slopes disagree (kinks) are skipped.
GradCheckResult grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double step = 1e-5,
                           double floor = 1e-4);

// ---- optimisation and checkpoints ----------------------------------------

class Adam {
 public:
  Adam(std::vector<Parameter*> params, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  void zero_grad();
  void step();

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

// Flat little-endian float64 file of all parameter values plus a JSON
// manifest (<path>.json) listing names, shapes and offsets.
void save_checkpoint(const std::vector<const Parameter*>& params, const std::filesystem::path& path);
void load_checkpoint(const std::vector<Parameter*>& params, const std::filesystem::path& path);

}  // namespace facplace
