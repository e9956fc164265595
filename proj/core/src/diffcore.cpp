#include "facplace/diffcore.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>

#include "facplace/error.hpp"

namespace facplace {
namespace {

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw DataError(fmt::format("{}: shape mismatch ({})", op, detail));
}

std::string shape_str(const Tensor& t) { return fmt::format("{}x{}", t.rows(), t.cols()); }

// Adds g into the gradient of node `id` if it tracks gradients.
template <typename F>
void accumulate(Tape& tape, std::size_t id, F&& add_into) {
  if (tape.requires_grad(id)) add_into(tape.grad_buffer(id));
}

}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DataError(fmt::format("tensor: {} values for shape {}x{}", data_.size(), rows, cols));
  }
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                         std::vector<Entry> entries) {
  for (const auto& e : entries) {
    if (e.row >= rows || e.col >= cols) {
      throw DataError(fmt::format("sparse: entry ({}, {}) outside {}x{}", e.row, e.col, rows, cols));
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  SparseMatrix m;
  m.rows = rows;
  m.cols = cols;
  for (const auto& e : entries) {
    if (!m.entries.empty() && m.entries.back().row == e.row && m.entries.back().col == e.col) {
      m.entries.back().value += e.value;
    } else {
      m.entries.push_back(e);
    }
  }
  return m;
}

void glorot_uniform(Tensor& t, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
  for (auto& v : t.data()) v = (2.0 * rng.uniform() - 1.0) * limit;
}

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Tensor value) { return record("constant", std::move(value), {}, nullptr); }

Var Tape::input(Tensor value) {
  Var v = record("input", std::move(value), {}, nullptr);
  nodes_[v.id()].requires_grad = true;
  return v;
}

Var Tape::param(Parameter& p) {
  Var v = input(p.value);
  nodes_[v.id()].param = &p;
  return v;
}

Var Tape::record(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError(fmt::format("non-finite result in {}", op));
  Node node;
  node.value = std::move(value);
  for (std::size_t in : inputs) node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  if (node.requires_grad) node.backward = std::move(backward);
  node.inputs = std::move(inputs);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (backward_done_) throw NumericError("backward called twice on one tape without reset");
  const Tensor& lv = nodes_.at(loss.id()).value;
  if (lv.rows() != 1 || lv.cols() != 1) throw DataError("backward: loss must be a scalar");
  backward_done_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t k = loss.id() + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (!n.grad.all_finite()) throw NumericError("non-finite gradient during backward");
    if (n.backward) n.backward(*this, k);
    if (n.param) {
      auto& pg = n.param->grad;
      if (pg.empty()) pg = Tensor(n.value.rows(), n.value.cols());
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

// ---- ops -------------------------------------------------------------------

Var add(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require(x.same_shape(y), "add", shape_str(x) + " vs " + shape_str(y));
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("add", std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, ia, [&](Tensor& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; });
    accumulate(t, ib, [&](Tensor& gb) { for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i]; });
  });
}

Var sub(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require(x.same_shape(y), "sub", shape_str(x) + " vs " + shape_str(y));
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("sub", std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, ia, [&](Tensor& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; });
    accumulate(t, ib, [&](Tensor& gb) { for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i]; });
  });
}

Var mul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require(x.same_shape(y), "mul", shape_str(x) + " vs " + shape_str(y));
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("mul", std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xa = t.value(ia);
    const Tensor& xb = t.value(ib);
    accumulate(t, ia, [&](Tensor& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * xb[i]; });
    accumulate(t, ib, [&](Tensor& gb) { for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xa[i]; });
  });
}

Var add_row(Var a, Var bias) {
  const Tensor& x = a.value();
  const Tensor& b = bias.value();
  require(b.rows() == 1 && b.cols() == x.cols(), "add_row", shape_str(x) + " + " + shape_str(b));
  Tensor out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double* row = out.row(r);
    for (std::size_t c = 0; c < out.cols(); ++c) row[c] += b[c];
  }
  const std::size_t ia = a.id(), ib = bias.id();
  return a.tape()->record("add_row", std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, ia, [&](Tensor& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; });
    accumulate(t, ib, [&](Tensor& gb) {
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const double* row = g.row(r);
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += row[c];
      }
    });
  });
}

Var affine(Var a, double alpha, double beta) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = alpha * v + beta;
  const std::size_t ia = a.id();
  return a.tape()->record("affine", std::move(out), {ia}, [ia, alpha](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, ia, [&](Tensor& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += alpha * g[i]; });
  });
}

namespace {

// out (n x m) += x (n x k) * y (k x m)
void gemm_nn(const Tensor& x, const Tensor& y, Tensor& out) {
  const std::size_t n = x.rows(), k = x.cols(), m = y.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.row(i);
    const double* xi = x.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double v = xi[p];
      if (v == 0.0) continue;
      const double* yp = y.row(p);
      for (std::size_t j = 0; j < m; ++j) o[j] += v * yp[j];
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require(x.cols() == y.rows(), "matmul", shape_str(x) + " * " + shape_str(y));
  Tensor out(x.rows(), y.cols());
  gemm_nn(x, y, out);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("matmul", std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xa = t.value(ia);
    const Tensor& xb = t.value(ib);
    // dA = G B^T
    accumulate(t, ia, [&](Tensor& ga) {
      for (std::size_t i = 0; i < g.rows(); ++i) {
        const double* gi = g.row(i);
        double* o = ga.row(i);
        for (std::size_t p = 0; p < xb.rows(); ++p) {
          const double* bp = xb.row(p);
          double s = 0.0;
          for (std::size_t j = 0; j < g.cols(); ++j) s += gi[j] * bp[j];
          o[p] += s;
        }
      }
    });
    // dB = A^T G
    accumulate(t, ib, [&](Tensor& gb) {
      for (std::size_t i = 0; i < xa.rows(); ++i) {
        const double* ai = xa.row(i);
        const double* gi = g.row(i);
        for (std::size_t p = 0; p < xa.cols(); ++p) {
          const double v = ai[p];
          if (v == 0.0) continue;
          double* o = gb.row(p);
          for (std::size_t j = 0; j < g.cols(); ++j) o[j] += v * gi[j];
        }
      }
    });
  });
}

Var sparse_matmul(const SparseMatrix& s, Var x) {
  const Tensor& xv = x.value();
  require(s.cols == xv.rows(), "sparse_matmul",
          fmt::format("{}x{} * {}", s.rows, s.cols, shape_str(xv)));
  Tensor out(s.rows, xv.cols());
  const std::size_t c = xv.cols();
  for (const auto& e : s.entries) {
    double* o = out.row(e.row);
    const double* xi = xv.row(e.col);
    for (std::size_t j = 0; j < c; ++j) o[j] += e.value * xi[j];
  }
  const std::size_t ix = x.id();
  const SparseMatrix* sp = &s;
  return x.tape()->record("sparse_matmul", std::move(out), {ix}, [ix, sp](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, ix, [&](Tensor& gx) {
      const std::size_t c = g.cols();
      for (const auto& e : sp->entries) {
        double* o = gx.row(e.col);
        const double* gi = g.row(e.row);
        for (std::size_t j = 0; j < c; ++j) o[j] += e.value * gi[j];
      }
    });
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DataError("concat_cols: no inputs");
  const std::size_t n = parts.front().rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require(p.rows() == n, "concat_cols", fmt::format("{} rows vs {}", p.rows(), n));
    total += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Tensor out(n, total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < n; ++r) std::copy(v.row(r), v.row(r) + v.cols(), out.row(r) + off);
    off += v.cols();
  }
  return parts.front().tape()->record(
      "concat_cols", std::move(out), ids, [ids, widths](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          const std::size_t w = widths[k];
          accumulate(t, ids[k], [&](Tensor& gk) {
            for (std::size_t r = 0; r < g.rows(); ++r) {
              const double* gi = g.row(r) + off;
              double* o = gk.row(r);
              for (std::size_t j = 0; j < w; ++j) o[j] += gi[j];
            }
          });
          off += w;
        }
      });
}

Var gather_rows(Var x, std::span<const std::uint32_t> index) {
  const Tensor& v = x.value();
  Tensor out(index.size(), v.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    require(index[k] < v.rows(), "gather_rows", fmt::format("row {} of {}", index[k], v.rows()));
    std::copy(v.row(index[k]), v.row(index[k]) + v.cols(), out.row(k));
  }
  const std::size_t ix = x.id();
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  return x.tape()->record("gather_rows", std::move(out), {ix},
                          [ix, idx = std::move(idx)](Tape& t, std::size_t self) {
                            const Tensor& g = t.grad(self);
                            accumulate(t, ix, [&](Tensor& gx) {
                              for (std::size_t k = 0; k < idx.size(); ++k) {
                                const double* gi = g.row(k);
                                double* o = gx.row(idx[k]);
                                for (std::size_t j = 0; j < g.cols(); ++j) o[j] += gi[j];
                              }
                            });
                          });
}

Var scatter_add_rows(Var x, std::span<const std::uint32_t> index, std::size_t rows) {
  const Tensor& v = x.value();
  require(index.size() == v.rows(), "scatter_add_rows",
          fmt::format("{} indices for {} rows", index.size(), v.rows()));
  Tensor out(rows, v.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    require(index[k] < rows, "scatter_add_rows", fmt::format("row {} of {}", index[k], rows));
    const double* xi = v.row(k);
    double* o = out.row(index[k]);
    for (std::size_t j = 0; j < v.cols(); ++j) o[j] += xi[j];
  }
  const std::size_t ix = x.id();
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  return x.tape()->record("scatter_add_rows", std::move(out), {ix},
                          [ix, idx = std::move(idx)](Tape& t, std::size_t self) {
                            const Tensor& g = t.grad(self);
                            accumulate(t, ix, [&](Tensor& gx) {
                              for (std::size_t k = 0; k < idx.size(); ++k) {
                                const double* gi = g.row(idx[k]);
                                double* o = gx.row(k);
                                for (std::size_t j = 0; j < g.cols(); ++j) o[j] += gi[j];
                              }
                            });
                          });
}

Var mul_rows(Var x, Var w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require(wv.cols() == 1 && wv.rows() == xv.rows(), "mul_rows",
          shape_str(xv) + " by " + shape_str(wv));
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double* o = out.row(r);
    for (std::size_t j = 0; j < out.cols(); ++j) o[j] *= wv[r];
  }
  const std::size_t ix = x.id(), iw = w.id();
  return x.tape()->record("mul_rows", std::move(out), {ix, iw}, [ix, iw](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(ix);
    const Tensor& wv = t.value(iw);
    accumulate(t, ix, [&](Tensor& gx) {
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const double* gi = g.row(r);
        double* o = gx.row(r);
        for (std::size_t j = 0; j < g.cols(); ++j) o[j] += gi[j] * wv[r];
      }
    });
    accumulate(t, iw, [&](Tensor& gw) {
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const double* gi = g.row(r);
        const double* xi = xv.row(r);
        double s = 0.0;
        for (std::size_t j = 0; j < g.cols(); ++j) s += gi[j] * xi[j];
        gw[r] += s;
      }
    });
  });
}

Var segment_softmax(Var scores, std::span<const std::uint32_t> segment, std::size_t n_segments) {
  const Tensor& s = scores.value();
  require(s.cols() == 1 && s.rows() == segment.size(), "segment_softmax",
          fmt::format("{} with {} segment ids", shape_str(s), segment.size()));
  std::vector<double> seg_max(n_segments, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < segment.size(); ++e) {
    require(segment[e] < n_segments, "segment_softmax", "segment id out of range");
    seg_max[segment[e]] = std::max(seg_max[segment[e]], s[e]);
  }
  Tensor out(s.rows(), 1);
  std::vector<double> seg_sum(n_segments, 0.0);
  for (std::size_t e = 0; e < segment.size(); ++e) {
    out[e] = std::exp(s[e] - seg_max[segment[e]]);
    seg_sum[segment[e]] += out[e];
  }
  for (std::size_t e = 0; e < segment.size(); ++e) out[e] /= seg_sum[segment[e]];
  const std::size_t is = scores.id();
  std::vector<std::uint32_t> seg(segment.begin(), segment.end());
  return scores.tape()->record(
      "segment_softmax", std::move(out), {is},
      [is, seg = std::move(seg), n_segments](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& y = t.value(self);
        std::vector<double> dot(n_segments, 0.0);
        for (std::size_t e = 0; e < seg.size(); ++e) dot[seg[e]] += y[e] * g[e];
        accumulate(t, is, [&](Tensor& gs) {
          for (std::size_t e = 0; e < seg.size(); ++e) gs[e] += y[e] * (g[e] - dot[seg[e]]);
        });
      });
}

namespace {

// Elementwise op with derivative expressed through input x and output y.
template <typename F, typename D>
Var unary(const char* name, Var x, F f, D dfdx) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = f(v);
  const std::size_t ix = x.id();
  return x.tape()->record(name, std::move(out), {ix}, [ix, dfdx](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(ix);
    const Tensor& yv = t.value(self);
    accumulate(t, ix, [&](Tensor& gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xv[i], yv[i]);
    });
  });
}

}  // namespace

Var relu(Var x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var x, double slope) {
  return unary(
      "leaky_relu", x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var tanh(Var x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var dropout(Var x, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw ConfigError(fmt::format("dropout: p {} outside [0, 1)", p));
  if (!training || p == 0.0) return x;
  const double keep = 1.0 - p;
  std::vector<double> scale(x.value().size());
  for (auto& s : scale) s = rng.uniform() < keep ? 1.0 / keep : 0.0;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= scale[i];
  const std::size_t ix = x.id();
  return x.tape()->record("dropout", std::move(out), {ix},
                          [ix, scale = std::move(scale)](Tape& t, std::size_t self) {
                            const Tensor& g = t.grad(self);
                            accumulate(t, ix, [&](Tensor& gx) {
                              for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * scale[i];
                            });
                          });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::size_t ix = x.id();
  return x.tape()->record("sum", Tensor::scalar(s), {ix}, [ix](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    accumulate(t, ix, [&](Tensor& gx) { for (auto& v : gx.data()) v += g; });
  });
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor out = logits;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double* row = out.row(r);
    const double mx = *std::max_element(row, row + out.cols());
    double z = 0.0;
    for (std::size_t c = 0; c < out.cols(); ++c) z += (row[c] = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < out.cols(); ++c) row[c] /= z;
  }
  return out;
}

Var softmax_cross_entropy(Var logits, std::span<const std::uint8_t> labels,
                          std::span<const std::uint8_t> mask) {
  const Tensor& z = logits.value();
  require(labels.size() == z.rows() && mask.size() == z.rows(), "softmax_cross_entropy",
          fmt::format("{} logits, {} labels, {} mask", z.rows(), labels.size(), mask.size()));
  std::size_t m = 0;
  for (auto v : mask) m += v != 0;
  if (m == 0) throw DataError("softmax_cross_entropy: mask selects no rows");
  double loss = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    if (!mask[r]) continue;
    require(labels[r] < z.cols(), "softmax_cross_entropy", "label outside class range");
    const double* row = z.row(r);
    const double mx = *std::max_element(row, row + z.cols());
    double lse = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) lse += std::exp(row[c] - mx);
    loss += mx + std::log(lse) - row[labels[r]];
  }
  loss /= static_cast<double>(m);
  const std::size_t iz = logits.id();
  std::vector<std::uint8_t> lab(labels.begin(), labels.end());
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  return logits.tape()->record(
      "softmax_cross_entropy", Tensor::scalar(loss), {iz},
      [iz, lab = std::move(lab), msk = std::move(msk), m](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0] / static_cast<double>(m);
        const Tensor p = softmax_rows(t.value(iz));
        accumulate(t, iz, [&](Tensor& gz) {
          for (std::size_t r = 0; r < p.rows(); ++r) {
            if (!msk[r]) continue;
            const double* pr = p.row(r);
            double* o = gz.row(r);
            for (std::size_t c = 0; c < p.cols(); ++c) {
              o[c] += g * (pr[c] - (c == lab[r] ? 1.0 : 0.0));
            }
          }
        });
      });
}

Var chebyshev_filter(const SparseMatrix& lhat, Var x, int order) {
  if (order < 0) throw ConfigError(fmt::format("chebyshev_filter: order {} < 0", order));
  std::vector<Var> terms{x};
  if (order >= 1) terms.push_back(sparse_matmul(lhat, x));
  for (int k = 2; k <= order; ++k) {
    Var lt = sparse_matmul(lhat, terms[static_cast<std::size_t>(k - 1)]);
    terms.push_back(sub(affine(lt, 2.0, 0.0), terms[static_cast<std::size_t>(k - 2)]));
  }
  return terms.size() == 1 ? x : concat_cols(terms);
}

GruParams::GruParams(std::size_t in_dim, std::size_t hidden, int order, Rng& rng,
                     const std::string& prefix) {
  const std::size_t k = static_cast<std::size_t>(order + 1);
  auto weight = [&](const char* name, std::size_t rows) {
    Parameter p(prefix + name, Tensor(rows, hidden));
    glorot_uniform(p.value, rng);
    return p;
  };
  auto bias = [&](const char* name) { return Parameter(prefix + name, Tensor(1, hidden)); };
  wxz = weight("wxz", k * in_dim);
  whz = weight("whz", k * hidden);
  bz = bias("bz");
  wxr = weight("wxr", k * in_dim);
  whr = weight("whr", k * hidden);
  br = bias("br");
  wxh = weight("wxh", k * in_dim);
  whh = weight("whh", k * hidden);
  bh = bias("bh");
}

std::vector<Parameter*> GruParams::all() {
  return {&wxz, &whz, &bz, &wxr, &whr, &br, &wxh, &whh, &bh};
}

GruVars bind(Tape& tape, GruParams& p) {
  return {tape.param(p.wxz), tape.param(p.whz), tape.param(p.bz),
          tape.param(p.wxr), tape.param(p.whr), tape.param(p.br),
          tape.param(p.wxh), tape.param(p.whh), tape.param(p.bh)};
}

Var gru_cell(const SparseMatrix& lhat, Var h, Var x, const GruVars& p, int order) {
  const Var cx = chebyshev_filter(lhat, x, order);
  const Var ch = chebyshev_filter(lhat, h, order);
  const Var z = sigmoid(add_row(add(matmul(cx, p.wxz), matmul(ch, p.whz)), p.bz));
  const Var r = sigmoid(add_row(add(matmul(cx, p.wxr), matmul(ch, p.whr)), p.br));
  const Var crh = chebyshev_filter(lhat, mul(r, h), order);
  const Var candidate = tanh(add_row(add(matmul(cx, p.wxh), matmul(crh, p.whh)), p.bh));
  // H' = Z * H + (1 - Z) * candidate
  return add(mul(z, h), mul(affine(z, -1.0, 1.0), candidate));
}

// ---- gradient checking ----------------------------------------------------

GradCheckResult grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double step,
                           double floor) {
  auto evaluate = [&](const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& x : xs) vars.push_back(tape.constant(x));
    return f(tape, vars).value()[0];
  };

  Tape tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.input(x));
  const Var out = f(tape, vars);
  tape.backward(out);
  const double f0 = out.value()[0];

  GradCheckResult result;
  std::vector<Tensor> xs = inputs;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor analytic = tape.grad(vars[k].id()).empty()
                                ? Tensor(inputs[k].rows(), inputs[k].cols())
                                : tape.grad(vars[k].id());
    for (std::size_t i = 0; i < xs[k].size(); ++i) {
      const double orig = xs[k][i];
      xs[k][i] = orig + step;
      const double fp = evaluate(xs);
      xs[k][i] = orig - step;
      const double fm = evaluate(xs);
      xs[k][i] = orig;
      const double right = (fp - f0) / step;
      const double left = (f0 - fm) / step;
      const double scale = std::max({1.0, std::abs(right), std::abs(left)});
      if (std::abs(right - left) > 1e-2 * scale) {
        ++result.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      result.max_rel_error = std::max(result.max_rel_error, rel);
      ++result.checked;
    }
  }
  return result;
}

// ---- Adam -------------------------------------------------------------------

Adam::Adam(std::vector<Parameter*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto* p : params_) {
    if (p->grad.size() != p->value.size()) p->grad = Tensor(p->value.rows(), p->value.cols());
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
    if (!p.value.all_finite()) throw NumericError(fmt::format("non-finite parameter '{}'", p.name));
  }
}

// ---- checkpoints ----------------------------------------------------------

void save_checkpoint(const std::vector<const Parameter*>& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  nlohmann::json entries = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto* p : params) {
    out.write(reinterpret_cast<const char*>(p->value.data().data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    entries.push_back({{"name", p->name},
                       {"shape", {p->value.rows(), p->value.cols()}},
                       {"offset", offset}});
    offset += p->value.size();
  }
  std::filesystem::path manifest = path;
  manifest.replace_extension(".json");
  std::ofstream meta(manifest, std::ios::binary);
  meta << nlohmann::json{{"dtype", "float64"}, {"byte_order", "little"}, {"parameters", entries}}.dump(1)
       << '\n';
}

void load_checkpoint(const std::vector<Parameter*>& params, const std::filesystem::path& path) {
  std::filesystem::path manifest_path = path;
  manifest_path.replace_extension(".json");
  std::ifstream meta(manifest_path);
  if (!meta) throw DataError(fmt::format("missing checkpoint manifest '{}'", manifest_path.string()));
  const auto manifest = nlohmann::json::parse(meta, nullptr, false);
  if (manifest.is_discarded()) throw DataError(fmt::format("{}: invalid JSON", manifest_path.string()));
  const auto& entries = manifest.at("parameters");
  if (entries.size() != params.size()) {
    throw DataError(fmt::format("checkpoint has {} parameters, model expects {}", entries.size(),
                                params.size()));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    const auto shape = entries[k].at("shape").get<std::vector<std::size_t>>();
    if (entries[k].at("name").get<std::string>() != p.name || shape.at(0) != p.value.rows() ||
        shape.at(1) != p.value.cols()) {
      throw DataError(fmt::format("checkpoint entry {} does not match parameter '{}'", k, p.name));
    }
    in.read(reinterpret_cast<char*>(p.value.data().data()),
            static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    if (!in) throw DataError(fmt::format("{}: truncated", path.string()));
  }
}

}  // namespace facplace
