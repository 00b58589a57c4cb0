#include "macflow/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "macflow/kernels.hpp"

namespace macflow {

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw std::invalid_argument("autodiff: mixing variables of two tapes");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  if (!value.all_finite()) {
    throw std::runtime_error("autodiff: non-finite value produced (shape " +
                             value.shape_string() + ")");
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape(), std::vector<double>(n.value.size(), 0.0));
  return n.grad;
}

Tensor Tape::gradient(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == n.value.size()) return n.grad;
  return Tensor(n.value.shape(), std::vector<double>(n.value.size(), 0.0));
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw std::invalid_argument("backward: variable from another tape");
  if (value(loss).size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                value(loss).shape_string());
  }
  for (Node& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id()].requires_grad) return;
  grad(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.size() != n.value.size()) continue;
    n.backward(*this, i);
  }
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

namespace ad {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() +
                                " vs " + b.shape_string());
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw std::invalid_argument("matmul: inner dimension mismatch, expected " +
                                std::to_string(bv.rows()) + " got " + std::to_string(av.cols()));
  }
  const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
  Tensor out(n, m);
  kernels::gemm(av.data(), bv.data(), out.data(), n, k, m);
  const Var inputs[] = {a, b};
  return a.tape().record(std::move(out), inputs, [ia = a.id(), ib = b.id(), n, k, m](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) kernels::gemm_nt(g.data(), t.value(ib).data(), t.grad(ia).data(), n, k, m, true);
    if (t.requires_grad(ib)) kernels::gemm_tn(t.value(ia).data(), g.data(), t.grad(ib).data(), n, k, m, true);
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const Var inputs[] = {a, b};
  return a.tape().record(std::move(out), inputs, [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      Tensor& gi = t.grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const Var inputs[] = {a, b};
  return a.tape().record(std::move(out), inputs, [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const Var inputs[] = {a, b};
  return a.tape().record(std::move(out), inputs, [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      const Tensor& bv = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      const Tensor& av = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  const Var inputs[] = {a};
  return a.tape().record(std::move(out), inputs, [ia = a.id(), s](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var add_row(Var x, Var row) {
  const Tensor& xv = x.value();
  const Tensor& rv = row.value();
  if (rv.size() != xv.cols()) {
    throw std::invalid_argument("add_row: expected row of width " + std::to_string(xv.cols()) +
                                ", got " + rv.shape_string());
  }
  Tensor out = xv;
  const std::size_t n = xv.rows(), m = xv.cols();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out(r, c) += rv[c];
  const Var inputs[] = {x, row};
  return x.tape().record(std::move(out), inputs, [ix = x.id(), ir = row.id(), n, m](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ix)) {
      Tensor& gx = t.grad(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.requires_grad(ir)) {
      Tensor& gr = t.grad(ir);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) gr[c] += g(r, c);
    }
  });
}

Var mul_row(Var x, Var row) {
  const Tensor& xv = x.value();
  const Tensor& rv = row.value();
  if (rv.size() != xv.cols()) {
    throw std::invalid_argument("mul_row: expected row of width " + std::to_string(xv.cols()) +
                                ", got " + rv.shape_string());
  }
  Tensor out = xv;
  const std::size_t n = xv.rows(), m = xv.cols();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out(r, c) *= rv[c];
  const Var inputs[] = {x, row};
  return x.tape().record(std::move(out), inputs, [ix = x.id(), ir = row.id(), n, m](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(ix);
    const Tensor& rv = t.value(ir);
    if (t.requires_grad(ix)) {
      Tensor& gx = t.grad(ix);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) gx(r, c) += g(r, c) * rv[c];
    }
    if (t.requires_grad(ir)) {
      Tensor& gr = t.grad(ir);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) gr[c] += g(r, c) * xv(r, c);
    }
  });
}

Var mul_col(Var x, Var col) {
  const Tensor& xv = x.value();
  const Tensor& cv = col.value();
  if (cv.size() != xv.rows()) {
    throw std::invalid_argument("mul_col: expected column of height " +
                                std::to_string(xv.rows()) + ", got " + cv.shape_string());
  }
  Tensor out = xv;
  const std::size_t n = xv.rows(), m = xv.cols();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out(r, c) *= cv[r];
  const Var inputs[] = {x, col};
  return x.tape().record(std::move(out), inputs, [ix = x.id(), ic = col.id(), n, m](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(ix);
    const Tensor& cv = t.value(ic);
    if (t.requires_grad(ix)) {
      Tensor& gx = t.grad(ix);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) gx(r, c) += g(r, c) * cv[r];
    }
    if (t.requires_grad(ic)) {
      Tensor& gc = t.grad(ic);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) gc[r] += g(r, c) * xv(r, c);
    }
  });
}

Var gelu(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = gelu_value(v);
  const Var inputs[] = {x};
  return x.tape().record(std::move(out), inputs, [ix = x.id()](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(ix);
    Tensor& gx = t.grad(ix);
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      gx[i] += g[i] * (cdf + v * pdf);
    }
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  const Var inputs[] = {x};
  return x.tape().record(std::move(out), inputs, [ix = x.id()](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(ix);
    Tensor& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xv[i] > 0.0 ? g[i] : 0.0;
  });
}

Var tanh(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = std::tanh(v);
  const Var inputs[] = {x};
  return x.tape().record(std::move(out), inputs, [ix = x.id()](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var normalize_rows(Var x, double eps) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), m = xv.cols();
  Tensor out(xv.shape(), std::vector<double>(xv.size()));
  std::vector<double> inv_std(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = xv.row_span(r);
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(m);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < m; ++c) out(r, c) = (row[c] - mu) * inv_std[r];
  }
  const Var inputs[] = {x};
  return x.tape().record(std::move(out), inputs, [ix = x.id(), n, m, inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad(ix);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t r = 0; r < n; ++r) {
      double g_mean = 0.0, gy_mean = 0.0;
      for (std::size_t c = 0; c < m; ++c) {
        g_mean += g(r, c);
        gy_mean += g(r, c) * y(r, c);
      }
      g_mean *= inv_m;
      gy_mean *= inv_m;
      for (std::size_t c = 0; c < m; ++c) {
        gx(r, c) += inv_std[r] * (g(r, c) - g_mean - y(r, c) * gy_mean);
      }
    }
  });
}

Var square(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v *= v;
  const Var inputs[] = {x};
  return x.tape().record(std::move(out), inputs, [ix = x.id()](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(ix);
    Tensor& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 2.0 * xv[i] * g[i];
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const Var inputs[] = {x};
  return x.tape().record(Tensor::scalar(s), inputs, [ix = x.id()](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad(ix).values()) v += g;
  });
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw std::invalid_argument("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var row_sum(Var x) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), m = xv.cols();
  Tensor out(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (double v : xv.row_span(r)) s += v;
    out[r] = s;
  }
  const Var inputs[] = {x};
  return x.tape().record(std::move(out), inputs, [ix = x.id(), n, m](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ix);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) gx(r, c) += g[r];
  });
}

Var softmax_rows(Var x) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), m = xv.cols();
  Tensor out(xv.shape(), std::vector<double>(xv.size()));
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = xv.row_span(r);
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double z = 0.0;
    for (std::size_t c = 0; c < m; ++c) z += (out(r, c) = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < m; ++c) out(r, c) /= z;
  }
  const Var inputs[] = {x};
  return x.tape().record(std::move(out), inputs, [ix = x.id(), n, m](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& p = t.value(self);
    Tensor& gx = t.grad(ix);
    for (std::size_t r = 0; r < n; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < m; ++c) dot += g(r, c) * p(r, c);
      for (std::size_t c = 0; c < m; ++c) gx(r, c) += p(r, c) * (g(r, c) - dot);
    }
  });
}

Var concat_columns(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_columns: no inputs");
  std::vector<const Tensor*> values;
  std::vector<std::size_t> ids, widths;
  for (const Var& p : parts) {
    values.push_back(&p.value());
    ids.push_back(p.id());
    widths.push_back(p.value().cols());
  }
  Tensor out = macflow::concat_columns(values);
  return parts.front().tape().record(std::move(out), parts, [ids, widths](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const std::size_t n = g.rows();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        Tensor& gk = t.grad(ids[k]);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) gk(r, c) += g(r, offset + c);
      }
      offset += widths[k];
    }
  });
}

Var slice_columns(Var x, std::size_t start, std::size_t count) {
  Tensor out = macflow::slice_columns(x.value(), start, count);
  const Var inputs[] = {x};
  return x.tape().record(std::move(out), inputs, [ix = x.id(), start, count](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ix);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < count; ++c) gx(r, start + c) += g(r, c);
  });
}

Var stop_gradient(Var x) { return x.tape().constant(x.value()); }

}  // namespace ad
}  // namespace macflow
