// SPDX-License-Identifier: Apache-2.0
#include "vdt/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace vdt {

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw std::invalid_argument("vars from different tapes");
}

[[noreturn]] void shape_error(const char *op, const Tensor2 &a, const Tensor2 &b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                              b.shape_string());
}

void require_same_shape(const char *op, const Tensor2 &a, const Tensor2 &b) {
  if (!a.same_shape(b)) shape_error(op, a, b);
}

// Elementwise unary op where the local derivative is a function of (x, y).
template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  Tape &t = *a.tape;
  const Tensor2 &x = t.value(a);
  Tensor2 y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  const std::uint32_t ia = a.id;
  return t.push(std::move(y), {a}, [ia, deriv](Tape &tp, std::uint32_t self) {
    if (!tp.requires_grad(ia)) return;
    const Tensor2 &g = tp.upstream(self);
    const Tensor2 &x = tp.value(Var{&tp, ia});
    const Tensor2 &y = tp.value(Var{&tp, self});
    Tensor2 &ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(x[i], y[i]);
  });
}

// out(i,j) += Σ_k a(i,k) w(j,k)
void accumulate_nt(const Tensor2 &a, const Tensor2 &w, Tensor2 &out) {
  const std::size_t n = a.rows(), m = w.rows(), k = a.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const double *ar = &a.data()[i * k];
    double *orow = &out.data()[i * m];
    for (std::size_t j = 0; j < m; ++j) {
      const double *wr = &w.data()[j * k];
      double acc = 0.0;
      for (std::size_t q = 0; q < k; ++q) acc += ar[q] * wr[q];
      orow[j] += acc;
    }
  }
}

// da += g·w ; dw += gᵀ·a   (backward of a·wᵀ)
void backprop_nt(const Tensor2 &g, const Tensor2 &a, const Tensor2 &w, Tensor2 *da, Tensor2 *dw) {
  const std::size_t n = a.rows(), m = w.rows(), k = a.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const double *grow = &g.data()[i * m];
    const double *ar = &a.data()[i * k];
    double *dar = da ? &da->data()[i * k] : nullptr;
    for (std::size_t j = 0; j < m; ++j) {
      const double gij = grow[j];
      if (gij == 0.0) continue;
      const double *wr = &w.data()[j * k];
      if (dar)
        for (std::size_t q = 0; q < k; ++q) dar[q] += gij * wr[q];
      if (dw) {
        double *dwr = &dw->data()[j * k];
        for (std::size_t q = 0; q < k; ++q) dwr[q] += gij * ar[q];
      }
    }
  }
}

void add_bias_rows(const Tensor2 &b, Tensor2 &out) {
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b[j];
}

void accumulate_bias_grad(const Tensor2 &g, Tensor2 &db) {
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) db[j] += g(i, j);
}

} // namespace

// ---- Tape -----------------------------------------------------------------

Var Tape::constant(Tensor2 value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::param(Parameter &p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  Node n;
  n.value = p.value;
  n.requires_grad = record_;
  n.param = &p;
  nodes_.push_back(std::move(n));
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var{this, id};
}

Var Tape::push(Tensor2 value, std::span<const Var> inputs, Backward back) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const Var &v : inputs) {
      if (v.tape != this) throw std::invalid_argument("op input from a different tape");
      n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
    }
    if (n.requires_grad) n.back = std::move(back);
  }
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor2 &Tape::grad_buffer(std::uint32_t id) {
  Node &n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor2(n.value.rows(), n.value.cols());
  return n.grad;
}

Tensor2 Tape::grad(Var v) const {
  const Node &n = nodes_[v.id];
  if (n.grad.empty()) return Tensor2(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (!record_) throw std::logic_error("backward on a non-recording tape");
  if (loss.tape != this) throw std::invalid_argument("backward: loss from a different tape");
  if (nodes_[loss.id].value.size() != 1) throw std::invalid_argument("backward: loss must be 1x1");
  for (auto &n : nodes_) n.grad = Tensor2();
  grad_buffer(loss.id)[0] = 1.0;
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    Node &n = nodes_[id];
    if (n.back && !n.grad.empty()) n.back(*this, id);
  }
  for (auto &n : nodes_) {
    if (n.param == nullptr || n.grad.empty()) continue;
    Tensor2 &pg = n.param->grad;
    if (pg.empty()) pg = Tensor2(n.value.rows(), n.value.cols());
    for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
  }
}

// ---- linear algebra ---------------------------------------------------------

Var matmul_nt(Var a, Var w) {
  require_same_tape(a, w);
  Tape &t = *a.tape;
  const Tensor2 &av = t.value(a), &wv = t.value(w);
  if (av.cols() != wv.cols()) shape_error("matmul_nt", av, wv);
  Tensor2 out(av.rows(), wv.rows());
  accumulate_nt(av, wv, out);
  const auto ia = a.id, iw = w.id;
  return t.push(std::move(out), {a, w}, [ia, iw](Tape &tp, std::uint32_t self) {
    const Tensor2 &g = tp.upstream(self);
    Tensor2 *da = tp.requires_grad(ia) ? &tp.grad_buffer(ia) : nullptr;
    Tensor2 *dw = tp.requires_grad(iw) ? &tp.grad_buffer(iw) : nullptr;
    backprop_nt(g, tp.value(Var{&tp, ia}), tp.value(Var{&tp, iw}), da, dw);
  });
}

Var affine(Var x, Var w, Var b) {
  require_same_tape(x, w);
  require_same_tape(x, b);
  Tape &t = *x.tape;
  const Tensor2 &xv = t.value(x), &wv = t.value(w), &bv = t.value(b);
  if (xv.cols() != wv.cols()) shape_error("affine", xv, wv);
  if (bv.rows() != 1 || bv.cols() != wv.rows()) shape_error("affine bias", wv, bv);
  Tensor2 out(xv.rows(), wv.rows());
  add_bias_rows(bv, out);
  accumulate_nt(xv, wv, out);
  const auto ix = x.id, iw = w.id, ib = b.id;
  return t.push(std::move(out), {x, w, b}, [ix, iw, ib](Tape &tp, std::uint32_t self) {
    const Tensor2 &g = tp.upstream(self);
    Tensor2 *dx = tp.requires_grad(ix) ? &tp.grad_buffer(ix) : nullptr;
    Tensor2 *dw = tp.requires_grad(iw) ? &tp.grad_buffer(iw) : nullptr;
    backprop_nt(g, tp.value(Var{&tp, ix}), tp.value(Var{&tp, iw}), dx, dw);
    if (tp.requires_grad(ib)) accumulate_bias_grad(g, tp.grad_buffer(ib));
  });
}

Var affine2(Var x, Var w, Var h, Var u, Var b) {
  require_same_tape(x, w);
  require_same_tape(x, h);
  require_same_tape(x, u);
  require_same_tape(x, b);
  Tape &t = *x.tape;
  const Tensor2 &xv = t.value(x), &wv = t.value(w), &hv = t.value(h), &uv = t.value(u),
                &bv = t.value(b);
  if (xv.cols() != wv.cols()) shape_error("affine2 input", xv, wv);
  if (hv.cols() != uv.cols()) shape_error("affine2 recurrent", hv, uv);
  if (xv.rows() != hv.rows() || wv.rows() != uv.rows()) shape_error("affine2 rows", xv, hv);
  if (bv.rows() != 1 || bv.cols() != wv.rows()) shape_error("affine2 bias", wv, bv);
  Tensor2 out(xv.rows(), wv.rows());
  add_bias_rows(bv, out);
  accumulate_nt(xv, wv, out);
  accumulate_nt(hv, uv, out);
  const auto ix = x.id, iw = w.id, ih = h.id, iu = u.id, ib = b.id;
  return t.push(std::move(out), {x, w, h, u, b}, [=](Tape &tp, std::uint32_t self) {
    const Tensor2 &g = tp.upstream(self);
    Tensor2 *dx = tp.requires_grad(ix) ? &tp.grad_buffer(ix) : nullptr;
    Tensor2 *dw = tp.requires_grad(iw) ? &tp.grad_buffer(iw) : nullptr;
    backprop_nt(g, tp.value(Var{&tp, ix}), tp.value(Var{&tp, iw}), dx, dw);
    Tensor2 *dh = tp.requires_grad(ih) ? &tp.grad_buffer(ih) : nullptr;
    Tensor2 *du = tp.requires_grad(iu) ? &tp.grad_buffer(iu) : nullptr;
    backprop_nt(g, tp.value(Var{&tp, ih}), tp.value(Var{&tp, iu}), dh, du);
    if (tp.requires_grad(ib)) accumulate_bias_grad(g, tp.grad_buffer(ib));
  });
}

// ---- elementwise ----------------------------------------------------------

Var add(Var a, Var b) {
  require_same_tape(a, b);
  Tape &t = *a.tape;
  const Tensor2 &av = t.value(a), &bv = t.value(b);
  require_same_shape("add", av, bv);
  Tensor2 out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const auto ia = a.id, ib = b.id;
  return t.push(std::move(out), {a, b}, [ia, ib](Tape &tp, std::uint32_t self) {
    const Tensor2 &g = tp.upstream(self);
    for (auto id : {ia, ib}) {
      if (!tp.requires_grad(id)) continue;
      Tensor2 &d = tp.grad_buffer(id);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  Tape &t = *a.tape;
  const Tensor2 &av = t.value(a), &bv = t.value(b);
  require_same_shape("sub", av, bv);
  Tensor2 out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const auto ia = a.id, ib = b.id;
  return t.push(std::move(out), {a, b}, [ia, ib](Tape &tp, std::uint32_t self) {
    const Tensor2 &g = tp.upstream(self);
    if (tp.requires_grad(ia)) {
      Tensor2 &d = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor2 &d = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  Tape &t = *a.tape;
  const Tensor2 &av = t.value(a), &bv = t.value(b);
  require_same_shape("mul", av, bv);
  Tensor2 out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const auto ia = a.id, ib = b.id;
  return t.push(std::move(out), {a, b}, [ia, ib](Tape &tp, std::uint32_t self) {
    const Tensor2 &g = tp.upstream(self);
    const Tensor2 &av = tp.value(Var{&tp, ia});
    const Tensor2 &bv = tp.value(Var{&tp, ib});
    if (tp.requires_grad(ia)) {
      Tensor2 &d = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor2 &d = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

Var add_row(Var a, Var b) {
  require_same_tape(a, b);
  Tape &t = *a.tape;
  const Tensor2 &av = t.value(a), &bv = t.value(b);
  if (bv.rows() != 1 || bv.cols() != av.cols()) shape_error("add_row", av, bv);
  Tensor2 out = av;
  add_bias_rows(bv, out);
  const auto ia = a.id, ib = b.id;
  return t.push(std::move(out), {a, b}, [ia, ib](Tape &tp, std::uint32_t self) {
    const Tensor2 &g = tp.upstream(self);
    if (tp.requires_grad(ia)) {
      Tensor2 &d = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (tp.requires_grad(ib)) accumulate_bias_grad(g, tp.grad_buffer(ib));
  });
}

Var mul_col(Var a, Var b) {
  require_same_tape(a, b);
  Tape &t = *a.tape;
  const Tensor2 &av = t.value(a), &bv = t.value(b);
  if (bv.cols() != 1 || bv.rows() != av.rows()) shape_error("mul_col", av, bv);
  Tensor2 out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) = av(i, j) * bv[i];
  const auto ia = a.id, ib = b.id;
  return t.push(std::move(out), {a, b}, [ia, ib](Tape &tp, std::uint32_t self) {
    const Tensor2 &g = tp.upstream(self);
    const Tensor2 &av = tp.value(Var{&tp, ia});
    const Tensor2 &bv = tp.value(Var{&tp, ib});
    if (tp.requires_grad(ia)) {
      Tensor2 &d = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) d(i, j) += g(i, j) * bv[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor2 &d = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) d[i] += g(i, j) * av(i, j);
    }
  });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var shift(Var a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var one_minus(Var a) {
  return unary(a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a, [](double x) { return sigmoid(x); }, [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softplus(Var a) {
  return unary(a, [](double x) { return softplus(x); }, [](double x, double) { return sigmoid(x); });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---- reductions -----------------------------------------------------------

Var sum(Var a) {
  Tape &t = *a.tape;
  const Tensor2 &av = t.value(a);
  double acc = 0.0;
  for (double v : av.data()) acc += v;
  const auto ia = a.id;
  return t.push(Tensor2(1, 1, acc), {a}, [ia](Tape &tp, std::uint32_t self) {
    if (!tp.requires_grad(ia)) return;
    const double g = tp.upstream(self)[0];
    Tensor2 &d = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g;
  });
}

Var mean(Var a) {
  const auto n = static_cast<double>(a.tape->value(a).size());
  if (n == 0) throw std::invalid_argument("mean: empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var mse(Var pred, Var target) {
  require_same_tape(pred, target);
  Tape &t = *pred.tape;
  const Tensor2 &pv = t.value(pred), &tv = t.value(target);
  require_same_shape("mse", pv, tv);
  if (pv.empty()) throw std::invalid_argument("mse: empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = pv[i] - tv[i];
    acc += d * d;
  }
  const double n = static_cast<double>(pv.size());
  const auto ip = pred.id, it = target.id;
  return t.push(Tensor2(1, 1, acc / n), {pred, target}, [ip, it, n](Tape &tp, std::uint32_t self) {
    const double g = tp.upstream(self)[0];
    const Tensor2 &pv = tp.value(Var{&tp, ip});
    const Tensor2 &tv = tp.value(Var{&tp, it});
    if (tp.requires_grad(ip)) {
      Tensor2 &d = tp.grad_buffer(ip);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g * 2.0 * (pv[i] - tv[i]) / n;
    }
    if (tp.requires_grad(it)) {
      Tensor2 &d = tp.grad_buffer(it);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g * 2.0 * (pv[i] - tv[i]) / n;
    }
  });
}

// ---- structural -----------------------------------------------------------

Var concat_cols(Var a, Var b) {
  require_same_tape(a, b);
  Tape &t = *a.tape;
  const Tensor2 &av = t.value(a), &bv = t.value(b);
  if (av.rows() != bv.rows()) shape_error("concat_cols", av, bv);
  const std::size_t ca = av.cols(), cb = bv.cols();
  Tensor2 out(av.rows(), ca + cb);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = 0; j < ca; ++j) out(i, j) = av(i, j);
    for (std::size_t j = 0; j < cb; ++j) out(i, ca + j) = bv(i, j);
  }
  const auto ia = a.id, ib = b.id;
  return t.push(std::move(out), {a, b}, [ia, ib, ca, cb](Tape &tp, std::uint32_t self) {
    const Tensor2 &g = tp.upstream(self);
    if (tp.requires_grad(ia)) {
      Tensor2 &d = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < ca; ++j) d(i, j) += g(i, j);
    }
    if (tp.requires_grad(ib)) {
      Tensor2 &d = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < cb; ++j) d(i, j) += g(i, ca + j);
    }
  });
}

Var column(Var a, std::size_t j) {
  Tape &t = *a.tape;
  const Tensor2 &av = t.value(a);
  if (j >= av.cols()) throw std::out_of_range("column: index out of range");
  Tensor2 out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) out[i] = av(i, j);
  const auto ia = a.id;
  return t.push(std::move(out), {a}, [ia, j](Tape &tp, std::uint32_t self) {
    if (!tp.requires_grad(ia)) return;
    const Tensor2 &g = tp.upstream(self);
    Tensor2 &d = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.rows(); ++i) d(i, j) += g[i];
  });
}

Var stack_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("stack_rows: no parts");
  Tape &t = *parts.front().tape;
  std::vector<Tensor2> blocks;
  std::vector<std::uint32_t> ids;
  for (const Var &p : parts) {
    if (p.tape != &t) throw std::invalid_argument("stack_rows: vars from different tapes");
    blocks.push_back(t.value(p));
    ids.push_back(p.id);
  }
  Tensor2 out = vstack(blocks);
  return t.push(std::move(out), parts, [ids](Tape &tp, std::uint32_t self) {
    const Tensor2 &g = tp.upstream(self);
    std::size_t row = 0;
    for (auto id : ids) {
      const std::size_t r = tp.value(Var{&tp, id}).rows();
      if (tp.requires_grad(id)) {
        Tensor2 &d = tp.grad_buffer(id);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) d(i, j) += g(row + i, j);
      }
      row += r;
    }
  });
}

// ---- variational ------------------------------------------------------------

double softplus(double x) noexcept { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double inverse_softplus(double y) {
  if (!(y > 0.0)) throw std::invalid_argument("inverse_softplus: argument must be positive");
  // log(exp(y) - 1) written to stay finite for large y.
  return y + std::log(-std::expm1(-y));
}

Var reparameterize(Var mu, Var rho, const Tensor2 &eps) {
  require_same_tape(mu, rho);
  Tape &t = *mu.tape;
  const Tensor2 &m = t.value(mu), &r = t.value(rho);
  require_same_shape("reparameterize", m, r);
  require_same_shape("reparameterize eps", m, eps);
  Tensor2 out(m.rows(), m.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = m[i] + softplus(r[i]) * eps[i];
  const auto im = mu.id, ir = rho.id;
  return t.push(std::move(out), {mu, rho}, [im, ir, eps](Tape &tp, std::uint32_t self) {
    const Tensor2 &g = tp.upstream(self);
    if (tp.requires_grad(im)) {
      Tensor2 &d = tp.grad_buffer(im);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (tp.requires_grad(ir)) {
      const Tensor2 &r = tp.value(Var{&tp, ir});
      Tensor2 &d = tp.grad_buffer(ir);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * eps[i] * sigmoid(r[i]);
    }
  });
}

Var gaussian_kl(Var mu, Var rho, double prior_sigma) {
  require_same_tape(mu, rho);
  if (!(prior_sigma > 0.0)) throw std::invalid_argument("gaussian_kl: prior_sigma must be positive");
  Tape &t = *mu.tape;
  const Tensor2 &m = t.value(mu), &r = t.value(rho);
  require_same_shape("gaussian_kl", m, r);
  const double p2 = prior_sigma * prior_sigma;
  double acc = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double s = softplus(r[i]);
    acc += std::log(prior_sigma / s) + (s * s + m[i] * m[i]) / (2.0 * p2) - 0.5;
  }
  const auto im = mu.id, ir = rho.id;
  return t.push(Tensor2(1, 1, acc), {mu, rho}, [im, ir, p2](Tape &tp, std::uint32_t self) {
    const double g = tp.upstream(self)[0];
    const Tensor2 &m = tp.value(Var{&tp, im});
    const Tensor2 &r = tp.value(Var{&tp, ir});
    if (tp.requires_grad(im)) {
      Tensor2 &d = tp.grad_buffer(im);
      for (std::size_t i = 0; i < m.size(); ++i) d[i] += g * m[i] / p2;
    }
    if (tp.requires_grad(ir)) {
      Tensor2 &d = tp.grad_buffer(ir);
      for (std::size_t i = 0; i < m.size(); ++i) {
        const double s = softplus(r[i]);
        d[i] += g * (-1.0 / s + s / p2) * sigmoid(r[i]);
      }
    }
  });
}

} // namespace vdt
