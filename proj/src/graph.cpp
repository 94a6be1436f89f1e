#include "phier/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace phier::numcore {

namespace {
[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }
}  // namespace

const Tensor& Var::val() const { return g->value(id); }

Var Graph::input(Tensor t) {
  return emit(std::move(t), {}, nullptr, true, "input");
}

Var Graph::param(const std::string& name, const Tensor& t) {
  if (name.empty()) fail("Graph::param: empty name");
  Var v = emit(t, {}, nullptr, true, "param");
  nodes_[v.id].requires_grad = true;
  nodes_[v.id].pname = name;
  params_.emplace_back(name, v.id);
  return v;
}

Var Graph::emit(Tensor value, std::vector<int> parents, Backprop back,
                bool differentiable, const char* opname) {
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.back = std::move(back);
  n.differentiable = differentiable;
  n.opname = opname;
  for (int p : n.parents)
    if (nodes_[p].requires_grad) n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad_buf(int id) {
  Node& n = nodes_[id];
  if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
  return n.grad;
}

void Graph::backward(Var root) {
  if (root.g != this) fail("Graph::backward: foreign Var");
  if (nodes_[root.id].value.numel() != 1)
    fail("Graph::backward: root must be a scalar");
  ran_backward_ = true;
  grad_buf(root.id).data[0] = 1.0;
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.data.empty()) continue;
    if (!n.differentiable)
      fail(std::string("Graph::backward: non-differentiable op '") + n.opname +
           "' in gradient path");
    if (n.back) n.back(*this, id);
  }
}

GradBundle Graph::grads(Var root) {
  if (!ran_backward_) backward(root);
  GradBundle gb;
  gb.value = nodes_[root.id].value;
  for (auto& [name, id] : params_) {
    if (nodes_[id].grad.data.empty())
      gb.grads[name] = Tensor::zeros(nodes_[id].value.shape);
    else
      gb.grads[name] = nodes_[id].grad;
  }
  return gb;
}

const Tensor& Graph::grad(Var v) const {
  if (nodes_[v.id].grad.data.empty())
    fail("Graph::grad: node has no gradient");
  return nodes_[v.id].grad;
}

GradBundle grad_of(const std::function<Var(Graph&)>& build) {
  Graph g;
  Var root = build(g);
  return g.grads(root);
}

// ---------------------------------------------------------------------------
// op layer
// ---------------------------------------------------------------------------

namespace {

Graph& same_graph(Var a, Var b) {
  if (a.g != b.g || a.g == nullptr) fail("graph op: operands on different graphs");
  return *a.g;
}

void check_same_shape(Var a, Var b, const char* op) {
  if (!a.val().same_shape(b.val())) fail(std::string(op) + ": shape mismatch");
}

// accumulate f(i) into the grad of parent `pid` if it participates
template <typename F>
void accum(Graph& g, int pid, std::size_t n, F f) {
  if (!g.requires_grad(pid)) return;
  Tensor& dst = g.grad_buf(pid);
  for (std::size_t i = 0; i < n; ++i) dst.data[i] += f(i);
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b);
  check_same_shape(a, b, "add");
  Tensor out = numcore::add(a.val(), b.val());
  int ia = a.id, ib = b.id;
  return g.emit(std::move(out), {ia, ib},
                [ia, ib](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  accum(g, ia, go.numel(), [&](std::size_t i) { return go.data[i]; });
                  accum(g, ib, go.numel(), [&](std::size_t i) { return go.data[i]; });
                },
                true, "add");
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b);
  check_same_shape(a, b, "sub");
  Tensor out = numcore::sub(a.val(), b.val());
  int ia = a.id, ib = b.id;
  return g.emit(std::move(out), {ia, ib},
                [ia, ib](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  accum(g, ia, go.numel(), [&](std::size_t i) { return go.data[i]; });
                  accum(g, ib, go.numel(), [&](std::size_t i) { return -go.data[i]; });
                },
                true, "sub");
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  check_same_shape(a, b, "mul");
  Tensor out = numcore::mul(a.val(), b.val());
  int ia = a.id, ib = b.id;
  return g.emit(std::move(out), {ia, ib},
                [ia, ib](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  const Tensor& va = g.value(ia);
                  const Tensor& vb = g.value(ib);
                  accum(g, ia, go.numel(),
                        [&](std::size_t i) { return go.data[i] * vb.data[i]; });
                  accum(g, ib, go.numel(),
                        [&](std::size_t i) { return go.data[i] * va.data[i]; });
                },
                true, "mul");
}

Var divide(Var a, Var b) {
  Graph& g = same_graph(a, b);
  check_same_shape(a, b, "divide");
  Tensor out = a.val();
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] /= b.val().data[i];
  ensure_all_finite(out, "divide");
  int ia = a.id, ib = b.id;
  return g.emit(std::move(out), {ia, ib},
                [ia, ib](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  const Tensor& q = g.value(self);
                  const Tensor& vb = g.value(ib);
                  accum(g, ia, go.numel(),
                        [&](std::size_t i) { return go.data[i] / vb.data[i]; });
                  accum(g, ib, go.numel(), [&](std::size_t i) {
                    return -go.data[i] * q.data[i] / vb.data[i];
                  });
                },
                true, "divide");
}

Var neg(Var a) { return mul_scalar(a, -1.0); }

Var add_scalar(Var a, double c) {
  Graph& g = *a.g;
  Tensor out = a.val();
  for (double& v : out.data) v += c;
  int ia = a.id;
  return g.emit(std::move(out), {ia},
                [ia](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  accum(g, ia, go.numel(), [&](std::size_t i) { return go.data[i]; });
                },
                true, "add_scalar");
}

Var mul_scalar(Var a, double c) {
  Graph& g = *a.g;
  Tensor out = a.val();
  for (double& v : out.data) v *= c;
  int ia = a.id;
  return g.emit(std::move(out), {ia},
                [ia, c](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  accum(g, ia, go.numel(),
                        [&](std::size_t i) { return go.data[i] * c; });
                },
                true, "mul_scalar");
}

namespace {

// unary elementwise helper: dfun receives (x, y) and returns dy/dx
template <typename FFun, typename DFun>
Var unary(Var a, FFun f, DFun dfun, const char* name) {
  Graph& g = *a.g;
  Tensor out = a.val();
  for (double& v : out.data) v = f(v);
  ensure_all_finite(out, name);
  int ia = a.id;
  return g.emit(std::move(out), {ia},
                [ia, dfun](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  const Tensor& x = g.value(ia);
                  const Tensor& y = g.value(self);
                  accum(g, ia, go.numel(), [&](std::size_t i) {
                    return go.data[i] * dfun(x.data[i], y.data[i]);
                  });
                },
                true, name);
}

}  // namespace

Var recip(Var a) {
  return unary(a, [](double x) { return 1.0 / x; },
               [](double, double y) { return -y * y; }, "recip");
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Var artanh(Var a) {
  return unary(a, [](double x) { return artanh_clamped(x); },
               [](double x, double) {
                 double lim = 1.0 - kArtanhClamp;
                 double xc = std::clamp(x, -lim, lim);
                 return 1.0 / (1.0 - xc * xc);
               },
               "artanh");
}

Var acosh(Var a) {
  return unary(a, [](double x) { return acosh_clamped(x); },
               [](double x, double) {
                 // guard the x -> 1+ singularity
                 double d = std::max(x * x - 1.0, 1e-24);
                 return 1.0 / std::sqrt(d);
               },
               "acosh");
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; }, "relu");
}

Var sigmoid(Var a) {
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Var softplus(Var a) {
  return unary(a,
               [](double x) {
                 return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
               },
               [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); },
               "softplus");
}

Var sqrt(Var a) {
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / std::max(y, 1e-150); },
               "sqrt");
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; }, "square");
}

Var maximum(Var a, Var b) {
  Graph& g = same_graph(a, b);
  check_same_shape(a, b, "maximum");
  Tensor out = a.val();
  for (std::size_t i = 0; i < out.numel(); ++i)
    out.data[i] = std::max(a.val().data[i], b.val().data[i]);
  int ia = a.id, ib = b.id;
  return g.emit(std::move(out), {ia, ib},
                [ia, ib](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  const Tensor& va = g.value(ia);
                  const Tensor& vb = g.value(ib);
                  // ties go to the first operand
                  accum(g, ia, go.numel(), [&](std::size_t i) {
                    return va.data[i] >= vb.data[i] ? go.data[i] : 0.0;
                  });
                  accum(g, ib, go.numel(), [&](std::size_t i) {
                    return va.data[i] >= vb.data[i] ? 0.0 : go.data[i];
                  });
                },
                true, "maximum");
}

Var heaviside(Var a) {
  Graph& g = *a.g;
  Tensor out = a.val();
  for (double& v : out.data) v = v > 0.0 ? 1.0 : 0.0;
  return g.emit(std::move(out), {a.id}, nullptr, /*differentiable=*/false,
                "heaviside");
}

Var stop_grad(Var a) {
  Graph& g = *a.g;
  // fresh leaf: no parents, so no gradient flows upstream
  return g.emit(a.val(), {}, nullptr, true, "stop_grad");
}

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  Tensor out = numcore::matmul(a.val(), b.val());
  int ia = a.id, ib = b.id;
  return g.emit(std::move(out), {ia, ib},
                [ia, ib](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  const Tensor& va = g.value(ia);
                  const Tensor& vb = g.value(ib);
                  std::size_t m = va.shape[0], k = va.shape[1], n = vb.shape[1];
                  if (g.requires_grad(ia)) {
                    Tensor& da = g.grad_buf(ia);
                    // dA = G * B^T
                    matmul_nt_kernel(go.data.data(), vb.data.data(),
                                     da.data.data(), m, n, k, true);
                  }
                  if (g.requires_grad(ib)) {
                    Tensor& db = g.grad_buf(ib);
                    // dB = A^T * G
                    matmul_tn_kernel(va.data.data(), go.data.data(),
                                     db.data.data(), m, k, n, true);
                  }
                },
                true, "matmul");
}

Var matmul_nt(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& va0 = a.val();
  const Tensor& vb0 = b.val();
  if (va0.rank() != 2 || vb0.rank() != 2 || va0.shape[1] != vb0.shape[1])
    fail("matmul_nt: shape mismatch");
  std::size_t m = va0.shape[0], k = va0.shape[1], n = vb0.shape[0];
  Tensor out = Tensor::zeros({m, n});
  matmul_nt_kernel(va0.data.data(), vb0.data.data(), out.data.data(), m, k, n,
                   false);
  ensure_all_finite(out, "matmul_nt");
  int ia = a.id, ib = b.id;
  return g.emit(std::move(out), {ia, ib},
                [ia, ib, m, k, n](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  const Tensor& va = g.value(ia);
                  const Tensor& vb = g.value(ib);
                  if (g.requires_grad(ia)) {
                    Tensor& da = g.grad_buf(ia);
                    // dA = G * B  (G m x n, B n x k)
                    matmul_kernel(go.data.data(), vb.data.data(),
                                  da.data.data(), m, n, k, true);
                  }
                  if (g.requires_grad(ib)) {
                    Tensor& db = g.grad_buf(ib);
                    // dB = G^T * A  (n x m times m x k)
                    matmul_tn_kernel(go.data.data(), va.data.data(),
                                     db.data.data(), m, n, k, true);
                  }
                },
                true, "matmul_nt");
}

Var sum_all(Var a) {
  Graph& g = *a.g;
  Tensor out = numcore::sum(a.val());
  int ia = a.id;
  return g.emit(std::move(out), {ia},
                [ia](Graph& g, int self) {
                  double go = g.grad_buf(self).data[0];
                  accum(g, ia, g.value(ia).numel(),
                        [&](std::size_t) { return go; });
                },
                true, "sum_all");
}

Var mean_all(Var a) {
  Graph& g = *a.g;
  Tensor out = numcore::mean(a.val());
  int ia = a.id;
  std::size_t n = a.val().numel();
  return g.emit(std::move(out), {ia},
                [ia, n](Graph& g, int self) {
                  double go = g.grad_buf(self).data[0] / static_cast<double>(n);
                  accum(g, ia, n, [&](std::size_t) { return go; });
                },
                true, "mean_all");
}

namespace {

void check_rank2(Var m, const char* op) {
  if (m.val().rank() != 2) fail(std::string(op) + ": rank-2 tensor required");
}

}  // namespace

Var row_sum(Var m) {
  check_rank2(m, "row_sum");
  Graph& g = *m.g;
  std::size_t r = m.val().shape[0], c = m.val().shape[1];
  Tensor out = Tensor::zeros({r});
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += m.val().data[i * c + j];
    out.data[i] = acc;
  }
  int im = m.id;
  return g.emit(std::move(out), {im},
                [im, c](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  accum(g, im, go.numel() * c,
                        [&](std::size_t i) { return go.data[i / c]; });
                },
                true, "row_sum");
}

Var row_dot(Var a, Var b) {
  Graph& g = same_graph(a, b);
  check_rank2(a, "row_dot");
  check_same_shape(a, b, "row_dot");
  std::size_t r = a.val().shape[0], c = a.val().shape[1];
  Tensor out = Tensor::zeros({r});
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      acc += a.val().data[i * c + j] * b.val().data[i * c + j];
    out.data[i] = acc;
  }
  int ia = a.id, ib = b.id;
  return g.emit(std::move(out), {ia, ib},
                [ia, ib, c](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  const Tensor& va = g.value(ia);
                  const Tensor& vb = g.value(ib);
                  accum(g, ia, va.numel(), [&](std::size_t i) {
                    return go.data[i / c] * vb.data[i];
                  });
                  accum(g, ib, vb.numel(), [&](std::size_t i) {
                    return go.data[i / c] * va.data[i];
                  });
                },
                true, "row_dot");
}

namespace {

Var row_extreme(Var m, bool is_max) {
  check_rank2(m, "row_extreme");
  Graph& g = *m.g;
  std::size_t r = m.val().shape[0], c = m.val().shape[1];
  if (c == 0) fail("row_min/max: empty rows");
  Tensor out = Tensor::zeros({r});
  std::vector<std::size_t> arg(r, 0);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = m.val().data.data() + i * c;
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (is_max ? row[j] > row[best] : row[j] < row[best]) best = j;
    }
    arg[i] = best;
    out.data[i] = row[best];
  }
  int im = m.id;
  return g.emit(std::move(out), {im},
                [im, c, arg](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  if (!g.requires_grad(im)) return;
                  Tensor& dm = g.grad_buf(im);
                  for (std::size_t i = 0; i < go.numel(); ++i)
                    dm.data[i * c + arg[i]] += go.data[i];
                },
                true, is_max ? "row_max" : "row_min");
}

}  // namespace

Var row_min(Var m) { return row_extreme(m, false); }
Var row_max(Var m) { return row_extreme(m, true); }

Var row_scale(Var m, Var s) {
  Graph& g = same_graph(m, s);
  check_rank2(m, "row_scale");
  std::size_t r = m.val().shape[0], c = m.val().shape[1];
  if (s.val().numel() != r) fail("row_scale: scale length mismatch");
  Tensor out = m.val();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] *= s.val().data[i];
  ensure_all_finite(out, "row_scale");
  int im = m.id, is = s.id;
  return g.emit(std::move(out), {im, is},
                [im, is, c](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  const Tensor& vm = g.value(im);
                  const Tensor& vs = g.value(is);
                  accum(g, im, vm.numel(), [&](std::size_t i) {
                    return go.data[i] * vs.data[i / c];
                  });
                  if (g.requires_grad(is)) {
                    Tensor& ds = g.grad_buf(is);
                    for (std::size_t i = 0; i < vs.numel(); ++i) {
                      double acc = 0.0;
                      for (std::size_t j = 0; j < c; ++j)
                        acc += go.data[i * c + j] * vm.data[i * c + j];
                      ds.data[i] += acc;
                    }
                  }
                },
                true, "row_scale");
}

Var outer_scale(Var s, Var v) {
  Graph& g = same_graph(s, v);
  std::size_t r = s.val().numel(), c = v.val().numel();
  Tensor out = Tensor::zeros({r, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out.data[i * c + j] = s.val().data[i] * v.val().data[j];
  ensure_all_finite(out, "outer_scale");
  int is = s.id, iv = v.id;
  return g.emit(std::move(out), {is, iv},
                [is, iv, c](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  const Tensor& vs = g.value(is);
                  const Tensor& vv = g.value(iv);
                  if (g.requires_grad(is)) {
                    Tensor& ds = g.grad_buf(is);
                    for (std::size_t i = 0; i < vs.numel(); ++i) {
                      double acc = 0.0;
                      for (std::size_t j = 0; j < c; ++j)
                        acc += go.data[i * c + j] * vv.data[j];
                      ds.data[i] += acc;
                    }
                  }
                  if (g.requires_grad(iv)) {
                    Tensor& dv = g.grad_buf(iv);
                    for (std::size_t i = 0; i < vs.numel(); ++i)
                      for (std::size_t j = 0; j < c; ++j)
                        dv.data[j] += go.data[i * c + j] * vs.data[i];
                  }
                },
                true, "outer_scale");
}

Var add_row_broadcast(Var m, Var v) {
  Graph& g = same_graph(m, v);
  check_rank2(m, "add_row_broadcast");
  std::size_t r = m.val().shape[0], c = m.val().shape[1];
  if (v.val().numel() != c) fail("add_row_broadcast: length mismatch");
  Tensor out = m.val();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += v.val().data[j];
  int im = m.id, iv = v.id;
  return g.emit(std::move(out), {im, iv},
                [im, iv, c](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  accum(g, im, go.numel(),
                        [&](std::size_t i) { return go.data[i]; });
                  if (g.requires_grad(iv)) {
                    Tensor& dv = g.grad_buf(iv);
                    for (std::size_t i = 0; i < go.numel(); ++i)
                      dv.data[i % c] += go.data[i];
                  }
                },
                true, "add_row_broadcast");
}

Var concat_cols(Var a, Var b) {
  Graph& g = same_graph(a, b);
  check_rank2(a, "concat_cols");
  check_rank2(b, "concat_cols");
  std::size_t r = a.val().shape[0];
  if (b.val().shape[0] != r) fail("concat_cols: row count mismatch");
  std::size_t ca = a.val().shape[1], cb = b.val().shape[1];
  Tensor out = Tensor::zeros({r, ca + cb});
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(a.val().data.data() + i * ca, ca,
                out.data.data() + i * (ca + cb));
    std::copy_n(b.val().data.data() + i * cb, cb,
                out.data.data() + i * (ca + cb) + ca);
  }
  int ia = a.id, ib = b.id;
  return g.emit(std::move(out), {ia, ib},
                [ia, ib, ca, cb](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  std::size_t r = go.shape[0];
                  if (g.requires_grad(ia)) {
                    Tensor& da = g.grad_buf(ia);
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < ca; ++j)
                        da.data[i * ca + j] += go.data[i * (ca + cb) + j];
                  }
                  if (g.requires_grad(ib)) {
                    Tensor& db = g.grad_buf(ib);
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < cb; ++j)
                        db.data[i * cb + j] += go.data[i * (ca + cb) + ca + j];
                  }
                },
                true, "concat_cols");
}

Var gather_rows(Var m, std::vector<std::size_t> idx) {
  check_rank2(m, "gather_rows");
  Graph& g = *m.g;
  std::size_t r = m.val().shape[0], c = m.val().shape[1];
  for (std::size_t i : idx)
    if (i >= r) fail("gather_rows: index out of range");
  Tensor out = Tensor::zeros({idx.size(), c});
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::copy_n(m.val().data.data() + idx[k] * c, c, out.data.data() + k * c);
  int im = m.id;
  return g.emit(std::move(out), {im},
                [im, c, idx = std::move(idx)](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  if (!g.requires_grad(im)) return;
                  Tensor& dm = g.grad_buf(im);
                  for (std::size_t k = 0; k < idx.size(); ++k)
                    for (std::size_t j = 0; j < c; ++j)
                      dm.data[idx[k] * c + j] += go.data[k * c + j];
                },
                true, "gather_rows");
}

Var select_rows(std::vector<int> cond, Var a, Var b) {
  Graph& g = same_graph(a, b);
  check_rank2(a, "select_rows");
  check_same_shape(a, b, "select_rows");
  std::size_t r = a.val().shape[0], c = a.val().shape[1];
  if (cond.size() != r) fail("select_rows: condition length mismatch");
  Tensor out = Tensor::zeros({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    const Tensor& src = cond[i] ? a.val() : b.val();
    std::copy_n(src.data.data() + i * c, c, out.data.data() + i * c);
  }
  int ia = a.id, ib = b.id;
  return g.emit(std::move(out), {ia, ib},
                [ia, ib, c, cond = std::move(cond)](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  accum(g, ia, go.numel(), [&](std::size_t i) {
                    return cond[i / c] ? go.data[i] : 0.0;
                  });
                  accum(g, ib, go.numel(), [&](std::size_t i) {
                    return cond[i / c] ? 0.0 : go.data[i];
                  });
                },
                true, "select_rows");
}

Var reshape(Var a, std::vector<std::size_t> shape) {
  Graph& g = *a.g;
  Tensor out(shape, a.val().data);
  int ia = a.id;
  return g.emit(std::move(out), {ia},
                [ia](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  accum(g, ia, go.numel(),
                        [&](std::size_t i) { return go.data[i]; });
                },
                true, "reshape");
}

Var row_minmax_norm(Var m) {
  check_rank2(m, "row_minmax_norm");
  Graph& g = *m.g;
  std::size_t r = m.val().shape[0], c = m.val().shape[1];
  if (c == 0) fail("row_minmax_norm: empty rows");
  Tensor out = Tensor::zeros({r, c});
  std::vector<std::size_t> amin(r), amax(r);
  std::vector<char> flat(r, 0);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = m.val().data.data() + i * c;
    std::size_t lo = 0, hi = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (row[j] < row[lo]) lo = j;
      if (row[j] > row[hi]) hi = j;
    }
    amin[i] = lo;
    amax[i] = hi;
    double d = row[hi] - row[lo];
    if (d == 0.0) {
      flat[i] = 1;
      for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] = 0.5;
    } else {
      for (std::size_t j = 0; j < c; ++j)
        out.data[i * c + j] = (row[j] - row[lo]) / d;
    }
  }
  int im = m.id;
  return g.emit(
      std::move(out), {im},
      [im, c, amin = std::move(amin), amax = std::move(amax),
       flat = std::move(flat)](Graph& g, int self) {
        const Tensor& go = g.grad_buf(self);
        if (!g.requires_grad(im)) return;
        Tensor& dm = g.grad_buf(im);
        const Tensor& x = g.value(im);
        const Tensor& y = g.value(self);
        std::size_t r = go.shape[0];
        for (std::size_t i = 0; i < r; ++i) {
          if (flat[i]) continue;  // constant rows: zero gradient
          const double* grow = go.data.data() + i * c;
          const double* yrow = y.data.data() + i * c;
          double d = x.data[i * c + amax[i]] - x.data[i * c + amin[i]];
          double gsum = 0.0, gysum = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            gsum += grow[j];
            gysum += grow[j] * yrow[j];
          }
          for (std::size_t j = 0; j < c; ++j)
            dm.data[i * c + j] += grow[j] / d;
          // d y_j / d x_min = (y_j - 1)/d summed, d y_j / d x_max = -y_j/d
          dm.data[i * c + amin[i]] += (gysum - gsum) / d;
          dm.data[i * c + amax[i]] += -gysum / d;
        }
      },
      true, "row_minmax_norm");
}

Var row_ball_project(Var m, double eps) {
  check_rank2(m, "row_ball_project");
  Graph& g = *m.g;
  std::size_t r = m.val().shape[0], c = m.val().shape[1];
  const double limit = 1.0 - eps;
  Tensor out = m.val();
  std::vector<double> norms(r, 0.0);
  std::vector<char> scaled(r, 0);
  for (std::size_t i = 0; i < r; ++i) {
    double n2 = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      double v = out.data[i * c + j];
      n2 += v * v;
    }
    double n = std::sqrt(n2);
    norms[i] = n;
    if (n > limit) {
      scaled[i] = 1;
      double s = limit / n;
      for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] *= s;
    }
  }
  int im = m.id;
  return g.emit(
      std::move(out), {im},
      [im, c, limit, norms = std::move(norms),
       scaled = std::move(scaled)](Graph& g, int self) {
        const Tensor& go = g.grad_buf(self);
        if (!g.requires_grad(im)) return;
        Tensor& dm = g.grad_buf(im);
        const Tensor& x = g.value(im);
        std::size_t r = go.shape[0];
        for (std::size_t i = 0; i < r; ++i) {
          const double* grow = go.data.data() + i * c;
          const double* xrow = x.data.data() + i * c;
          if (!scaled[i]) {
            for (std::size_t j = 0; j < c; ++j) dm.data[i * c + j] += grow[j];
          } else {
            // y = limit * x / |x|: dy/dx = (limit/n)(I - xx^T/n^2)
            double n = norms[i];
            double gx = 0.0;
            for (std::size_t j = 0; j < c; ++j) gx += grow[j] * xrow[j];
            double a = limit / n;
            double b = limit * gx / (n * n * n);
            for (std::size_t j = 0; j < c; ++j)
              dm.data[i * c + j] += a * grow[j] - b * xrow[j];
          }
        }
      },
      true, "row_ball_project");
}

Var upsample_rows(Var m, std::size_t h, std::size_t w, std::size_t f) {
  check_rank2(m, "upsample_rows");
  Graph& g = *m.g;
  std::size_t r = m.val().shape[0];
  if (m.val().shape[1] != h * w) fail("upsample_rows: row length != h*w");
  if (f < 1) fail("upsample_rows: factor must be >= 1");
  std::size_t oc = h * f * w * f;
  Tensor out = Tensor::zeros({r, oc});
  for (std::size_t i = 0; i < r; ++i)
    upsample_bilinear_kernel(m.val().data.data() + i * h * w,
                             out.data.data() + i * oc, h, w, f);
  int im = m.id;
  return g.emit(std::move(out), {im},
                [im, h, w, f, oc](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  if (!g.requires_grad(im)) return;
                  Tensor& dm = g.grad_buf(im);
                  std::size_t r = go.shape[0];
                  for (std::size_t i = 0; i < r; ++i)
                    upsample_bilinear_backward_kernel(
                        go.data.data() + i * oc, dm.data.data() + i * h * w, h,
                        w, f);
                },
                true, "upsample_rows");
}

Var patchify(Var img, std::size_t h, std::size_t w, std::size_t c,
             std::size_t ph, std::size_t pw) {
  check_rank2(img, "patchify");
  Graph& g = *img.g;
  if (h % ph != 0 || w % pw != 0) fail("patchify: patch size must divide grid");
  std::size_t r = img.val().shape[0];
  if (img.val().shape[1] != h * w * c) fail("patchify: row length != h*w*c");
  std::size_t gh = h / ph, gw = w / pw;
  std::size_t plen = ph * pw * c;
  Tensor out = Tensor::zeros({r * gh * gw, plen});
  auto src_index = [&](std::size_t gy, std::size_t gx, std::size_t py,
                       std::size_t px, std::size_t ch) {
    std::size_t y = gy * ph + py, x = gx * pw + px;
    return (y * w + x) * c + ch;
  };
  for (std::size_t i = 0; i < r; ++i) {
    const double* rowp = img.val().data.data() + i * h * w * c;
    for (std::size_t gy = 0; gy < gh; ++gy)
      for (std::size_t gx = 0; gx < gw; ++gx) {
        double* dst =
            out.data.data() + ((i * gh + gy) * gw + gx) * plen;
        std::size_t k = 0;
        for (std::size_t py = 0; py < ph; ++py)
          for (std::size_t px = 0; px < pw; ++px)
            for (std::size_t ch = 0; ch < c; ++ch)
              dst[k++] = rowp[src_index(gy, gx, py, px, ch)];
      }
  }
  int ii = img.id;
  return g.emit(std::move(out), {ii},
                [ii, h, w, c, ph, pw, plen](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  if (!g.requires_grad(ii)) return;
                  Tensor& di = g.grad_buf(ii);
                  std::size_t gh = h / ph, gw = w / pw;
                  std::size_t r = g.value(ii).shape[0];
                  for (std::size_t i = 0; i < r; ++i) {
                    double* rowp = di.data.data() + i * h * w * c;
                    for (std::size_t gy = 0; gy < gh; ++gy)
                      for (std::size_t gx = 0; gx < gw; ++gx) {
                        const double* src =
                            go.data.data() + ((i * gh + gy) * gw + gx) * plen;
                        std::size_t k = 0;
                        for (std::size_t py = 0; py < ph; ++py)
                          for (std::size_t px = 0; px < pw; ++px)
                            for (std::size_t ch = 0; ch < c; ++ch) {
                              std::size_t y = gy * ph + py, x = gx * pw + px;
                              rowp[(y * w + x) * c + ch] += src[k++];
                            }
                      }
                  }
                },
                true, "patchify");
}

Var mask_channels(Var img, Var mask, std::size_t channels) {
  Graph& g = same_graph(img, mask);
  check_rank2(img, "mask_channels");
  check_rank2(mask, "mask_channels");
  std::size_t r = img.val().shape[0];
  std::size_t pixels = mask.val().shape[1];
  if (mask.val().shape[0] != r || img.val().shape[1] != pixels * channels)
    fail("mask_channels: shape mismatch");
  Tensor out = img.val();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t p = 0; p < pixels; ++p) {
      double mv = mask.val().data[i * pixels + p];
      for (std::size_t ch = 0; ch < channels; ++ch)
        out.data[(i * pixels + p) * channels + ch] *= mv;
    }
  int ii = img.id, im = mask.id;
  return g.emit(std::move(out), {ii, im},
                [ii, im, channels, pixels](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  const Tensor& vi = g.value(ii);
                  const Tensor& vm = g.value(im);
                  std::size_t r = vm.shape[0];
                  if (g.requires_grad(ii)) {
                    Tensor& di = g.grad_buf(ii);
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t p = 0; p < pixels; ++p) {
                        double mv = vm.data[i * pixels + p];
                        for (std::size_t ch = 0; ch < channels; ++ch) {
                          std::size_t k = (i * pixels + p) * channels + ch;
                          di.data[k] += go.data[k] * mv;
                        }
                      }
                  }
                  if (g.requires_grad(im)) {
                    Tensor& dm = g.grad_buf(im);
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t p = 0; p < pixels; ++p) {
                        double acc = 0.0;
                        for (std::size_t ch = 0; ch < channels; ++ch) {
                          std::size_t k = (i * pixels + p) * channels + ch;
                          acc += go.data[k] * vi.data[k];
                        }
                        dm.data[i * pixels + p] += acc;
                      }
                  }
                },
                true, "mask_channels");
}

Var cell_text_scores(Var p, Var t, std::size_t cells) {
  Graph& g = same_graph(p, t);
  check_rank2(p, "cell_text_scores");
  check_rank2(t, "cell_text_scores");
  std::size_t rg = p.val().shape[0], d = p.val().shape[1];
  std::size_t r = t.val().shape[0];
  if (t.val().shape[1] != d || rg != r * cells)
    fail("cell_text_scores: shape mismatch");
  Tensor out = Tensor::zeros({r, cells});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t gidx = 0; gidx < cells; ++gidx) {
      const double* prow = p.val().data.data() + (i * cells + gidx) * d;
      const double* trow = t.val().data.data() + i * d;
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += prow[j] * trow[j];
      out.data[i * cells + gidx] = acc;
    }
  int ip = p.id, it = t.id;
  return g.emit(std::move(out), {ip, it},
                [ip, it, cells, d](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  const Tensor& vp = g.value(ip);
                  const Tensor& vt = g.value(it);
                  std::size_t r = vt.shape[0];
                  if (g.requires_grad(ip)) {
                    Tensor& dp = g.grad_buf(ip);
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t gi = 0; gi < cells; ++gi) {
                        double gv = go.data[i * cells + gi];
                        for (std::size_t j = 0; j < d; ++j)
                          dp.data[(i * cells + gi) * d + j] +=
                              gv * vt.data[i * d + j];
                      }
                  }
                  if (g.requires_grad(it)) {
                    Tensor& dt = g.grad_buf(it);
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t gi = 0; gi < cells; ++gi) {
                        double gv = go.data[i * cells + gi];
                        for (std::size_t j = 0; j < d; ++j)
                          dt.data[i * d + j] +=
                              gv * vp.data[(i * cells + gi) * d + j];
                      }
                  }
                },
                true, "cell_text_scores");
}

Var add_cell_broadcast(Var x, Var pos, std::size_t cells) {
  Graph& g = same_graph(x, pos);
  check_rank2(x, "add_cell_broadcast");
  check_rank2(pos, "add_cell_broadcast");
  std::size_t rg = x.val().shape[0], d = x.val().shape[1];
  if (pos.val().shape[0] != cells || pos.val().shape[1] != d ||
      rg % cells != 0)
    fail("add_cell_broadcast: shape mismatch");
  Tensor out = x.val();
  for (std::size_t i = 0; i < rg; ++i) {
    std::size_t gi = i % cells;
    for (std::size_t j = 0; j < d; ++j)
      out.data[i * d + j] += pos.val().data[gi * d + j];
  }
  int ix = x.id, ip = pos.id;
  return g.emit(std::move(out), {ix, ip},
                [ix, ip, cells, d](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  accum(g, ix, go.numel(),
                        [&](std::size_t i) { return go.data[i]; });
                  if (g.requires_grad(ip)) {
                    Tensor& dp = g.grad_buf(ip);
                    std::size_t rg = go.shape[0];
                    for (std::size_t i = 0; i < rg; ++i) {
                      std::size_t gi = i % cells;
                      for (std::size_t j = 0; j < d; ++j)
                        dp.data[gi * d + j] += go.data[i * d + j];
                    }
                  }
                },
                true, "add_cell_broadcast");
}

Var cell_mean(Var x, std::size_t cells) {
  Graph& g = *x.g;
  check_rank2(x, "cell_mean");
  std::size_t rg = x.val().shape[0], d = x.val().shape[1];
  if (rg % cells != 0) fail("cell_mean: rows not divisible by cell count");
  std::size_t r = rg / cells;
  Tensor out = Tensor::zeros({r, d});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t gi = 0; gi < cells; ++gi)
      for (std::size_t j = 0; j < d; ++j)
        out.data[i * d + j] += x.val().data[(i * cells + gi) * d + j];
  for (double& v : out.data) v /= static_cast<double>(cells);
  int ix = x.id;
  return g.emit(std::move(out), {ix},
                [ix, cells, d](Graph& g, int self) {
                  const Tensor& go = g.grad_buf(self);
                  if (!g.requires_grad(ix)) return;
                  Tensor& dx = g.grad_buf(ix);
                  std::size_t r = go.shape[0];
                  double inv = 1.0 / static_cast<double>(cells);
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t gi = 0; gi < cells; ++gi)
                      for (std::size_t j = 0; j < d; ++j)
                        dx.data[(i * cells + gi) * d + j] +=
                            go.data[i * d + j] * inv;
                },
                true, "cell_mean");
}

}  // namespace phier::numcore
