#include "phier/hypnet.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace phier::hypnet {

namespace nc = phier::numcore;

Var rows_sqnorm(Var x) { return nc::row_dot(x, x); }

Var rows_norm(Var x) {
  return nc::sqrt(nc::add_scalar(rows_sqnorm(x), 1e-24));
}

Var ball_project_rows(Var x) {
  return nc::row_ball_project(x, poincare::kBallEps);
}

Var mobius_add_rows(Var x, Var y) {
  Var xy = nc::row_dot(x, y);
  Var xx = rows_sqnorm(x);
  Var yy = rows_sqnorm(y);
  Var two_xy = nc::mul_scalar(xy, 2.0);
  Var cx = nc::add_scalar(nc::add(two_xy, yy), 1.0);
  Var cy = nc::add_scalar(nc::mul_scalar(xx, -1.0), 1.0);
  Var den = nc::add_scalar(nc::add(two_xy, nc::mul(xx, yy)), 1.0);
  Var num = nc::add(nc::row_scale(x, cx), nc::row_scale(y, cy));
  Var out = nc::row_scale(num, nc::recip(den));
  return ball_project_rows(out);
}

Var expmap0_rows(Var v) {
  Var n = rows_norm(v);
  Var s = nc::divide(nc::tanh(n), n);
  return ball_project_rows(nc::row_scale(v, s));
}

Var logmap0_rows(Var x) {
  Var n = rows_norm(x);
  Var s = nc::divide(nc::artanh(n), n);
  return nc::row_scale(x, s);
}

Var expmap_rows(Var z, Var w) {
  Var nw = rows_norm(w);
  Var one_minus_zz = nc::add_scalar(nc::mul_scalar(rows_sqnorm(z), -1.0), 1.0);
  // lambda_z |w| / 2 = |w| / (1 - |z|^2)
  Var arg = nc::divide(nw, one_minus_zz);
  Var s = nc::divide(nc::tanh(arg), nw);
  return mobius_add_rows(z, nc::row_scale(w, s));
}

Var distance_rows(Var x, Var y) {
  Var diff = nc::sub(x, y);
  Var q = rows_sqnorm(diff);
  Var ax = nc::add_scalar(nc::mul_scalar(rows_sqnorm(x), -1.0), 1.0);
  Var ay = nc::add_scalar(nc::mul_scalar(rows_sqnorm(y), -1.0), 1.0);
  Var arg = nc::add_scalar(nc::divide(nc::mul_scalar(q, 2.0), nc::mul(ax, ay)), 1.0);
  return nc::acosh(arg);
}

Var euclidean_distance_rows(Var x, Var y) {
  Var diff = nc::sub(x, y);
  return nc::sqrt(nc::add_scalar(rows_sqnorm(diff), 1e-24));
}

Var mobius_matvec_rows(Var m, Var x) {
  Var mx = nc::matmul_nt(x, m);
  Var nx = rows_norm(x);
  Var nmx = rows_norm(mx);
  Var ratio = nc::divide(nmx, nx);
  Var s = nc::divide(nc::tanh(nc::mul(ratio, nc::artanh(nx))), nmx);
  return ball_project_rows(nc::row_scale(mx, s));
}

Var hyp_linear_rows(Var weight, Var bias, Var x) {
  Var u = mobius_matvec_rows(weight, x);
  std::size_t out_dim = weight.val().shape[0];
  // log_0(b) for the single bias vector, computed as a 1-row block
  Var b_rows = nc::reshape(bias, {1, out_dim});
  Var vb = nc::reshape(logmap0_rows(b_rows), {out_dim});
  // translation vector per row: (lambda_0 / lambda_u) log_0(b) = (1 - |u|^2) log_0(b)
  Var factor = nc::add_scalar(nc::mul_scalar(rows_sqnorm(u), -1.0), 1.0);
  Var w = nc::outer_scale(factor, vb);
  return expmap_rows(u, w);
}

Var hyp_encode_rows(Var w1, Var b1, Var w2, Var b2, Var e) {
  Var x0 = expmap0_rows(e);
  Var h1 = hyp_linear_rows(w1, b1, x0);
  return hyp_linear_rows(w2, b2, h1);
}

Var euclidean_encode_rows(Var w1, Var b1, Var w2, Var b2, Var e) {
  Var h1 = nc::relu(nc::add_row_broadcast(nc::matmul_nt(e, w1), b1));
  return nc::relu(nc::add_row_broadcast(nc::matmul_nt(h1, w2), b2));
}

Var classify_rows(Var readout_w, Var readout_b, Var h, bool euclidean) {
  Var z = euclidean ? h : logmap0_rows(h);
  Var logits = nc::add_row_broadcast(nc::matmul_nt(z, readout_w), readout_b);
  return nc::reshape(logits, {h.val().shape[0]});
}

HypEncoderParams init_params(const HypDims& dims, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  auto normal_matrix = [&](std::size_t out, std::size_t in, double sigma) {
    std::normal_distribution<double> dist(0.0, sigma);
    Tensor t = Tensor::zeros({out, in});
    for (double& v : t.data) v = dist(eng);
    return t;
  };
  HypEncoderParams p;
  // sigma = (2 n m)^(-1/2) with m = input size, n = output size
  p.layer1.weight = normal_matrix(
      dims.h1, dims.in, 1.0 / std::sqrt(2.0 * double(dims.in) * double(dims.h1)));
  p.layer1.bias = Tensor::zeros({dims.h1});
  p.layer2.weight = normal_matrix(
      dims.h2, dims.h1, 1.0 / std::sqrt(2.0 * double(dims.h1) * double(dims.h2)));
  p.layer2.bias = Tensor::zeros({dims.h2});
  // readout: Kaiming fan-in
  p.readout_w = normal_matrix(1, dims.h2, std::sqrt(2.0 / double(dims.h2)));
  p.readout_b = Tensor::zeros({1});
  return p;
}

// ---------------------------------------------------------------------------
// single-point wrappers
// ---------------------------------------------------------------------------

namespace {

Var one_row(Graph& g, const std::vector<double>& coords) {
  return g.input(Tensor({1, coords.size()}, coords));
}

poincare::BallPoint row_to_point(const Tensor& t) {
  return poincare::BallPoint{t.data};
}

}  // namespace

poincare::BallPoint mobius_matvec(const Tensor& m, const poincare::BallPoint& x) {
  if (m.rank() != 2 || m.shape[1] != x.dim())
    throw std::runtime_error("mobius_matvec: shape mismatch");
  Graph g;
  Var out = mobius_matvec_rows(g.input(m), one_row(g, x.coords));
  return row_to_point(out.val());
}

poincare::BallPoint hyp_linear(const HypLinearParams& p,
                               const poincare::BallPoint& x) {
  if (p.weight.shape[1] != x.dim())
    throw std::runtime_error("hyp_linear: shape mismatch");
  Graph g;
  Var out = hyp_linear_rows(g.input(p.weight), g.input(p.bias),
                            one_row(g, x.coords));
  return row_to_point(out.val());
}

poincare::BallPoint hyp_encode(const HypEncoderParams& p, const Tensor& e) {
  if (e.numel() != p.layer1.weight.shape[1])
    throw std::runtime_error("hyp_encode: input dimension mismatch");
  Graph g;
  Var ev = g.input(Tensor({1, e.numel()}, e.data));
  Var out = hyp_encode_rows(g.input(p.layer1.weight), g.input(p.layer1.bias),
                            g.input(p.layer2.weight), g.input(p.layer2.bias),
                            ev);
  return row_to_point(out.val());
}

double classify(const HypEncoderParams& p, const poincare::BallPoint& h) {
  Graph g;
  Var out = classify_rows(g.input(p.readout_w), g.input(p.readout_b),
                          one_row(g, h.coords), false);
  return out.val().data[0];
}

}  // namespace phier::hypnet
