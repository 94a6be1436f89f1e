#pragma once

#include <cstdint>

#include "phier/graph.hpp"
#include "phier/numcore.hpp"
#include "phier/poincare.hpp"

namespace phier::hypnet {

using numcore::Graph;
using numcore::Tensor;
using numcore::Var;

// ---------------------------------------------------------------------------
// Batched Poincare-ball subgraphs. Every function takes rank-2 Vars whose
// rows are points (or tangent vectors) and appends the op to the row's graph.
// Row norms are smoothed with a tiny epsilon so the 0/0 limits of the closed
// forms stay finite on the tape; the limits themselves are exact.
// ---------------------------------------------------------------------------

Var rows_sqnorm(Var x);                 // (R x d) -> (R)
Var rows_norm(Var x);                   // sqrt(sqnorm + 1e-24)
Var ball_project_rows(Var x);           // clamp rows to norm <= 1 - kBallEps
Var mobius_add_rows(Var x, Var y);
Var expmap0_rows(Var v);
Var logmap0_rows(Var x);
Var expmap_rows(Var z, Var w);          // exp_z(w) per row
Var distance_rows(Var x, Var y);        // Poincare distance per row pair
Var euclidean_distance_rows(Var x, Var y);
// tanh((|Mx|/|x|) artanh(|x|)) Mx/|Mx| per row; m is the (out x in) matrix.
Var mobius_matvec_rows(Var m, Var x);

// ---------------------------------------------------------------------------
// Layer parameters
// ---------------------------------------------------------------------------

struct HypLinearParams {
  Tensor weight;  // out x in, Euclidean parameter
  Tensor bias;    // ball point of dimension out
};

struct HypEncoderParams {
  HypLinearParams layer1;  // in -> h1
  HypLinearParams layer2;  // h1 -> h2
  Tensor readout_w;        // 1 x h2
  Tensor readout_b;        // scalar
};

struct HypDims {
  std::size_t in = 256;
  std::size_t h1 = 256;
  std::size_t h2 = 128;
};

// Hyperbolic-layer weights ~ N(0, (2nm)^(-1/2)), ball biases zero, readout
// Kaiming fan-in. Deterministic in the seed.
HypEncoderParams init_params(const HypDims& dims, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Batched layer subgraphs. `weight`/`bias` are Vars of registered parameters.
// ---------------------------------------------------------------------------

// mobius_matvec followed by bias translation exp_u((lambda_0/lambda_u) log_0(b)).
Var hyp_linear_rows(Var weight, Var bias, Var x);
// exp_0 -> layer1 -> layer2. Vars: w1,b1,w2,b2.
Var hyp_encode_rows(Var w1, Var b1, Var w2, Var b2, Var e);
// Euclidean ablation head: relu(W1 x + b1) -> relu(W2 . + b2).
Var euclidean_encode_rows(Var w1, Var b1, Var w2, Var b2, Var e);
// logits = readout(log_0(h)) (or readout(h) when euclidean).
Var classify_rows(Var readout_w, Var readout_b, Var h, bool euclidean);

// ---------------------------------------------------------------------------
// Single-point operations (the batched subgraphs on one row).
// ---------------------------------------------------------------------------

poincare::BallPoint mobius_matvec(const Tensor& m, const poincare::BallPoint& x);
poincare::BallPoint hyp_linear(const HypLinearParams& p,
                               const poincare::BallPoint& x);
poincare::BallPoint hyp_encode(const HypEncoderParams& p, const Tensor& e);
double classify(const HypEncoderParams& p, const poincare::BallPoint& h);

}  // namespace phier::hypnet
