#pragma once

#include <functional>
#include <string>
#include <vector>

#include "phier/numcore.hpp"

namespace phier::numcore {

class Graph;

// Handle to a node in a Graph. Cheap to copy; valid for the graph's lifetime.
struct Var {
  Graph* g = nullptr;
  int id = -1;
  const Tensor& val() const;
};

// Reverse-mode tape. Ops evaluate eagerly at construction; backward() walks
// the tape in reverse. One graph per forward pass; parameters are named
// leaves whose gradients are collected into a GradBundle.
class Graph {
 public:
  using Backprop = std::function<void(Graph&, int self)>;

  Var input(Tensor t);
  Var param(const std::string& name, const Tensor& t);

  // Low-level node constructor used by the op layer.
  Var emit(Tensor value, std::vector<int> parents, Backprop back,
           bool differentiable = true, const char* opname = "");

  const Tensor& value(int id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  // Gradient buffer of a node, allocated (zeroed) on first touch.
  Tensor& grad_buf(int id);
  bool has_grad(int id) const { return !nodes_[id].grad.data.empty(); }

  // Backpropagate from a scalar root. Throws if the root is not a scalar or
  // if a non-differentiable op lies on a gradient path.
  void backward(Var root);

  // backward() + gradient collection for every named parameter.
  GradBundle grads(Var root);

  const Tensor& grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> parents;
    Backprop back;
    bool requires_grad = false;
    bool differentiable = true;
    std::string pname;
    const char* opname = "";
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, int>> params_;
  bool ran_backward_ = false;
};

// The spec-level gradient entry point: run a builder on a fresh graph and
// return the scalar value plus gradients of every parameter it registered.
GradBundle grad_of(const std::function<Var(Graph&)>& build);

// ---- elementwise / scalar ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var divide(Var a, Var b);
Var recip(Var a);
Var neg(Var a);
Var add_scalar(Var a, double c);
Var mul_scalar(Var a, double c);
Var tanh(Var a);
Var artanh(Var a);
Var acosh(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var sqrt(Var a);
Var square(Var a);
Var maximum(Var a, Var b);
// 0/1 step function; not differentiable (backward through it throws).
Var heaviside(Var a);
// Identity value with gradient flow cut.
Var stop_grad(Var a);

// ---- matrix ----
Var matmul(Var a, Var b);
// a (m x k) times b^T with b stored (n x k).
Var matmul_nt(Var a, Var b);

// ---- reductions ----
Var sum_all(Var a);
Var mean_all(Var a);

// ---- rows: batched helpers over rank-2 tensors ----
Var row_sum(Var m);                    // (R x C) -> (R)
Var row_dot(Var a, Var b);             // (R x C),(R x C) -> (R)
Var row_min(Var m);                    // (R x C) -> (R)
Var row_max(Var m);                    // (R x C) -> (R)
Var row_scale(Var m, Var s);           // rows scaled by s (R)
Var outer_scale(Var s, Var v);         // (R),(C) -> (R x C), rows s_r * v
Var add_row_broadcast(Var m, Var v);   // add v (C) to every row
Var concat_cols(Var a, Var b);
Var gather_rows(Var m, std::vector<std::size_t> idx);
// out row r = cond[r] != 0 ? a row r : b row r. cond is plain data.
Var select_rows(std::vector<int> cond, Var a, Var b);
Var reshape(Var a, std::vector<std::size_t> shape);

// Per-row (x - min) / (max - min); constant rows map to 0.5.
Var row_minmax_norm(Var m);
// Rows with norm > 1 - eps rescaled to that norm; others untouched.
Var row_ball_project(Var m, double eps);

// ---- grid / image ops (rows hold flattened H x W (x C) grids) ----
Var upsample_rows(Var m, std::size_t h, std::size_t w, std::size_t f);
// (R x H*W*C) image rows -> (R*gh*gw x ph*pw*C) patch rows.
Var patchify(Var img, std::size_t h, std::size_t w, std::size_t c,
             std::size_t ph, std::size_t pw);
// Multiply every channel of pixel p by mask[r, p].
Var mask_channels(Var img, Var mask, std::size_t channels);
// scores[r, g] = dot(p[r*G + g, :], t[r, :])
Var cell_text_scores(Var p, Var t, std::size_t cells);
// Add pos[g, :] to every row-block cell g: x[(r*G + g), :] += pos[g, :].
Var add_cell_broadcast(Var x, Var pos, std::size_t cells);
// Mean over the G cells of each example: (R*G x d) -> (R x d).
Var cell_mean(Var x, std::size_t cells);

}  // namespace phier::numcore
