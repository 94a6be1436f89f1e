#pragma once

#include <cstddef>
#include <vector>

#include "phier/graph.hpp"
#include "phier/poincare.hpp"

namespace phier::losses {

using numcore::Var;

struct LossWeights {
  double alpha = 0.05;          // triplet coefficient
  double lambda_margin = 10.0;  // triplet margin (hyperbolic-distance units)
  double beta = 1.0;            // regularization coefficient
  double gamma_margin = 0.1;    // norm margin (ball-norm units)

  // Throws when a weight is negative; warns (stderr) when the chained norm
  // margins cannot fit inside the ball for the given hierarchy depth.
  void validate(std::size_t max_hierarchy_depth) const;
};

// One sampled triplet of batch rows, resolved by the relation oracle.
struct TripletAssign {
  std::size_t anchor, positive, negative;  // triplet-loss roles
  std::size_t least, middle, most;         // specificity ranking
};

// -[y log s(x) + (1-y) log(1-s(x))], evaluated as softplus(x) - x*y.
double bce_loss(double logit, int label);

// max(0, d(a,p) - d(a,n) + lambda), d = Poincare distance.
double triplet_loss(const poincare::BallPoint& a, const poincare::BallPoint& p,
                    const poincare::BallPoint& n, double lambda);

// max(0, |a| + gamma - |b|) + max(0, |b| + gamma - |c|), (a,b,c) ranked
// least -> most specific. Zero exactly when norms increase by >= gamma.
double norm_reg_loss(const poincare::BallPoint& a, const poincare::BallPoint& b,
                     const poincare::BallPoint& c, double gamma);

double total_loss(double sup, double trip, double reg, const LossWeights& w);

// ---- graph builders (batched) ----

// Mean BCE of logits (R) against 0/1 labels.
Var bce_rows(Var logits, const std::vector<double>& labels);
// Mean triplet hinge over the assignments; h holds one embedding per row.
Var triplet_rows(Var h, const std::vector<TripletAssign>& triples,
                 double lambda, bool euclidean_metric);
// Mean two-hinge norm penalty over the assignments' rankings.
Var norm_reg_rows(Var h, const std::vector<TripletAssign>& triples,
                  double gamma);
Var total_rows(numcore::Graph& g, Var sup, Var trip, Var reg,
               const LossWeights& w);

}  // namespace phier::losses
