#include "phier/losses.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "phier/hypnet.hpp"

namespace phier::losses {

namespace nc = phier::numcore;

void LossWeights::validate(std::size_t max_hierarchy_depth) const {
  if (alpha < 0 || beta < 0 || lambda_margin < 0 || gamma_margin < 0)
    throw std::invalid_argument("LossWeights: coefficients and margins must be >= 0");
  double span = gamma_margin * static_cast<double>(max_hierarchy_depth);
  if (span >= 1.0 - poincare::kBallEps)
    std::cerr << "warning: norm margin gamma=" << gamma_margin
              << " times hierarchy depth " << max_hierarchy_depth
              << " does not fit inside the unit ball; chained norm "
                 "constraints will saturate\n";
}

double bce_loss(double logit, int label) {
  if (!std::isfinite(logit)) throw std::runtime_error("bce_loss: non-finite logit");
  double sp = std::max(logit, 0.0) + std::log1p(std::exp(-std::abs(logit)));
  return sp - logit * static_cast<double>(label);
}

double triplet_loss(const poincare::BallPoint& a, const poincare::BallPoint& p,
                    const poincare::BallPoint& n, double lambda) {
  double dap = poincare::distance(a, p);
  double dan = poincare::distance(a, n);
  return std::max(0.0, dap - dan + lambda);
}

double norm_reg_loss(const poincare::BallPoint& a, const poincare::BallPoint& b,
                     const poincare::BallPoint& c, double gamma) {
  double na = poincare::norm(a.coords);
  double nb = poincare::norm(b.coords);
  double nci = poincare::norm(c.coords);
  return std::max(0.0, na + gamma - nb) + std::max(0.0, nb + gamma - nci);
}

double total_loss(double sup, double trip, double reg, const LossWeights& w) {
  return sup + w.alpha * trip + w.beta * reg;
}

Var bce_rows(Var logits, const std::vector<double>& labels) {
  nc::Graph& g = *logits.g;
  if (logits.val().numel() != labels.size())
    throw std::runtime_error("bce_rows: label count mismatch");
  Var y = g.input(nc::Tensor::vec(labels));
  Var per = nc::sub(nc::softplus(logits), nc::mul(logits, y));
  return nc::mean_all(per);
}

namespace {

struct GatheredTriples {
  Var a, p, n;         // anchor / positive / negative rows
  Var lo, mid, hi;     // least / middle / most specific rows
};

GatheredTriples gather(Var h, const std::vector<TripletAssign>& triples) {
  std::vector<std::size_t> ia, ip, in, il, im, is;
  for (const auto& t : triples) {
    ia.push_back(t.anchor);
    ip.push_back(t.positive);
    in.push_back(t.negative);
    il.push_back(t.least);
    im.push_back(t.middle);
    is.push_back(t.most);
  }
  return {nc::gather_rows(h, ia), nc::gather_rows(h, ip),
          nc::gather_rows(h, in), nc::gather_rows(h, il),
          nc::gather_rows(h, im), nc::gather_rows(h, is)};
}

}  // namespace

Var triplet_rows(Var h, const std::vector<TripletAssign>& triples,
                 double lambda, bool euclidean_metric) {
  if (triples.empty())
    throw std::runtime_error("triplet_rows: no triples (caller must skip)");
  GatheredTriples gt = gather(h, triples);
  Var dap = euclidean_metric ? hypnet::euclidean_distance_rows(gt.a, gt.p)
                             : hypnet::distance_rows(gt.a, gt.p);
  Var dan = euclidean_metric ? hypnet::euclidean_distance_rows(gt.a, gt.n)
                             : hypnet::distance_rows(gt.a, gt.n);
  Var hinge = nc::relu(nc::add_scalar(nc::sub(dap, dan), lambda));
  return nc::mean_all(hinge);
}

Var norm_reg_rows(Var h, const std::vector<TripletAssign>& triples,
                  double gamma) {
  if (triples.empty())
    throw std::runtime_error("norm_reg_rows: no triples (caller must skip)");
  GatheredTriples gt = gather(h, triples);
  Var na = hypnet::rows_norm(gt.lo);
  Var nb = hypnet::rows_norm(gt.mid);
  Var ncr = hypnet::rows_norm(gt.hi);
  Var h1 = nc::relu(nc::add_scalar(nc::sub(na, nb), gamma));
  Var h2 = nc::relu(nc::add_scalar(nc::sub(nb, ncr), gamma));
  return nc::mean_all(nc::add(h1, h2));
}

Var total_rows(nc::Graph& g, Var sup, Var trip, Var reg, const LossWeights& w) {
  (void)g;
  Var out = sup;
  if (trip.g != nullptr) out = nc::add(out, nc::mul_scalar(trip, w.alpha));
  if (reg.g != nullptr) out = nc::add(out, nc::mul_scalar(reg, w.beta));
  return out;
}

}  // namespace phier::losses
