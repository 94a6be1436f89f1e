#pragma once

#include <vector>

namespace phier::poincare {

// Boundary clamp: every ball-valued operation projects its result so that
// the norm stays <= 1 - kBallEps.
inline constexpr double kBallEps = 1e-5;

// A point of the open unit ball (curvature fixed at 1).
struct BallPoint {
  std::vector<double> coords;
  std::size_t dim() const { return coords.size(); }
};

struct TangentVector {
  std::vector<double> coords;
  std::size_t dim() const { return coords.size(); }
};

double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm(const std::vector<double>& a);

// Rescale to norm 1 - kBallEps when outside; identity otherwise.
// Throws on non-finite input.
BallPoint project(std::vector<double> raw);

// lambda_x = 2 / (1 - |x|^2) >= 2
double conformal_factor(const BallPoint& x);

// ((1 + 2<x,y> + |y|^2) x + (1 - |x|^2) y) / (1 + 2<x,y> + |x|^2 |y|^2)
BallPoint mobius_add(const BallPoint& x, const BallPoint& y);

// exp_z(v) = z (+) tanh(lambda_z |v| / 2) v / |v|;  exp_z(0) := z
BallPoint exp_map(const BallPoint& z, const TangentVector& v);

// log_z(y) = (2/lambda_z) artanh(|(-z)(+)y|) (-z)(+)y / |(-z)(+)y|;
// log_z(z) := 0
TangentVector log_map(const BallPoint& z, const BallPoint& y);

// acosh(1 + 2 |x-y|^2 / ((1 - |x|^2)(1 - |y|^2)))
double distance(const BallPoint& x, const BallPoint& y);

}  // namespace phier::poincare
