#include "phier/poincare.hpp"

#include <cmath>
#include <stdexcept>

#include "phier/numcore.hpp"

namespace phier::poincare {

namespace {

void check_dims(const std::vector<double>& a, const std::vector<double>& b,
                const char* op) {
  if (a.size() != b.size())
    throw std::runtime_error(std::string(op) + ": dimension mismatch");
}

}  // namespace

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  check_dims(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

BallPoint project(std::vector<double> raw) {
  for (double v : raw)
    if (!std::isfinite(v))
      throw std::runtime_error("project: non-finite coordinate");
  double n = norm(raw);
  double limit = 1.0 - kBallEps;
  if (n > limit) {
    double s = limit / n;
    for (double& v : raw) v *= s;
  }
  return BallPoint{std::move(raw)};
}

double conformal_factor(const BallPoint& x) {
  return 2.0 / (1.0 - dot(x.coords, x.coords));
}

BallPoint mobius_add(const BallPoint& x, const BallPoint& y) {
  check_dims(x.coords, y.coords, "mobius_add");
  double xy = dot(x.coords, y.coords);
  double xx = dot(x.coords, x.coords);
  double yy = dot(y.coords, y.coords);
  double cx = 1.0 + 2.0 * xy + yy;
  double cy = 1.0 - xx;
  double den = 1.0 + 2.0 * xy + xx * yy;
  std::vector<double> out(x.dim());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (cx * x.coords[i] + cy * y.coords[i]) / den;
  return project(std::move(out));
}

BallPoint exp_map(const BallPoint& z, const TangentVector& v) {
  check_dims(z.coords, v.coords, "exp_map");
  double nv = norm(v.coords);
  if (nv == 0.0) return z;
  double lam = conformal_factor(z);
  double t = std::tanh(lam * nv / 2.0) / nv;
  std::vector<double> step(v.dim());
  for (std::size_t i = 0; i < step.size(); ++i) step[i] = t * v.coords[i];
  return mobius_add(z, BallPoint{std::move(step)});
}

TangentVector log_map(const BallPoint& z, const BallPoint& y) {
  check_dims(z.coords, y.coords, "log_map");
  if (z.coords == y.coords)
    return TangentVector{std::vector<double>(z.dim(), 0.0)};
  std::vector<double> mz(z.dim());
  for (std::size_t i = 0; i < mz.size(); ++i) mz[i] = -z.coords[i];
  BallPoint u = mobius_add(BallPoint{std::move(mz)}, y);
  double nu = norm(u.coords);
  if (nu == 0.0) return TangentVector{std::vector<double>(z.dim(), 0.0)};
  double lam = conformal_factor(z);
  double t = (2.0 / lam) * numcore::artanh_clamped(nu) / nu;
  std::vector<double> out(u.dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t * u.coords[i];
  return TangentVector{std::move(out)};
}

double distance(const BallPoint& x, const BallPoint& y) {
  check_dims(x.coords, y.coords, "distance");
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.dim(); ++i) {
    double d = x.coords[i] - y.coords[i];
    d2 += d * d;
  }
  double ax = 1.0 - dot(x.coords, x.coords);
  double ay = 1.0 - dot(y.coords, y.coords);
  return numcore::acosh_clamped(1.0 + 2.0 * d2 / (ax * ay));
}

}  // namespace phier::poincare
