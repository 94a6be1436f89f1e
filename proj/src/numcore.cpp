#include "phier/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#ifdef PHIER_USE_BLAS
#include <cstdlib>
#include <mutex>
extern "C" void dgemm_(const char* transa, const char* transb, const int* m,
                       const int* n, const int* k, const double* alpha,
                       const double* a, const int* lda, const double* b,
                       const int* ldb, const double* beta, double* c,
                       const int* ldc);
// Present in OpenBLAS; weak so other BLAS implementations still link.
extern "C" void openblas_set_num_threads(int) __attribute__((weak));

namespace {
// Reduction order must not depend on a thread pool, so BLAS runs
// single-threaded.
void blas_single_thread() {
  static std::once_flag once;
  std::call_once(once, [] {
    setenv("OPENBLAS_NUM_THREADS", "1", 0);
    if (openblas_set_num_threads) openblas_set_num_threads(1);
  });
}
}  // namespace
#endif

namespace phier::numcore {

namespace {

std::size_t product(const std::vector<std::size_t>& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         std::multiplies<>());
}

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (product(shape) != data.size())
    fail("Tensor: shape/data size mismatch");
}

Tensor Tensor::zeros(std::vector<std::size_t> s) {
  std::size_t n = product(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> s, double v) {
  std::size_t n = product(s);
  return Tensor(std::move(s), std::vector<double>(n, v));
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::vec(std::vector<double> d) {
  std::size_t n = d.size();
  return Tensor({n}, std::move(d));
}

Tensor Tensor::matrix(std::size_t r, std::size_t c, std::vector<double> d) {
  return Tensor({r, c}, std::move(d));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) fail("Tensor::rows: not rank 2");
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) fail("Tensor::cols: not rank 2");
  return shape[1];
}

double& Tensor::at2(std::size_t i, std::size_t j) {
  return data[i * shape[1] + j];
}

double Tensor::at2(std::size_t i, std::size_t j) const {
  return data[i * shape[1] + j];
}

double Tensor::scalar_value() const {
  if (numel() != 1) fail("Tensor::scalar_value: tensor is not a scalar");
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void ensure_all_finite(const Tensor& t, const char* op) {
  if (!t.all_finite())
    fail(std::string(op) + ": operation produced a non-finite value");
}

double artanh_clamped(double x) {
  if (x > 1.0 + kDomainTol || x < -1.0 - kDomainTol)
    fail("artanh: input " + std::to_string(x) + " outside (-1, 1)");
  double lim = 1.0 - kArtanhClamp;
  x = std::clamp(x, -lim, lim);
  return std::atanh(x);
}

double acosh_clamped(double x) {
  if (x < 1.0 - kDomainTol)
    fail("acosh: input " + std::to_string(x) + " below 1");
  return std::acosh(std::max(x, 1.0));
}

namespace {

template <typename F>
Tensor map1(const Tensor& t, F f, const char* op) {
  Tensor out = t;
  for (double& v : out.data) v = f(v);
  ensure_all_finite(out, op);
  return out;
}

template <typename F>
Tensor map2(const Tensor& a, const Tensor& b, F f, const char* op) {
  if (!a.same_shape(b)) fail(std::string(op) + ": shape mismatch");
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = f(a.data[i], b.data[i]);
  ensure_all_finite(out, op);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return map2(a, b, [](double x, double y) { return x + y; }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return map2(a, b, [](double x, double y) { return x - y; }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return map2(a, b, [](double x, double y) { return x * y; }, "mul");
}

Tensor tanh(const Tensor& t) {
  return map1(t, [](double x) { return std::tanh(x); }, "tanh");
}

Tensor artanh(const Tensor& t) {
  return map1(t, [](double x) { return artanh_clamped(x); }, "artanh");
}

Tensor acosh(const Tensor& t) {
  return map1(t, [](double x) { return acosh_clamped(x); }, "acosh");
}

Tensor relu(const Tensor& t) {
  return map1(t, [](double x) { return x > 0.0 ? x : 0.0; }, "relu");
}

Tensor sigmoid(const Tensor& t) {
  return map1(t, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
              "sigmoid");
}

Tensor elementwise(EwOp op, const Tensor& a, const Tensor* b) {
  auto need2 = [&]() -> const Tensor& {
    if (b == nullptr) fail("elementwise: binary op requires two arguments");
    return *b;
  };
  switch (op) {
    case EwOp::tanh: return tanh(a);
    case EwOp::artanh: return artanh(a);
    case EwOp::acosh: return acosh(a);
    case EwOp::relu: return relu(a);
    case EwOp::sigmoid: return sigmoid(a);
    case EwOp::add: return add(a, need2());
    case EwOp::mul: return mul(a, need2());
    case EwOp::sub: return sub(a, need2());
  }
  fail("elementwise: unknown op");
}

void matmul_kernel(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n, bool accumulate) {
#ifdef PHIER_USE_BLAS
  if (m * k * n >= 4096) {
    blas_single_thread();
    const int mi = static_cast<int>(m), ki = static_cast<int>(k),
              ni = static_cast<int>(n);
    const double alpha = 1.0, beta = accumulate ? 1.0 : 0.0;
    // Row-major C = A*B via column-major C^T = B^T * A^T.
    dgemm_("N", "N", &ni, &mi, &ki, &alpha, b, &ni, a, &ki, &beta, c, &ni);
    return;
  }
#endif
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt_kernel(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n,
                      bool accumulate) {
#ifdef PHIER_USE_BLAS
  if (m * k * n >= 4096) {
    blas_single_thread();
    const int mi = static_cast<int>(m), ki = static_cast<int>(k),
              ni = static_cast<int>(n);
    const double alpha = 1.0, beta = accumulate ? 1.0 : 0.0;
    // Row-major C = A*B^T: column-major C^T = B * A^T, with B (n x k)
    // row-major seen as (k x n) column-major, so transa = "T".
    dgemm_("T", "N", &ni, &mi, &ki, &alpha, b, &ki, a, &ki, &beta, c, &ni);
    return;
  }
#endif
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

void matmul_tn_kernel(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n,
                      bool accumulate) {
#ifdef PHIER_USE_BLAS
  if (m * k * n >= 4096) {
    blas_single_thread();
    const int mi = static_cast<int>(m), ki = static_cast<int>(k),
              ni = static_cast<int>(n);
    const double alpha = 1.0, beta = accumulate ? 1.0 : 0.0;
    // Row-major C (k x n) = A^T B: column-major C^T = B^T * A.
    dgemm_("N", "T", &ni, &ki, &mi, &alpha, b, &ni, a, &ki, &beta, c, &ni);
    return;
  }
#endif
  if (!accumulate) std::fill(c, c + k * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) fail("matmul: operands must be rank 2");
  if (a.shape[1] != b.shape[0])
    fail("matmul: inner dimensions disagree (" + std::to_string(a.shape[1]) +
         " vs " + std::to_string(b.shape[0]) + ")");
  Tensor out = Tensor::zeros({a.shape[0], b.shape[1]});
  matmul_kernel(a.data.data(), b.data.data(), out.data.data(), a.shape[0],
                a.shape[1], b.shape[1], false);
  ensure_all_finite(out, "matmul");
  return out;
}

namespace {

Tensor reduce_all(ReduceOp op, const Tensor& t) {
  const auto& d = t.data;
  switch (op) {
    case ReduceOp::sum:
      return Tensor::scalar(std::accumulate(d.begin(), d.end(), 0.0));
    case ReduceOp::mean: {
      if (d.empty()) fail("reduce mean: empty input");
      return Tensor::scalar(std::accumulate(d.begin(), d.end(), 0.0) /
                            static_cast<double>(d.size()));
    }
    case ReduceOp::max: {
      if (d.empty()) fail("reduce max: empty input");
      return Tensor::scalar(*std::max_element(d.begin(), d.end()));
    }
    case ReduceOp::l2norm: {
      double s = 0.0;
      for (double v : d) s += v * v;
      return Tensor::scalar(std::sqrt(s));
    }
  }
  fail("reduce: unknown op");
}

}  // namespace

Tensor reduce(ReduceOp op, const Tensor& t, std::optional<std::size_t> axis) {
  if (!axis) return reduce_all(op, t);
  std::size_t ax = *axis;
  if (ax >= t.rank()) fail("reduce: axis out of range");
  std::size_t len = t.shape[ax];
  if (len == 0 && (op == ReduceOp::max || op == ReduceOp::mean))
    fail("reduce: max/mean over empty axis");

  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= t.shape[i];
  for (std::size_t i = ax + 1; i < t.rank(); ++i) inner *= t.shape[i];

  std::vector<std::size_t> oshape;
  for (std::size_t i = 0; i < t.rank(); ++i)
    if (i != ax) oshape.push_back(t.shape[i]);
  Tensor out = Tensor::zeros(oshape);

  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      double acc = (op == ReduceOp::max) ? -std::numeric_limits<double>::infinity()
                                         : 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        double v = t.data[(o * len + j) * inner + in];
        switch (op) {
          case ReduceOp::sum:
          case ReduceOp::mean: acc += v; break;
          case ReduceOp::max: acc = std::max(acc, v); break;
          case ReduceOp::l2norm: acc += v * v; break;
        }
      }
      if (op == ReduceOp::mean) acc /= static_cast<double>(len);
      if (op == ReduceOp::l2norm) acc = std::sqrt(acc);
      out.data[o * inner + in] = acc;
    }
  }
  ensure_all_finite(out, "reduce");
  return out;
}

Tensor sum(const Tensor& t, std::optional<std::size_t> axis) {
  return reduce(ReduceOp::sum, t, axis);
}
Tensor mean(const Tensor& t, std::optional<std::size_t> axis) {
  return reduce(ReduceOp::mean, t, axis);
}
Tensor max(const Tensor& t, std::optional<std::size_t> axis) {
  return reduce(ReduceOp::max, t, axis);
}
Tensor l2norm(const Tensor& t, std::optional<std::size_t> axis) {
  return reduce(ReduceOp::l2norm, t, axis);
}

void upsample_bilinear_kernel(const double* in, double* out, std::size_t h,
                              std::size_t w, std::size_t f) {
  const std::size_t oh = h * f, ow = w * f;
  auto src = [](std::size_t i, std::size_t lin, std::size_t lout) {
    // align-corners-true sampling position
    if (lout == 1) return 0.0;
    return static_cast<double>(i) * static_cast<double>(lin - 1) /
           static_cast<double>(lout - 1);
  };
  for (std::size_t oy = 0; oy < oh; ++oy) {
    double sy = src(oy, h, oh);
    std::size_t y0 = static_cast<std::size_t>(sy);
    std::size_t y1 = std::min(y0 + 1, h - 1);
    double fy = sy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double sx = src(ox, w, ow);
      std::size_t x0 = static_cast<std::size_t>(sx);
      std::size_t x1 = std::min(x0 + 1, w - 1);
      double fx = sx - static_cast<double>(x0);
      double v = (1 - fy) * ((1 - fx) * in[y0 * w + x0] + fx * in[y0 * w + x1]) +
                 fy * ((1 - fx) * in[y1 * w + x0] + fx * in[y1 * w + x1]);
      out[oy * ow + ox] = v;
    }
  }
}

void upsample_bilinear_backward_kernel(const double* gout, double* gin,
                                       std::size_t h, std::size_t w,
                                       std::size_t f) {
  const std::size_t oh = h * f, ow = w * f;
  auto src = [](std::size_t i, std::size_t lin, std::size_t lout) {
    if (lout == 1) return 0.0;
    return static_cast<double>(i) * static_cast<double>(lin - 1) /
           static_cast<double>(lout - 1);
  };
  for (std::size_t oy = 0; oy < oh; ++oy) {
    double sy = src(oy, h, oh);
    std::size_t y0 = static_cast<std::size_t>(sy);
    std::size_t y1 = std::min(y0 + 1, h - 1);
    double fy = sy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double sx = src(ox, w, ow);
      std::size_t x0 = static_cast<std::size_t>(sx);
      std::size_t x1 = std::min(x0 + 1, w - 1);
      double fx = sx - static_cast<double>(x0);
      double g = gout[oy * ow + ox];
      gin[y0 * w + x0] += (1 - fy) * (1 - fx) * g;
      gin[y0 * w + x1] += (1 - fy) * fx * g;
      gin[y1 * w + x0] += fy * (1 - fx) * g;
      gin[y1 * w + x1] += fy * fx * g;
    }
  }
}

Tensor upsample_bilinear(const Tensor& t, std::size_t factor) {
  if (t.rank() != 2) fail("upsample_bilinear: input must be rank 2");
  if (factor < 1) fail("upsample_bilinear: factor must be >= 1");
  if (t.shape[0] < 1 || t.shape[1] < 1)
    fail("upsample_bilinear: empty input");
  Tensor out = Tensor::zeros({t.shape[0] * factor, t.shape[1] * factor});
  upsample_bilinear_kernel(t.data.data(), out.data.data(), t.shape[0],
                           t.shape[1], factor);
  ensure_all_finite(out, "upsample_bilinear");
  return out;
}

}  // namespace phier::numcore
