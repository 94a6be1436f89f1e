#pragma once

#include <cstddef>
#include <initializer_list>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace phier::numcore {

// Dense row-major tensor of 64-bit floats. Every public operation in this
// module checks its output for NaN/Inf and throws instead of returning one.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d);

  static Tensor zeros(std::vector<std::size_t> s);
  static Tensor full(std::vector<std::size_t> s, double v);
  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> d);
  static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> d);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at2(std::size_t i, std::size_t j);
  double at2(std::size_t i, std::size_t j) const;

  double scalar_value() const;
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
};

// Inputs slightly outside a function's domain (within kDomainTol) are clamped;
// anything further out is a domain error.
inline constexpr double kDomainTol = 1e-9;
inline constexpr double kArtanhClamp = 1e-15;  // artanh inputs -> [-1+c, 1-c]

double artanh_clamped(double x);
double acosh_clamped(double x);

void ensure_all_finite(const Tensor& t, const char* op);

// -- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor tanh(const Tensor& t);
Tensor artanh(const Tensor& t);
Tensor acosh(const Tensor& t);
Tensor relu(const Tensor& t);
Tensor sigmoid(const Tensor& t);

enum class EwOp { tanh, artanh, acosh, relu, sigmoid, add, mul, sub };
Tensor elementwise(EwOp op, const Tensor& a, const Tensor* b = nullptr);

// -- linear algebra ----------------------------------------------------------

// Standard matrix product of rank-2 tensors.
Tensor matmul(const Tensor& a, const Tensor& b);

// Shared kernel, also used by the autodiff graph. C (m x n) += or = A*B.
void matmul_kernel(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n, bool accumulate);
// C (m x n) = A (m x k) * B^T with B given as (n x k).
void matmul_nt_kernel(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n,
                      bool accumulate);
// C (k x n) = A^T * B with A (m x k), B (m x n).
void matmul_tn_kernel(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n,
                      bool accumulate);

// -- reductions ---------------------------------------------------------------

enum class ReduceOp { sum, mean, max, l2norm };

// axis == nullopt reduces over all elements to a scalar tensor.
Tensor reduce(ReduceOp op, const Tensor& t, std::optional<std::size_t> axis = {});
Tensor sum(const Tensor& t, std::optional<std::size_t> axis = {});
Tensor mean(const Tensor& t, std::optional<std::size_t> axis = {});
Tensor max(const Tensor& t, std::optional<std::size_t> axis = {});
Tensor l2norm(const Tensor& t, std::optional<std::size_t> axis = {});

// -- image ops ----------------------------------------------------------------

// Align-corners-true bilinear upsampling of a rank-2 H x W map by an integer
// factor: output corner samples coincide with input corners.
Tensor upsample_bilinear(const Tensor& t, std::size_t factor);

// Kernel shared with the graph node. in: h*w values; out: (h*f)*(w*f).
void upsample_bilinear_kernel(const double* in, double* out, std::size_t h,
                              std::size_t w, std::size_t f);
// Scatter-add the adjoint of the upsample back onto the input grid.
void upsample_bilinear_backward_kernel(const double* gout, double* gin,
                                       std::size_t h, std::size_t w,
                                       std::size_t f);

// Bundle of a forward value and the gradients of every named parameter that
// produced it.
struct GradBundle {
  Tensor value;
  std::map<std::string, Tensor> grads;
};

}  // namespace phier::numcore
