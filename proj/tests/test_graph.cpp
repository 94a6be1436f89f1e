#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "phier/graph.hpp"
#include "support/fd.hpp"

using namespace phier::numcore;
namespace ts = phier::testsupport;

namespace {

using ParamMap = std::map<std::string, Tensor>;

// squared sum pushes every output coordinate into the scalar objective
Var sq_sum(Var v) { return sum_all(square(v)); }

void expect_fd(const ts::BuildFn& build, const ParamMap& params,
               int probes = 25) {
  std::mt19937_64 rng(99);
  ts::FdResult r = ts::check_gradients(build, params, probes, rng);
  for (const auto& f : r.failures)
    MESSAGE("FD mismatch at ", f.param, "[", f.index, "]: analytic=",
            f.analytic, " fd=", f.fd);
  CHECK(r.ok());
  CHECK(r.checked > 0);
}

}  // namespace

TEST_CASE("grad_of: analytic gradient of sum(x^2) is 2x") {
  Tensor x0 = Tensor::vec({1.5, -2.0, 0.25});
  GradBundle gb = grad_of([&](Graph& g) {
    Var x = g.param("x", x0);
    return sum_all(square(x));
  });
  CHECK(gb.value.scalar_value() ==
        doctest::Approx(1.5 * 1.5 + 4.0 + 0.0625));
  for (std::size_t i = 0; i < x0.numel(); ++i)
    CHECK(gb.grads.at("x").data[i] == doctest::Approx(2.0 * x0.data[i]));
}

TEST_CASE("per-op finite-difference contract") {
  std::mt19937_64 rng(42);
  auto mat = [&](std::size_t r, std::size_t c, double s = 0.5) {
    return ts::random_tensor({r, c}, s, rng);
  };
  auto vec = [&](std::size_t n, double s = 0.5) {
    return ts::random_tensor({n}, s, rng);
  };

  SUBCASE("add/sub/mul/divide") {
    ParamMap p{{"a", mat(3, 4)}, {"b", mat(3, 4)}};
    expect_fd([](Graph& g, const ParamMap& p) {
      Var a = g.param("a", p.at("a"));
      Var b = g.param("b", p.at("b"));
      Var d = divide(a, add_scalar(square(b), 1.0));
      return sq_sum(add(sub(mul(a, b), d), a));
    }, p);
  }

  SUBCASE("recip/neg/scalar ops") {
    ParamMap p{{"a", mat(2, 3)}};
    expect_fd([](Graph& g, const ParamMap& p) {
      Var a = g.param("a", p.at("a"));
      Var r = recip(add_scalar(square(a), 0.7));
      return sq_sum(add_scalar(mul_scalar(add(r, neg(a)), 1.3), 0.2));
    }, p);
  }

  SUBCASE("tanh/sigmoid/softplus/relu") {
    ParamMap p{{"a", mat(3, 3, 1.0)}};
    expect_fd([](Graph& g, const ParamMap& p) {
      Var a = g.param("a", p.at("a"));
      return sq_sum(add(add(tanh(a), sigmoid(a)),
                        add(softplus(a), relu(add_scalar(a, 0.3)))));
    }, p);
  }

  SUBCASE("artanh/acosh/sqrt") {
    ParamMap p{{"a", mat(2, 4, 0.2)}};
    expect_fd([](Graph& g, const ParamMap& p) {
      Var a = g.param("a", p.at("a"));
      Var inside = tanh(a);                      // (-1, 1)
      Var above1 = add_scalar(square(a), 1.05);  // > 1
      return sq_sum(add(add(artanh(inside), acosh(above1)),
                        sqrt(add_scalar(square(a), 0.1))));
    }, p);
  }

  SUBCASE("maximum") {
    ParamMap p{{"a", mat(3, 3)}, {"b", mat(3, 3)}};
    expect_fd([](Graph& g, const ParamMap& p) {
      return sq_sum(maximum(g.param("a", p.at("a")), g.param("b", p.at("b"))));
    }, p);
  }

  SUBCASE("matmul / matmul_nt") {
    ParamMap p{{"a", mat(3, 5)}, {"b", mat(5, 4)}, {"c", mat(6, 4)}};
    expect_fd([](Graph& g, const ParamMap& p) {
      Var a = g.param("a", p.at("a"));
      Var b = g.param("b", p.at("b"));
      Var c = g.param("c", p.at("c"));
      return sq_sum(matmul_nt(matmul(a, b), c));
    }, p);
  }

  SUBCASE("mean_all and reductions over rows") {
    ParamMap p{{"a", mat(4, 6)}};
    expect_fd([](Graph& g, const ParamMap& p) {
      Var a = g.param("a", p.at("a"));
      Var mix = add(add(row_sum(a), row_min(a)),
                    add(row_max(a), row_dot(a, a)));
      return add(mean_all(a), sum_all(square(mix)));
    }, p);
  }

  SUBCASE("row_scale / outer_scale / add_row_broadcast") {
    ParamMap p{{"m", mat(4, 3)}, {"s", vec(4)}, {"v", vec(3)}};
    expect_fd([](Graph& g, const ParamMap& p) {
      Var m = g.param("m", p.at("m"));
      Var s = g.param("s", p.at("s"));
      Var v = g.param("v", p.at("v"));
      Var a = row_scale(m, s);
      Var b = outer_scale(s, v);
      return sq_sum(add_row_broadcast(add(a, b), v));
    }, p);
  }

  SUBCASE("concat_cols / gather_rows / select_rows / reshape") {
    ParamMap p{{"a", mat(4, 2)}, {"b", mat(4, 3)}};
    expect_fd([](Graph& g, const ParamMap& p) {
      Var a = g.param("a", p.at("a"));
      Var b = g.param("b", p.at("b"));
      Var cat = concat_cols(a, b);                        // 4 x 5
      Var gathered = gather_rows(cat, {0, 2, 2, 3});      // 4 x 5
      Var sel = select_rows({1, 0, 1, 0}, gathered, cat);
      return sq_sum(reshape(sel, {2, 10}));
    }, p);
  }

  SUBCASE("row_minmax_norm") {
    ParamMap p{{"a", mat(3, 8, 1.0)}};
    expect_fd([](Graph& g, const ParamMap& p) {
      return sq_sum(row_minmax_norm(g.param("a", p.at("a"))));
    }, p);
  }

  SUBCASE("row_ball_project on rows inside and outside the ball") {
    Tensor rows = Tensor::matrix(3, 2, {0.1, 0.2,    // inside
                                        2.0, 1.0,    // outside
                                        -0.9, 0.8}); // outside
    ParamMap p{{"a", rows}};
    expect_fd([](Graph& g, const ParamMap& p) {
      return sq_sum(row_ball_project(g.param("a", p.at("a")), 1e-5));
    }, p);
  }

  SUBCASE("upsample_rows") {
    ParamMap p{{"a", mat(2, 4 * 4, 1.0)}};
    expect_fd([](Graph& g, const ParamMap& p) {
      return sq_sum(upsample_rows(g.param("a", p.at("a")), 4, 4, 3));
    }, p);
  }

  SUBCASE("patchify / mask_channels") {
    // 2 images of 4x4x2
    ParamMap p{{"img", mat(2, 4 * 4 * 2, 0.8)}, {"mask", mat(2, 16, 0.8)}};
    expect_fd([](Graph& g, const ParamMap& p) {
      Var img = g.param("img", p.at("img"));
      Var mask = g.param("mask", p.at("mask"));
      Var masked = mask_channels(img, mask, 2);
      return sq_sum(patchify(masked, 4, 4, 2, 2, 2));
    }, p);
  }

  SUBCASE("cell_text_scores / add_cell_broadcast / cell_mean") {
    // 2 examples x 4 cells, feature dim 3
    ParamMap p{{"cells", mat(8, 3)}, {"txt", mat(2, 3)}, {"pos", mat(4, 3)}};
    expect_fd([](Graph& g, const ParamMap& p) {
      Var cells = g.param("cells", p.at("cells"));
      Var txt = g.param("txt", p.at("txt"));
      Var pos = g.param("pos", p.at("pos"));
      Var scored = cell_text_scores(cells, txt, 4);        // 2 x 4
      Var shifted = add_cell_broadcast(cells, pos, 4);     // 8 x 3
      Var pooled = cell_mean(shifted, 4);                  // 2 x 3
      return add(sq_sum(scored), sq_sum(pooled));
    }, p);
  }
}

TEST_CASE("heaviside is non-differentiable; stop_grad cuts flow") {
  Tensor x0 = Tensor::vec({0.4, -0.2});
  CHECK_THROWS_WITH_AS(
      grad_of([&](Graph& g) {
        Var x = g.param("x", x0);
        return sum_all(heaviside(x));
      }),
      doctest::Contains("non-differentiable"), std::runtime_error);

  GradBundle gb = grad_of([&](Graph& g) {
    Var x = g.param("x", x0);
    return sum_all(mul(x, stop_grad(square(x))));
  });
  // gradient sees stop_grad(x^2) as a constant: d/dx = x^2
  for (std::size_t i = 0; i < x0.numel(); ++i)
    CHECK(gb.grads.at("x").data[i] ==
          doctest::Approx(x0.data[i] * x0.data[i]));
}

TEST_CASE("backward requires a scalar root") {
  Graph g;
  Var x = g.param("x", Tensor::vec({1, 2}));
  CHECK_THROWS(g.backward(x));
}

TEST_CASE("values stay finite or ops throw") {
  Graph g;
  Var x = g.input(Tensor::vec({0.0}));
  CHECK_THROWS(recip(x));  // 1/0
}
