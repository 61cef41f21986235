#include <cmath>
#include <vector>

#include "doctest.h"
#include "winmatch/gradcheck.hpp"
#include "winmatch/tensor.hpp"

using namespace winmatch;

namespace {

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace

TEST_CASE("matmul matches a triple-loop oracle") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
  Tensor p = matmul(a, b);

  // Independent accumulation of the same product.
  double oracle[2][2] = {};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) oracle[i][j] += a.at(i, k) * b.at(k, j);

  CHECK(p.at(0, 0) == oracle[0][0]);
  CHECK(p.at(0, 1) == oracle[0][1]);
  CHECK(p.at(1, 0) == oracle[1][0]);
  CHECK(p.at(1, 1) == oracle[1][1]);
  CHECK(p.at(0, 0) == 19.0);
  CHECK(p.at(0, 1) == 22.0);
  CHECK(p.at(1, 0) == 43.0);
  CHECK(p.at(1, 1) == 50.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 2});
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("transpose swaps the two axes") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor tt = transpose(t);
  REQUIRE(tt.shape == std::vector<int>{3, 2});
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) CHECK(tt.at(j, i) == t.at(i, j));
}

TEST_CASE("row softmax reproduces hand-computed probabilities") {
  Tensor t = Tensor::from({1, 2}, {0.0, std::log(2.0)});
  Tensor s = softmax_rows(t, 1.0);
  CHECK(near(s.at(0, 0), 1.0 / 3.0, 1e-12));
  CHECK(near(s.at(0, 1), 2.0 / 3.0, 1e-12));
}

TEST_CASE("row softmax rows sum to one and sharpen with temperature") {
  Rng rng(11);
  Tensor t = Tensor::randn({3, 5}, rng, 2.0);
  Tensor warm = softmax_rows(t, 1.0);
  for (int r = 0; r < 3; ++r) {
    double sum = 0.0;
    for (int c = 0; c < 5; ++c) sum += warm.at(r, c);
    CHECK(near(sum, 1.0, 1e-12));
  }
  // Dividing the temperature by two equals doubling the logits.
  Tensor sharp = softmax_rows(t, 0.5);
  Tensor doubled = softmax_rows(scale(t, 2.0), 1.0);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 5; ++c) CHECK(near(sharp.at(r, c), doubled.at(r, c), 1e-12));
}

TEST_CASE("logsumexp matches the direct formula and stays finite at large inputs") {
  Tensor t = Tensor::from({3}, {1, 2, 3});
  const double direct = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
  CHECK(near(logsumexp_all(t).value(), direct, 1e-12));

  Tensor big = Tensor::from({2}, {1000.0, 1000.0 + std::log(2.0)});
  CHECK(near(logsumexp_all(big).value(), 1000.0 + std::log(3.0), 1e-9));
}

TEST_CASE("mean over an axis averages and squeezes it") {
  Tensor t = Tensor::from({4}, {1, 2, 3, 4});
  CHECK(mean_axis(t, 0).value() == doctest::Approx(2.5).epsilon(1e-14));

  Tensor m = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor rows = mean_axis(m, 1);
  REQUIRE(rows.shape == std::vector<int>{2});
  CHECK(near(rows.at(0), 2.0, 1e-14));
  CHECK(near(rows.at(1), 5.0, 1e-14));
}

TEST_CASE("top-k indices order by value, ties toward the lower index") {
  std::vector<double> v = {3, 1, 3, 2};
  CHECK(topk_desc(v, 2) == std::vector<int>{0, 2});
  CHECK(topk_desc(v, 4) == std::vector<int>{0, 2, 3, 1});
}

TEST_CASE("row gather repeats rows and scatter-adds their gradients") {
  Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  Tensor g = gather_rows(x, {0, 0, 1});
  REQUIRE(g.shape == std::vector<int>{3, 2});
  CHECK(g.at(1, 0) == 1.0);
  CHECK(g.at(2, 1) == 4.0);

  backward(sum_squares(g));
  // Row 0 appears twice: d/dx = 2 * 2x; row 1 once: 2x.
  CHECK(near((*x.grad)[0], 4.0 * 1.0, 1e-12));
  CHECK(near((*x.grad)[1], 4.0 * 2.0, 1e-12));
  CHECK(near((*x.grad)[2], 2.0 * 3.0, 1e-12));
  CHECK(near((*x.grad)[3], 2.0 * 4.0, 1e-12));
}

TEST_CASE("backward through a sum of squares yields twice the input") {
  Tensor x = Tensor::from({3}, {1, -2, 0.5}, true);
  backward(sum_squares(x));
  for (int i = 0; i < 3; ++i) CHECK(near((*x.grad)[i], 2.0 * x.at(i), 1e-12));
}

TEST_CASE("gradients accumulate across sweeps until cleared") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  backward(sum_squares(x));
  backward(sum_squares(x));
  CHECK(near((*x.grad)[0], 4.0, 1e-12));
  x.zero_grad();
  CHECK((*x.grad)[0] == 0.0);
}

TEST_CASE("narrow slices a contiguous slab and concat undoes it") {
  Tensor t = Tensor::from({2, 3}, {0, 1, 2, 10, 11, 12});
  Tensor left = narrow(t, 1, 0, 1);
  Tensor right = narrow(t, 1, 1, 2);
  CHECK(left.at(1, 0) == 10.0);
  CHECK(right.at(0, 1) == 2.0);
  Tensor back = concat({left, right}, 1);
  REQUIRE(back.shape == t.shape);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) CHECK(back.at(i, j) == t.at(i, j));
}

TEST_CASE("reshape preserves row-major order") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = reshape(t, {3, 2});
  CHECK(r.at(0, 1) == 2.0);
  CHECK(r.at(2, 0) == 5.0);
  CHECK_THROWS_AS(reshape(t, {4, 2}), ShapeError);
}

TEST_CASE("elementwise helpers follow their scalar definitions") {
  Tensor a = Tensor::from({2}, {2, 8});
  Tensor b = Tensor::from({2}, {4, 2});
  CHECK(div(a, b).at(0) == 0.5);
  CHECK(div(a, b).at(1) == 4.0);
  CHECK(near(log_elem(Tensor::from({1}, {std::exp(1.5)})).at(0), 1.5, 1e-12));
  CHECK(scale(a, 3.0).at(1) == 24.0);
  CHECK(smul(a, Tensor::scalar(0.5)).at(0) == 1.0);

  const double x = 0.7;
  CHECK(near(silu(Tensor::from({1}, {x})).at(0), x / (1.0 + std::exp(-x)), 1e-12));
}

TEST_CASE("bias addition broadcasts one vector over every row") {
  Tensor t = Tensor::from({2, 2}, {0, 0, 1, 1});
  Tensor bias = Tensor::from({2}, {5, -5});
  Tensor out = add_bias_rows(t, bias);
  CHECK(out.at(0, 0) == 5.0);
  CHECK(out.at(1, 1) == -4.0);
}

TEST_CASE("suspended recording produces graph-free results") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  NoGradGuard ng;
  Tensor y = add(x, x);
  CHECK(y.node == nullptr);
  CHECK_FALSE(y.requires_grad);
}

TEST_CASE("finite-difference probes agree with the analytic gradients") {
  Rng rng(3);
  Tensor x = Tensor::randn({3, 3}, rng, 1.0);
  GradReport r = grad_check(
      "quadratic", [](const Tensor& t) { return sum_squares(t); }, x);
  CHECK(r.max_rel_error < 1e-6);

  Tensor y = Tensor::randn({2, 4}, rng, 1.0);
  GradReport s = grad_check(
      "softmax-combination",
      [](const Tensor& t) { return sum_squares(softmax_rows(t, 0.7)); }, y);
  CHECK(s.max_rel_error < 1e-4);
}

TEST_CASE("non-finite values are detected") {
  Tensor t = Tensor::from({2}, {1.0, std::nan("")});
  CHECK_THROWS_AS(assert_all_finite(t, "test"), NumericError);
}
