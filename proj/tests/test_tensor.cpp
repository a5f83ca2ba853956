#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "neurossm/tensor.hpp"
#include "test_util.hpp"

using namespace neurossm;
using Catch::Approx;

TEST_CASE("matmul identity and hand arithmetic") {
  auto a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  auto eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  auto c = matmul(a, eye);
  REQUIRE(c.values()[0] == 1.0);
  REQUIRE(c.values()[1] == 2.0);
  REQUIRE(c.values()[2] == 3.0);
  REQUIRE(c.values()[3] == 4.0);

  auto row = Tensor::from_data({1, 2}, {1, 2});
  auto col = Tensor::from_data({2, 1}, {3, 4});
  REQUIRE(matmul(row, col).item() == Approx(11.0));
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  auto a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  REQUIRE_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(101);
  auto a = test_util::random_tensor({3, 4}, rng, 1.0, true);
  auto b = test_util::random_tensor({4, 2}, rng, 1.0, true);
  const double err = test_util::max_fd_rel_error(
      [&]() { return sum(matmul(a, b)); }, {a, b});
  REQUIRE(err < 1e-6);
  // gradient of sum(a·b) w.r.t. a is the broadcast column-sum of b
  a.zero_grad();
  b.zero_grad();
  backward(sum(matmul(a, b)));
  auto bv = b.values();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k) {
      double col_sum = bv[k * 2] + bv[k * 2 + 1];
      REQUIRE(a.grad()[i * 4 + k] == Approx(col_sum).margin(1e-12));
    }
}

TEST_CASE("elementwise fixed points") {
  auto zero = Tensor::scalar(0.0);
  REQUIRE(gelu(zero).item() == 0.0);
  REQUIRE(silu(zero).item() == 0.0);
  REQUIRE(sigmoid(zero).item() == Approx(0.5));
  // softplus stays positive deep in the left tail
  const double sp = softplus(Tensor::scalar(-20.0)).item();
  REQUIRE(sp == Approx(2.0611536203143807e-09).epsilon(1e-9));
  REQUIRE(sp > 0.0);
}

TEST_CASE("broadcasting covers row vectors and scalars, rejects the rest") {
  auto a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  auto row = Tensor::from_data({3}, {10, 20, 30});
  auto c = add(a, row);
  REQUIRE(c.values()[0] == 11.0);
  REQUIRE(c.values()[5] == 36.0);
  auto doubled = mul(a, Tensor::scalar(2.0));
  REQUIRE(doubled.values()[4] == 10.0);

  auto bad = Tensor::from_data({2}, {1, 2});
  REQUIRE_THROWS_AS(add(a, bad), ShapeError);
}

TEST_CASE("broadcast gradients reduce over the broadcast axis") {
  Rng rng(7);
  auto a = test_util::random_tensor({4, 3}, rng, 1.0, true);
  auto bias = test_util::random_tensor({3}, rng, 1.0, true);
  const double err = test_util::max_fd_rel_error(
      [&]() { return sum(mul(add(a, bias), add(a, bias))); }, {a, bias});
  REQUIRE(err < 1e-6);
}

TEST_CASE("layer_norm hand cases") {
  auto gain = Tensor::ones({2});
  auto bias = Tensor::zeros({2});
  auto x = Tensor::from_data({1, 2}, {1, 3});
  auto y = layer_norm(x, gain, bias, 0.0);
  REQUIRE(y.values()[0] == Approx(-1.0));
  REQUIRE(y.values()[1] == Approx(1.0));

  // constant row collapses to the bias
  auto gain3 = Tensor::from_data({3}, {2, 3, 4});
  auto bias3 = Tensor::from_data({3}, {-1, 0, 1});
  auto c = layer_norm(Tensor::from_data({1, 3}, {5, 5, 5}), gain3, bias3, 1e-5);
  REQUIRE(c.values()[0] == Approx(-1.0).margin(1e-9));
  REQUIRE(c.values()[1] == Approx(0.0).margin(1e-9));
  REQUIRE(c.values()[2] == Approx(1.0).margin(1e-9));
}

TEST_CASE("layer_norm output rows are standardized before the affine") {
  Rng rng(11);
  auto x = test_util::random_tensor({4, 8}, rng, 2.0);
  auto y = layer_norm(x, Tensor::ones({8}), Tensor::zeros({8}), 0.0);
  for (std::size_t t = 0; t < 4; ++t) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 8; ++c) mean += y.at(t, c);
    mean /= 8.0;
    for (std::size_t c = 0; c < 8; ++c)
      var += (y.at(t, c) - mean) * (y.at(t, c) - mean);
    var /= 8.0;
    REQUIRE(std::abs(mean) < 1e-12);
    REQUIRE(std::abs(var - 1.0) < 1e-6);
  }
}

TEST_CASE("layer_norm gradient matches finite differences") {
  Rng rng(13);
  auto x = test_util::random_tensor({3, 5}, rng, 1.0, true);
  auto gain = test_util::random_tensor({5}, rng, 0.5, true);
  auto bias = test_util::random_tensor({5}, rng, 0.5, true);
  const double err = test_util::max_fd_rel_error(
      [&]() { return sum(mul(layer_norm(x, gain, bias, 1e-5), x)); },
      {x, gain, bias});
  REQUIRE(err < 1e-6);
}

TEST_CASE("backward of sum gives all-ones; quadratic gives the input") {
  Rng rng(17);
  auto x = test_util::random_tensor({3, 4}, rng, 1.0, true);
  backward(sum(x));
  for (double g : x.grad()) REQUIRE(g == 1.0);
  x.zero_grad();

  backward(mul(sum(mul(x, x)), Tensor::scalar(0.5)));
  auto xv = x.values();
  for (std::size_t i = 0; i < x.numel(); ++i)
    REQUIRE(x.grad()[i] == Approx(xv[i]).margin(1e-12));
}

TEST_CASE("backward contract violations") {
  Rng rng(19);
  auto x = test_util::random_tensor({2, 2}, rng, 1.0, true);
  auto y = mul(x, x);
  REQUIRE_THROWS_AS(backward(y), ContractError);  // non-scalar root

  auto loss = sum(y);
  backward(loss);
  REQUIRE_THROWS_AS(backward(loss), ContractError);  // graph consumed
}

TEST_CASE("gradient accumulation is additive across graphs") {
  Rng rng(23);
  auto x = test_util::random_tensor({3, 3}, rng, 1.0, true);

  backward(sum(mul(x, x)));
  std::vector<double> g_f(x.grad().begin(), x.grad().end());
  x.zero_grad();
  backward(sum(silu(x)));
  std::vector<double> g_g(x.grad().begin(), x.grad().end());
  x.zero_grad();

  backward(add(sum(mul(x, x)), sum(silu(x))));
  for (std::size_t i = 0; i < x.numel(); ++i)
    REQUIRE(x.grad()[i] == Approx(g_f[i] + g_g[i]).margin(1e-12));
  x.zero_grad();

  // two separate backward passes accumulate into the same buffers
  backward(sum(mul(x, x)));
  backward(sum(silu(x)));
  for (std::size_t i = 0; i < x.numel(); ++i)
    REQUIRE(x.grad()[i] == Approx(g_f[i] + g_g[i]).margin(1e-12));
}

TEST_CASE("finite differences hold for a composed expression") {
  Rng rng(29);
  auto x = test_util::random_tensor({4, 6}, rng, 1.0, true);
  auto w = test_util::random_tensor({6, 6}, rng, 0.5, true);
  auto gain = test_util::random_tensor({6}, rng, 0.3, true);
  auto bias = test_util::random_tensor({6}, rng, 0.3, true);
  auto loss = [&]() {
    auto h = layer_norm(matmul(x, w), gain, bias, 1e-5);
    return sum(mul(gelu(h), sigmoid(sub(h, softplus(exp(mul(h, Tensor::scalar(0.1)))))))) ;
  };
  REQUIRE(test_util::max_fd_rel_error(loss, {x, w, gain, bias}) < 1e-4);
}

TEST_CASE("structural ops round trip values and gradients") {
  Rng rng(31);
  auto x = test_util::random_tensor({5, 3}, rng, 1.0, true);
  auto taken = take_rows(x, 3);
  REQUIRE(taken.rows() == 3);
  auto padded = pad_rows(taken, 5);
  REQUIRE(padded.rows() == 5);
  REQUIRE(padded.at(4, 0) == 0.0);
  auto reshaped = reshape(padded, {3, 5});
  REQUIRE(reshaped.numel() == 15);
  REQUIRE(test_util::max_fd_rel_error(
              [&]() {
                return sum(mul(reshape(pad_rows(take_rows(x, 3), 5), {15}),
                               reshape(pad_rows(take_rows(x, 3), 5), {15})));
              },
              {x}) < 1e-6);
}

TEST_CASE("checked mode rejects non-finite values at op boundaries") {
  CheckedModeGuard checked(true);
  auto big = Tensor::from_data({1}, {1e308});
  REQUIRE_THROWS_AS(exp(big), ContractError);
  {
    CheckedModeGuard unchecked(false);
    REQUIRE(std::isinf(exp(big).item()));
  }
}

TEST_CASE("mean_rows averages the time axis") {
  auto x = Tensor::from_data({2, 3}, {1, 2, 3, 5, 6, 7});
  auto m = mean_rows(x);
  REQUIRE(m.values()[0] == Approx(3.0));
  REQUIRE(m.values()[1] == Approx(4.0));
  REQUIRE(m.values()[2] == Approx(5.0));
}
