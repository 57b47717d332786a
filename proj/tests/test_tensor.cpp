#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "cstseld/nn.hpp"
#include "cstseld/tensor.hpp"
#include "support.hpp"

using cst::Shape;
using cst::Tensor;

TEST_CASE("unfold matches the declared packing") {
  // frozen case from the reference oracle: [1,2,2] -> [4,1,1]
  Tensor<double> x(Shape{1, 2, 2}, {1, 2, 3, 4});
  auto u = cst::unfold(x, 2, 2);
  CHECK(u.shape() == Shape{4, 1, 1});
  CHECK(u.values() == std::vector<double>{1, 2, 3, 4});

  auto back = cst::fold(u, 2, 2);
  CHECK(back.shape() == Shape{1, 2, 2});
  CHECK(back.values() == x.values());

  // identity kernel
  auto id = cst::unfold(x, 1, 1);
  CHECK(id.shape() == x.shape());
  CHECK(id.values() == x.values());

  // shape arithmetic
  Tensor<double> y(Shape{2, 4, 4});
  CHECK(cst::unfold(y, 2, 2).shape() == Shape{8, 2, 2});

  std::mt19937_64 rng(7);
  Tensor<double> z(Shape{3, 6, 8}, testsupport::random_vector(3 * 6 * 8, rng));
  auto uz = cst::unfold(z, 3, 4);
  CHECK(uz.values() == testsupport::reference_unfold(z.values(), 3, 6, 8, 3, 4));
}

TEST_CASE("fold is the exact inverse of unfold (property, 1000 cases)") {
  std::mt19937_64 rng(1234);
  std::uniform_int_distribution<int> small(1, 4);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::int64_t C = small(rng);
    const std::int64_t kt = small(rng), kf = small(rng);
    const std::int64_t T = kt * small(rng), F = kf * small(rng);
    Tensor<double> x(Shape{C, T, F},
                     testsupport::random_vector(static_cast<std::size_t>(C * T * F), rng));
    auto rt = cst::fold(cst::unfold(x, kt, kf), kt, kf);
    REQUIRE(rt.shape() == x.shape());
    REQUIRE(rt.values() == x.values());  // exact, no accumulation
  }
}

TEST_CASE("unfold rejects non-divisible extents naming the axis") {
  Tensor<double> x(Shape{1, 6, 8});
  CHECK_THROWS_WITH_AS(cst::unfold(x, 4, 2), doctest::Contains("time extent"), cst::ConfigError);
  CHECK_THROWS_WITH_AS(cst::unfold(x, 2, 3), doctest::Contains("frequency extent"),
                       cst::ConfigError);
}

TEST_CASE("softmax_last rows are normalized and stabilized") {
  SUBCASE("constant slice -> uniform") {
    auto s = cst::softmax_last(Tensor<double>::full(Shape{2, 5}, 3.25));
    for (double v : s.values()) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("analytic pair (0, ln 3) -> (0.25, 0.75)") {
    auto s = cst::softmax_last(Tensor<double>(Shape{1, 2}, {0.0, std::log(3.0)}));
    CHECK(s.values()[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s.values()[1] == doctest::Approx(0.75).epsilon(1e-12));
  }
  SUBCASE("random rows sum to 1 within 1e-12 and keep the argmax") {
    std::mt19937_64 rng(99);
    Tensor<double> x(Shape{17, 9}, testsupport::random_vector(17 * 9, rng, -30.0, 30.0));
    auto s = cst::softmax_last(x);
    for (std::int64_t r = 0; r < 17; ++r) {
      double sum = 0.0;
      std::size_t arg_in = 0, arg_out = 0;
      for (std::int64_t j = 0; j < 9; ++j) {
        const auto idx = static_cast<std::size_t>(r * 9 + j);
        sum += s.values()[idx];
        if (x.values()[idx] > x.values()[static_cast<std::size_t>(r * 9) + arg_in])
          arg_in = static_cast<std::size_t>(j);
        if (s.values()[idx] > s.values()[static_cast<std::size_t>(r * 9) + arg_out])
          arg_out = static_cast<std::size_t>(j);
      }
      CHECK(std::fabs(sum - 1.0) <= 1e-12);
      CHECK(arg_in == arg_out);
    }
  }
  SUBCASE("large magnitudes do not overflow") {
    auto s = cst::softmax_last(Tensor<double>(Shape{1, 3}, {1e4, 1e4 - 1.0, -1e4}));
    CHECK(std::isfinite(s.values()[0]));
    CHECK(s.values()[0] > s.values()[1]);
  }
}

TEST_CASE("backward populates leaf gradients") {
  SUBCASE("loss = sum(x) -> grad all ones") {
    Tensor<double> x(Shape{3, 4}, testsupport::random_vector(12, *new std::mt19937_64(3)));
    x.set_requires_grad();
    auto loss = cst::sum(x);
    loss.backward();
    for (double g : x.grad()) CHECK(g == doctest::Approx(1.0));
  }
  SUBCASE("loss = sum(x*x) -> grad = 2x") {
    std::mt19937_64 rng(4);
    Tensor<double> x(Shape{5}, testsupport::random_vector(5, rng));
    x.set_requires_grad();
    auto loss = cst::sum(cst::mul(x, x));
    loss.backward();
    for (std::size_t i = 0; i < 5; ++i)
      CHECK(x.grad()[i] == doctest::Approx(2.0 * x.values()[i]).epsilon(1e-12));
  }
  SUBCASE("second backward without rebuilding is a usage error") {
    Tensor<double> x(Shape{2}, {1.0, 2.0});
    x.set_requires_grad();
    auto loss = cst::sum(x);
    loss.backward();
    CHECK_THROWS_AS(loss.backward(), std::logic_error);
  }
  SUBCASE("shared subgraphs accumulate exactly once per use") {
    Tensor<double> x(Shape{3}, {1.0, -2.0, 0.5});
    x.set_requires_grad();
    auto y = cst::add(x, x);  // dy/dx = 2
    auto loss = cst::sum(y);
    loss.backward();
    for (double g : x.grad()) CHECK(g == doctest::Approx(2.0));
  }
}

TEST_CASE("non-finite results raise a hard numeric error") {
  Tensor<double> big(Shape{2}, {1e200, 1e200});
  CHECK_THROWS_AS(cst::mul(big, big), cst::NumericError);
}

TEST_CASE("matmul agrees with a naive triple loop") {
  std::mt19937_64 rng(11);
  const std::int64_t m = 4, k = 5, n = 3;
  auto av = testsupport::random_vector(static_cast<std::size_t>(m * k), rng);
  auto bv = testsupport::random_vector(static_cast<std::size_t>(k * n), rng);
  std::vector<double> expect(static_cast<std::size_t>(m * n), 0.0);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t p = 0; p < k; ++p)
      for (std::int64_t j = 0; j < n; ++j)
        expect[static_cast<std::size_t>(i * n + j)] +=
            av[static_cast<std::size_t>(i * k + p)] * bv[static_cast<std::size_t>(p * n + j)];

  Tensor<double> a(Shape{m, k}, av), b(Shape{k, n}, bv);
  CHECK(testsupport::max_rel_err(cst::matmul(a, b).values(), expect) < 1e-12);

  // transpose flags hit the same answer
  Tensor<double> at(Shape{k, m});
  Tensor<double> bt(Shape{n, k});
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t p = 0; p < k; ++p)
      at.mutable_values()[static_cast<std::size_t>(p * m + i)] = av[static_cast<std::size_t>(i * k + p)];
  for (std::int64_t p = 0; p < k; ++p)
    for (std::int64_t j = 0; j < n; ++j)
      bt.mutable_values()[static_cast<std::size_t>(j * k + p)] = bv[static_cast<std::size_t>(p * n + j)];
  CHECK(testsupport::max_rel_err(cst::matmul(at, b, true, false).values(), expect) < 1e-12);
  CHECK(testsupport::max_rel_err(cst::matmul(a, bt, false, true).values(), expect) < 1e-12);
  CHECK(testsupport::max_rel_err(cst::matmul(at, bt, true, true).values(), expect) < 1e-12);

  // batched with shared right operand
  Tensor<double> abatch(Shape{2, m, k});
  std::copy(av.begin(), av.end(), abatch.mutable_values().begin());
  std::copy(av.begin(), av.end(),
            abatch.mutable_values().begin() + static_cast<std::ptrdiff_t>(m * k));
  auto out = cst::matmul(abatch, b);
  CHECK(out.shape() == Shape{2, m, n});
  std::vector<double> first(out.values().begin(), out.values().begin() + m * n);
  CHECK(testsupport::max_rel_err(first, expect) < 1e-12);
}

TEST_CASE("median and norm along an axis") {
  Tensor<double> x(Shape{2, 3}, {1.0, 5.0, 2.0, -1.0, 0.0, 4.0});
  auto med = cst::median_axis(x, 1);
  CHECK(med.shape() == Shape{2});
  CHECK(med.values()[0] == doctest::Approx(2.0));
  CHECK(med.values()[1] == doctest::Approx(0.0));

  auto med0 = cst::median_axis(x, 0);  // even count -> mean of middle two
  CHECK(med0.values()[0] == doctest::Approx(0.0));

  auto nrm = cst::norm_axis(Tensor<double>(Shape{2, 2}, {3.0, 4.0, 0.0, 0.0}), 1);
  CHECK(nrm.values()[0] == doctest::Approx(5.0));
  CHECK(nrm.values()[1] == doctest::Approx(0.0));
}

TEST_CASE("permute/reshape/concat round trips") {
  std::mt19937_64 rng(21);
  Tensor<double> x(Shape{2, 3, 4}, testsupport::random_vector(24, rng));
  auto p = cst::permute(x, {2, 0, 1});
  CHECK(p.shape() == Shape{4, 2, 3});
  auto back = cst::permute(p, {1, 2, 0});
  CHECK(back.values() == x.values());

  auto r = cst::reshape(x, Shape{6, 4});
  CHECK(r.values() == x.values());

  Tensor<double> a(Shape{2, 2}, {1, 2, 3, 4});
  Tensor<double> b(Shape{2, 1}, {9, 8});
  auto c = cst::concat<double>({a, b}, 1);
  CHECK(c.shape() == Shape{2, 3});
  CHECK(c.values() == std::vector<double>{1, 2, 9, 3, 4, 8});
}
