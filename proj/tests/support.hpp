// Shared test utilities: independent oracles and small helpers. Everything
// here is deliberately written against the math, not against the library
// internals, so it can catch implementation bugs.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "cstseld/tensor.hpp"

namespace testsupport {

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0,
                                         double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

// Central finite differences of a scalar-valued function at x.
inline std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double eps = 1e-4) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double fp = f(x);
    x[i] = orig - eps;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

// max_i |a_i - b_i| / max(1, |a_i|, |b_i|)
inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({1.0, std::fabs(a[i]), std::fabs(b[i])});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

// Reference unfold implementing the declared packing directly:
// out(c*kt*kf + i*kf + j, p, q) = in(c, p*kt+i, q*kf+j).
inline std::vector<double> reference_unfold(const std::vector<double>& in, std::int64_t C,
                                            std::int64_t T, std::int64_t F, std::int64_t kt,
                                            std::int64_t kf) {
  const std::int64_t gt = T / kt, gf = F / kf;
  std::vector<double> out(in.size());
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t i = 0; i < kt; ++i)
      for (std::int64_t j = 0; j < kf; ++j)
        for (std::int64_t p = 0; p < gt; ++p)
          for (std::int64_t q = 0; q < gf; ++q) {
            const std::int64_t oc = c * kt * kf + i * kf + j;
            out[static_cast<std::size_t>((oc * gt + p) * gf + q)] =
                in[static_cast<std::size_t>((c * T + p * kt + i) * F + (q * kf + j))];
          }
  return out;
}

}  // namespace testsupport
