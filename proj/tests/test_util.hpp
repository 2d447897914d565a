#ifndef APN_TESTS_TEST_UTIL_HPP_
#define APN_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <cstdint>

#include "apn/random.hpp"
#include "apn/tensor.hpp"

namespace apn::testing_util {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline double max_rel_error(const Tensor& a, const Tensor& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / d);
  }
  return worst;
}

}  // namespace apn::testing_util

#endif  // APN_TESTS_TEST_UTIL_HPP_
