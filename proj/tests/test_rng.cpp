#include <cmath>
#include <vector>

#include "doctest.h"
#include "eqmv/rng.hpp"

using namespace eqmv;

TEST_CASE("philox4x32-10 known-answer vectors") {
  // Reference vectors for the standard parameterization.
  const auto zero = Philox4x32::generate(0, 0, 0, 0, 0, 0);
  CHECK(zero.v[0] == 0x6627e8d5u);
  CHECK(zero.v[1] == 0xe169c58du);
  CHECK(zero.v[2] == 0xbc57ac4cu);
  CHECK(zero.v[3] == 0x9b00dbd8u);

  const auto ones = Philox4x32::generate(0xffffffffu, 0xffffffffu, 0xffffffffu,
                                         0xffffffffu, 0xffffffffu, 0xffffffffu);
  CHECK(ones.v[0] == 0x408f276du);
  CHECK(ones.v[1] == 0x41c83b0eu);
  CHECK(ones.v[2] == 0xa20bc7c6u);
  CHECK(ones.v[3] == 0x6d5451fdu);
}

TEST_CASE("normal streams are pure functions of their address") {
  NormalStream a(42, purpose::kSimulation, 7);
  NormalStream b(42, purpose::kSimulation, 7);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());

  NormalStream c(42, purpose::kSimulation, 8);
  NormalStream d(42, purpose::kFactor, 7);
  NormalStream e(43, purpose::kSimulation, 7);
  NormalStream base(42, purpose::kSimulation, 7);
  bool all_same_c = true, all_same_d = true, all_same_e = true;
  for (int i = 0; i < 16; ++i) {
    const double x = base.next();
    all_same_c &= (c.next() == x);
    all_same_d &= (d.next() == x);
    all_same_e &= (e.next() == x);
  }
  CHECK_FALSE(all_same_c);
  CHECK_FALSE(all_same_d);
  CHECK_FALSE(all_same_e);
}

TEST_CASE("normal stream moments") {
  const int n = 200000;
  NormalStream stream(1234, purpose::kSimulation, 0);
  double sum = 0.0, sum2 = 0.0, sum4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = stream.next();
    sum += z;
    sum2 += z * z;
    sum4 += z * z * z * z;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  const double kurt = sum4 / n;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(kurt - 3.0) < 5.0 * std::sqrt(96.0 / n));
}

TEST_CASE("pairwise sum is order-stable and exact on integers") {
  std::vector<double> values;
  for (int i = 1; i <= 1000; ++i) values.push_back(i);
  CHECK(pairwise_sum(values) == doctest::Approx(500500.0).epsilon(0));

  std::vector<double> tiny(4097, 0.1);
  const double once = pairwise_sum(tiny);
  CHECK(once == pairwise_sum(tiny));
}

TEST_CASE("parallel_for covers the range once for any worker count") {
  const std::size_t n = 10001;
  for (int threads : {1, 3, 8}) {
    std::vector<int> hits(n, 0);
    parallel_for(n, threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) ++hits[i];
    });
    for (std::size_t i = 0; i < n; ++i) REQUIRE(hits[i] == 1);
  }
}
