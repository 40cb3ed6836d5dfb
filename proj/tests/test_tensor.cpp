#include <doctest.h>

#include <cmath>

#include "fpnr/common.hpp"
#include "fpnr/rng.hpp"
#include "fpnr/tensor.hpp"

using namespace fpnr;

TEST_CASE("tensor shape and data stay consistent") {
  Tensor t({2, 3, 4});
  CHECK(t.rank() == 3);
  CHECK(t.size() == 24);
  CHECK(t.extent(1) == 3);
  for (std::int64_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0);

  Tensor filled({2, 2}, 7.5);
  CHECK(filled[3] == 7.5);

  Tensor from_data({2, 2}, std::vector<double>{1, 2, 3, 4});
  CHECK(from_data.at(0, 1) == 2.0);
  CHECK(from_data.at(1, 0) == 3.0);
}

TEST_CASE("4-D indexing is row-major channel-planar") {
  Tensor t({2, 3, 4, 5});
  t.at(1, 2, 3, 4) = 9.0;
  CHECK(t[t.size() - 1] == 9.0);
  t.at(0, 0, 0, 1) = 3.0;
  CHECK(t[1] == 3.0);
  t.at(0, 1, 0, 0) = 4.0;
  CHECK(t[20] == 4.0);
}

TEST_CASE("invalid shapes are rejected as config errors") {
  CHECK_THROWS_AS(Tensor({0, 3}), Error);
  CHECK_THROWS_AS(Tensor({2, -1}), Error);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1.0}), Error);
  try {
    Tensor bad({-1});
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
}

TEST_CASE("all_finite flags non-finite entries") {
  Tensor t({2, 2}, 1.0);
  CHECK(t.all_finite());
  t[2] = std::nan("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("rng streams are deterministic and independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng s0 = Rng::derive(7, 0);
  Rng s1 = Rng::derive(7, 1);
  bool differ = false;
  for (int i = 0; i < 10; ++i) differ = differ || (s0.next_u64() != s1.next_u64());
  CHECK(differ);
}

TEST_CASE("rng uniform stays in bounds and uniform_int covers its range") {
  Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  bool seen[5] = {false, false, false, false, false};
  for (int i = 0; i < 500; ++i) seen[r.uniform_int(5)] = true;
  for (bool s : seen) CHECK(s);
}

TEST_CASE("rng normal matches requested moments on a large sample") {
  Rng r(11);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal(5.0, 2.0);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  const double stddev = std::sqrt(sum2 / n - mean * mean);
  CHECK(mean == doctest::Approx(5.0).epsilon(0.01));
  CHECK(stddev == doctest::Approx(2.0).epsilon(0.02));
}
