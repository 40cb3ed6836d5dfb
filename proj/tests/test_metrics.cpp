#include <doctest.h>

#include <cmath>
#include <limits>

#include "fpnr/common.hpp"
#include "fpnr/metrics.hpp"
#include "fpnr/rng.hpp"

using namespace fpnr;

TEST_CASE("psnr of identical images is the infinity sentinel") {
  Tensor a({4, 4}, 17.0);
  CHECK(psnr(a, a) == std::numeric_limits<double>::infinity());
}

TEST_CASE("psnr closed-form checks") {
  Tensor ref({8, 8}, 100.0);
  Tensor off({8, 8}, 110.0);
  // uniform difference of 10 against a 255 range: 20*log10(255/10)
  CHECK(std::abs(psnr(ref, off) - 20.0 * std::log10(25.5)) < 1e-9);
  CHECK(std::abs(psnr(ref, off) - 28.130803608679) < 1e-9);

  // MSE equal to max_val^2 pins the formula at 0 dB
  Tensor zero({2, 2}, 0.0);
  Tensor peak({2, 2}, 255.0);
  CHECK(std::abs(psnr(zero, peak)) < 1e-12);
}

TEST_CASE("psnr is symmetric and strictly decreasing in MSE") {
  Rng rng(101);
  Tensor ref({16, 16});
  for (std::int64_t i = 0; i < ref.size(); ++i) ref[i] = rng.uniform(0.0, 255.0);

  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
    Tensor noisy = ref;
    Rng nr(7);  // same noise shape, scaled, so MSE grows monotonically
    for (std::int64_t i = 0; i < noisy.size(); ++i) noisy[i] += sigma * nr.normal();
    const double p = psnr(ref, noisy);
    CHECK(p < prev);
    CHECK(std::abs(p - psnr(noisy, ref)) < 1e-12);
    prev = p;
  }
}

TEST_CASE("psnr validates shapes and max_val") {
  Tensor a({3, 3}), b({3, 4});
  CHECK_THROWS_AS(psnr(a, b), Error);
  Tensor c({3, 3}, 1.0);
  CHECK_THROWS_AS(psnr(a, c, 0.0), Error);
  CHECK_THROWS_AS(psnr(a, c, -255.0), Error);
}

TEST_CASE("roughness hand evaluations") {
  Tensor flat({5, 7}, 42.0);
  CHECK(roughness(flat) == doctest::Approx(0.0).epsilon(1e-12));

  Tensor diag({2, 2}, std::vector<double>{1, 0, 0, 1});
  CHECK(std::abs(roughness(diag) - 2.0) < 1e-9);

  Tensor stripes({2, 2}, std::vector<double>{1, 0, 1, 0});
  CHECK(std::abs(roughness(stripes) - 1.0) < 1e-9);
}

TEST_CASE("roughness is scale invariant") {
  Rng rng(103);
  Tensor x({9, 11});
  for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(1.0, 255.0);
  const double base = roughness(x);
  for (double c : {2.0, 0.125, -3.0}) {
    Tensor scaled = x;
    for (std::int64_t i = 0; i < scaled.size(); ++i) scaled[i] *= c;
    CHECK(std::abs(roughness(scaled) - base) < 1e-12);
  }
}

TEST_CASE("iid noise raises roughness on a smooth image") {
  Tensor smooth({32, 32});
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) smooth.at(y, x) = 100.0 + 0.5 * y + 0.25 * x;
  const double base = roughness(smooth);
  int raised = 0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + seed);
    Tensor noisy = smooth;
    for (std::int64_t i = 0; i < noisy.size(); ++i) noisy[i] += rng.normal(0.0, 4.0);
    if (roughness(noisy) > base) ++raised;
  }
  CHECK(raised == 100);
}

TEST_CASE("roughness rejects degenerate inputs") {
  Tensor zero({4, 4}, 0.0);
  try {
    roughness(zero);
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::validation);
  }
  Tensor thin({1, 5}, 1.0);
  CHECK_THROWS_AS(roughness(thin), Error);
  Tensor rank1({5}, 1.0);
  CHECK_THROWS_AS(roughness(rank1), Error);
}

TEST_CASE("score bundles both metrics") {
  Rng rng(107);
  Tensor ref({8, 8});
  for (std::int64_t i = 0; i < ref.size(); ++i) ref[i] = rng.uniform(10.0, 200.0);
  Tensor noisy = ref;
  for (std::int64_t i = 0; i < noisy.size(); ++i) noisy[i] += rng.normal(0.0, 3.0);
  MetricReport r = score(ref, noisy);
  CHECK(std::abs(r.psnr_db - psnr(ref, noisy)) < 1e-12);
  CHECK(std::abs(r.roughness - roughness(noisy)) < 1e-12);
  CHECK_FALSE(r.frame_index.has_value());
}
