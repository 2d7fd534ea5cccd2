#include "doctest.h"

#include <cmath>

#include "occtip/error.hpp"
#include "occtip/ssm.hpp"
#include "oracles.hpp"

using namespace occtip;
using namespace occtip::ssm;

namespace {

S6Params random_params(int D, int N, Rng& rng) {
  S6Params p(D, N);
  p.init(rng);
  Mat noise(D, N);
  fill_uniform(noise, -0.5, 0.5, rng);
  p.a_log.value += noise;
  fill_uniform(p.d_skip.value, -1, 1, rng);
  return p;
}

/// Input-independent Δ, B, C: the scan collapses to a causal convolution.
void make_time_invariant(S6Params& p) {
  p.b_proj.weight.value.setZero();
  p.c_proj.weight.value.setZero();
  p.dt_down.weight.value.setZero();
}

}  // namespace

TEST_CASE("zoh discretization values") {
  auto d = zoh_discretize(-1.0, 1.0, std::log(2.0));
  CHECK(d.a_bar == doctest::Approx(0.5).epsilon(1e-15));
  d = zoh_discretize(-2.0, 3.0, 0.5);
  CHECK(d.a_bar == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(d.b_bar == 1.5);
  // the simplified input term differs from the exact one by O(dt²)
  const double exact = zoh_exact_b(-2.0, 3.0, 0.5);
  CHECK(exact == doctest::Approx(1.5 * (1 - std::exp(-1.0))).epsilon(1e-12));
  CHECK(std::abs(exact - d.b_bar) > 0.5);
  const double small = 1e-6;
  d = zoh_discretize(-2.0, 3.0, small);
  CHECK(d.a_bar == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(d.b_bar < 1e-5);
  CHECK_THROWS_AS(zoh_discretize(-1, 1, 0), Error);
  CHECK_THROWS_AS(zoh_discretize(1, 1, 0.1), Error);
}

TEST_CASE("hand-unrolled single-state recurrence") {
  S6Params p(1, 1);
  p.a_log.value(0, 0) = 0.0;  // A = -1
  p.b_proj.weight.value.setZero();
  p.b_proj.bias.value(0, 0) = 1.0 / std::log(2.0);
  p.c_proj.weight.value.setZero();
  p.c_proj.bias.value(0, 0) = 1.0;
  p.dt_down.weight.value.setZero();
  p.dt_up.weight.value.setZero();
  p.dt_up.bias.value(0, 0) = softplus_inverse(std::log(2.0));
  p.d_skip.value.setZero();
  Mat x(3, 1);
  x << 1, 0, 0;
  const Mat y = selective_scan(x, p);
  CHECK(y(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(y(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(y(2, 0) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("zero input gives zero output") {
  Rng rng(2);
  const auto p = random_params(6, 4, rng);
  CHECK(selective_scan(Mat::Zero(20, 6), p).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scan matches the naive recurrence") {
  Rng rng(5);
  double worst = 0;
  for (int trial = 0; trial < 40; ++trial) {
    std::uniform_int_distribution<int> len(1, 128), dim(1, 16), st(1, 8);
    const int L = len(rng), D = dim(rng), N = st(rng);
    const auto p = random_params(D, N, rng);
    Mat x(L, D);
    fill_uniform(x, -2, 2, rng);
    const Mat y = selective_scan(x, p);
    worst = std::max(worst, (y - oracle::naive_scan(x, p)).cwiseAbs().maxCoeff());
    worst = std::max(worst, (y - selective_scan_reference(x, p)).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("skip path can be disabled") {
  Rng rng(8);
  auto p = random_params(3, 2, rng);
  Mat x(10, 3);
  fill_uniform(x, -1, 1, rng);
  const Mat with = selective_scan(x, p);
  p.use_skip = false;
  const Mat without = selective_scan(x, p);
  CHECK((with - without - x * p.d_skip.value.row(0).asDiagonal()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((without - oracle::naive_scan(x, p)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("time-invariant scan equals its convolution kernel") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const int L = 40, D = 5, N = 6;
    auto p = random_params(D, N, rng);
    make_time_invariant(p);
    Mat x(L, D);
    fill_uniform(x, -1, 1, rng);
    const Mat y = selective_scan(x, p);
    for (int d = 0; d < D; ++d) {
      const double dt = softplus(p.dt_up.bias.value(0, d));
      std::vector<double> kernel(L, 0.0);
      for (int n = 0; n < N; ++n) {
        const double abar = std::exp(dt * p.a(d, n));
        const double bbar = dt * p.b_proj.bias.value(0, n);
        double power = 1.0;
        for (int k = 0; k < L; ++k) {
          kernel[k] += p.c_proj.bias.value(0, n) * power * bbar;
          power *= abar;
        }
      }
      for (int t = 0; t < L; ++t) {
        double conv = p.d_skip.value(0, d) * x(t, d);
        for (int j = 0; j <= t; ++j) conv += kernel[t - j] * x(j, d);
        CHECK(std::abs(conv - y(t, d)) <= 1e-10);
      }
    }
  }
}

TEST_CASE("shape and finiteness errors") {
  Rng rng(1);
  const auto p = random_params(4, 2, rng);
  CHECK_THROWS_AS(selective_scan(Mat::Zero(5, 3), p), Error);
  Mat x = Mat::Zero(5, 4);
  x(2, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(selective_scan(x, p), NumericalError);
}

TEST_CASE("parameter count matches the tensors") {
  Rng rng(1);
  auto p = random_params(32, 16, rng);
  ParamList list;
  p.collect("s6", list);
  std::size_t total = 0;
  for (const auto& np : list) total += static_cast<std::size_t>(np.param->size());
  CHECK(total == S6Params::count(32, 16));
  CHECK(p.dt_rank == 2);
}
