#include "doctest.h"

#include <cmath>

#include "occtip/align.hpp"
#include "occtip/error.hpp"

using namespace occtip;
using namespace occtip::align;

namespace {

const double kTwoTerm = 2.0 * std::log1p(std::exp(-1.0));  // 0.62652...

Mat random_unit(int rows, int cols, Rng& rng) {
  Mat m(rows, cols);
  fill_uniform(m, -1, 1, rng);
  return normalize_rows(m);
}

// Direct softmax evaluation, one row and one column at a time.
double literal_loss(const Mat& za, const Mat& zb, double tau) {
  const auto B = za.rows();
  double lab = 0, lba = 0;
  for (Eigen::Index i = 0; i < B; ++i) {
    double row = 0, col = 0;
    for (Eigen::Index j = 0; j < B; ++j) {
      row += std::exp(za.row(i).dot(zb.row(j)) / tau);
      col += std::exp(zb.row(i).dot(za.row(j)) / tau);
    }
    lab += za.row(i).dot(zb.row(i)) / tau - std::log(row);
    lba += zb.row(i).dot(za.row(i)) / tau - std::log(col);
  }
  return -0.5 * (lab + lba);
}

}  // namespace

TEST_CASE("closed-form pair losses") {
  Rng rng(1);
  const Mat one = random_unit(1, 8, rng);
  CHECK(cross_modal_loss(one, one, 0.07) == 0.0);

  const Mat eye = Mat::Identity(2, 2);
  CHECK(std::abs(cross_modal_loss(eye, eye, 1.0) - kTwoTerm) <= 1e-12);
  CHECK(kTwoTerm == doctest::Approx(0.62652).epsilon(1e-5));
  CHECK(cross_modal_loss(eye, eye, 1.0, Reduction::Mean) == doctest::Approx(kTwoTerm / 2));

  const Mat a = random_unit(5, 6, rng), b = random_unit(5, 6, rng);
  CHECK(cross_modal_loss(a, b, 0.3) == cross_modal_loss(b, a, 0.3));
  CHECK(cross_modal_loss(a, b, 0.3) == doctest::Approx(literal_loss(a, b, 0.3)).epsilon(1e-12));
}

TEST_CASE("total loss decomposes into four pair terms") {
  EmbeddingBatch same{Mat::Identity(2, 3), Mat::Identity(2, 3), Mat::Identity(2, 3), Mat::Identity(2, 3)};
  const auto t = total_loss(same, 1.0);
  CHECK(std::abs(t.total() - 4 * kTwoTerm) <= 1e-12);

  Rng rng(2);
  const Mat u = random_unit(1, 4, rng);
  CHECK(total_loss({u, u, u, u}, 0.1).total() == 0.0);

  EmbeddingBatch e{random_unit(4, 5, rng), random_unit(4, 5, rng), random_unit(4, 5, rng), random_unit(4, 5, rng)};
  const auto parts = total_loss(e, 0.2);
  CHECK(parts.point_image == cross_modal_loss(e.z_p, e.z_i, 0.2));
  CHECK(parts.point_text == cross_modal_loss(e.z_p, e.z_t, 0.2));
  CHECK(parts.image_text == cross_modal_loss(e.z_i, e.z_t, 0.2));
  CHECK(parts.mixed_text == cross_modal_loss(e.z_m, e.z_t, 0.2));
}

TEST_CASE("pair gradient against central differences") {
  Rng rng(3);
  const Mat a = random_unit(4, 3, rng), b = random_unit(4, 3, rng);
  const double tau = 0.4, h = 1e-6;
  for (auto red : {Reduction::Sum, Reduction::Mean}) {
    const auto g = cross_modal_loss_grad(a, b, tau, red);
    CHECK(g.value == doctest::Approx(cross_modal_loss(a, b, tau, red)));
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      Mat up = a, down = a;
      up.data()[i] += h;
      down.data()[i] -= h;
      const double num = (cross_modal_loss(up, b, tau, red) - cross_modal_loss(down, b, tau, red)) / (2 * h);
      CHECK(g.dza.data()[i] == doctest::Approx(num).epsilon(1e-6));
    }
    const double num_tau = (cross_modal_loss(a, b, tau + h, red) - cross_modal_loss(a, b, tau - h, red)) / (2 * h);
    CHECK(g.dtau == doctest::Approx(num_tau).epsilon(1e-6));
  }
}

TEST_CASE("projection heads") {
  Rng rng(4);
  ProjectionHead text(HeadKind::Text, 6);
  text.init_identity();
  const Mat x = random_unit(3, 6, rng);
  CHECK((text.project(x) - x).cwiseAbs().maxCoeff() < 1e-15);

  text.linear.init_uniform(rng);
  Mat raw(5, 6);
  fill_uniform(raw, -3, 3, rng);
  const Mat y = text.project(raw);
  for (Eigen::Index r = 0; r < y.rows(); ++r) CHECK(std::abs(y.row(r).norm() - 1.0) <= 1e-6);

  ProjectionHead mixed(HeadKind::Mixed, 6);
  mixed.init_identity();
  CHECK(mixed.in_dim() == 12);
  Mat cat(3, 12);
  cat << x, x;
  const Mat zm = mixed.project(cat);
  CHECK(zm.rows() == 3);
  CHECK(zm.cols() == 6);
  CHECK((zm - x).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(mixed.project(x), Error);
  CHECK_THROWS_AS(normalize_rows(Mat::Zero(2, 3)), NumericalError);
}

TEST_CASE("temperature clamp") {
  TemperatureParam t;
  CHECK(t.tau() == doctest::Approx(0.07).epsilon(1e-12));
  CHECK(t.in_range());
  t.log_tau.value(0, 0) = std::log(1e-4);
  CHECK(t.tau() == TemperatureParam::kMin);
  CHECK_FALSE(t.in_range());
  t.accumulate(5.0);
  CHECK(t.log_tau.grad(0, 0) == 0.0);
  t.log_tau.value(0, 0) = 3.0;
  CHECK(t.tau() == TemperatureParam::kMax);
  t.log_tau.value(0, 0) = std::log(0.2);
  t.accumulate(2.0);
  CHECK(t.log_tau.grad(0, 0) == doctest::Approx(0.4));
}
