#include "doctest.h"

#include <algorithm>
#include <limits>
#include <set>

#include "occtip/error.hpp"
#include "occtip/tokenizer.hpp"

using namespace occtip;
using namespace occtip::tokenizer;

namespace {

bool lex_less(const Vec3& a, const Vec3& b) {
  return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
}

// Evaluates every candidate against every chosen center at each step.
std::vector<Vec3> brute_fps(const std::vector<Vec3>& pts, int s) {
  std::vector<Vec3> chosen;
  Vec3 first = pts[0];
  for (const auto& p : pts) if (lex_less(p, first)) first = p;
  chosen.push_back(first);
  while (static_cast<int>(chosen.size()) < s) {
    double best = -1;
    Vec3 pick;
    for (const auto& p : pts) {
      double d = std::numeric_limits<double>::infinity();
      for (const auto& c : chosen) d = std::min(d, (p - c).squaredNorm());
      if (d > best || (d == best && lex_less(p, pick))) {
        best = d;
        pick = p;
      }
    }
    chosen.push_back(pick);
  }
  return chosen;
}

std::vector<Vec3> random_points(int n, Rng& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  return pts;
}

meshgen::PartialPointCloud as_cloud(const std::vector<Vec3>& pts, Rng& rng) {
  std::uniform_real_distribution<double> c(0, 1);
  meshgen::PartialPointCloud cloud;
  cloud.points = pts;
  for (std::size_t i = 0; i < pts.size(); ++i) cloud.colors.push_back({c(rng), c(rng), c(rng)});
  return cloud;
}

}  // namespace

TEST_CASE("fps on three collinear points") {
  const std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0.5, 0, 0)};
  const auto idx = farthest_point_sampling(pts, 2);
  REQUIRE(idx.size() == 2);
  CHECK(idx[0] == 0);
  CHECK(idx[1] == 1);
}

TEST_CASE("fps matches the brute-force rule") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pts = random_points(60, rng);
    const auto idx = farthest_point_sampling(pts, 12);
    const auto expected = brute_fps(pts, 12);
    for (int i = 0; i < 12; ++i) CHECK(pts[idx[static_cast<std::size_t>(i)]] == expected[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("fps exhausts the cloud and cycles past it") {
  Rng rng(2);
  const auto pts = random_points(10, rng);
  const auto all = farthest_point_sampling(pts, 10);
  CHECK(std::set<std::uint32_t>(all.begin(), all.end()).size() == 10);
  const auto more = farthest_point_sampling(pts, 13);
  CHECK(more.size() == 13);
  CHECK(more[10] == more[0]);
  CHECK_THROWS_AS(farthest_point_sampling({}, 3), Error);
}

TEST_CASE("fps is independent of input order") {
  Rng rng(4);
  auto pts = random_points(80, rng);
  const auto a = farthest_point_sampling(pts, 16);
  std::vector<Vec3> ca;
  for (auto i : a) ca.push_back(pts[i]);
  std::shuffle(pts.begin(), pts.end(), rng);
  const auto b = farthest_point_sampling(pts, 16);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(pts[b[i]] == ca[i]);
}

TEST_CASE("knn grouping") {
  Rng rng(6);
  SUBCASE("k = 1 is the center itself") {
    const auto pts = random_points(30, rng);
    const auto cloud = as_cloud(pts, rng);
    const auto patches = make_patches(cloud, 8, 1);
    CHECK(patches.relative_points.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("collinear: center plus the nearer endpoint") {
    const std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(0.4, 0, 0), Vec3(1, 0, 0)};
    Mat centers(1, 3);
    centers << 0.4, 0, 0;
    const auto patches = knn_group(pts, {}, centers, 2);
    CHECK(patches.neighbor_indices == std::vector<std::uint32_t>{1, 0});
    CHECK(patches.relative_points(1, 0) == doctest::Approx(-0.4));
    CHECK(patches.patch_colors.size() == 0);
  }
  SUBCASE("relative offsets stay within the cloud diameter") {
    const auto pts = random_points(200, rng);
    double diameter = 0;
    for (const auto& a : pts)
      for (const auto& b : pts) diameter = std::max(diameter, (a - b).norm());
    const auto patches = make_patches(as_cloud(pts, rng), 32, 16);
    CHECK(patches.relative_points.rowwise().norm().maxCoeff() <= diameter);
    CHECK(patches.neighbor_indices.size() == 32u * 16u);
    for (int s = 0; s < 32; ++s) {
      const auto row = patches.neighbor_indices.begin() + s * 16;
      CHECK(pts[*row] == Vec3(patches.centers.row(s).transpose()));
    }
  }
  SUBCASE("errors") {
    const auto pts = random_points(5, rng);
    Mat centers = Mat::Zero(1, 3);
    CHECK_THROWS_AS(knn_group(pts, {}, centers, 6), Error);
    std::vector<meshgen::Rgb> two(2);
    CHECK_THROWS_AS(knn_group(pts, two, centers, 2), Error);
  }
}

TEST_CASE("mini-pointnet symmetries") {
  Rng rng(9);
  MiniPointNet net(16);
  net.init(rng);
  const int k = 8;
  Mat input(2 * k, MiniPointNet::kInput);
  fill_uniform(input, -1, 1, rng);
  input.bottomRows(k) = input.topRows(k);
  const Mat tokens = net.forward_features(input, 2, k);
  CHECK(tokens.row(0) == tokens.row(1));

  Mat permuted = input;
  for (int i = 0; i < k; ++i) permuted.row(k - 1 - i) = input.row(i);
  CHECK(net.forward_features(permuted, 2, k).row(0) == tokens.row(0));

  MiniPointNet zero(16);
  CHECK(zero.forward_features(input, 2, k).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(net.forward_features(Mat::Zero(5, 6), 2, k), Error);
}

TEST_CASE("dropped color becomes the constant") {
  Rng rng(11);
  const auto cloud = as_cloud(random_points(40, rng), rng);
  const auto patches = make_patches(cloud, 4, 5);
  const Mat with = MiniPointNet::features(patches, false);
  const Mat without = MiniPointNet::features(patches, true);
  CHECK(with.leftCols(3) == without.leftCols(3));
  CHECK((without.rightCols(3).array() == kColorConstant).all());
  meshgen::PartialPointCloud bare;
  bare.points = cloud.points;
  const Mat uncolored = MiniPointNet::features(make_patches(bare, 4, 5), false);
  CHECK((uncolored.rightCols(3).array() == kColorConstant).all());
}
