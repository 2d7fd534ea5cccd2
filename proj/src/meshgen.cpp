#include "occtip/meshgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Geometry>

#include "occtip/error.hpp"

namespace occtip::meshgen {

void validate(const TriangleMesh& mesh) {
  const auto n = mesh.vertices.size();
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    for (auto idx : face) {
      if (idx >= n) {
        fail(ErrorKind::InvalidMesh, "face " + std::to_string(f) + " references vertex " +
                                         std::to_string(idx) + " of " + std::to_string(n));
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      fail(ErrorKind::InvalidMesh, "face " + std::to_string(f) + " repeats a vertex index");
    }
  }
  if (mesh.has_colors() && mesh.vertex_colors.size() != n) {
    fail(ErrorKind::InvalidMesh, "vertex color count does not match vertex count");
  }
}

TriangleMesh normalize_mesh(const TriangleMesh& mesh) {
  if (mesh.faces.empty() || mesh.vertices.empty()) fail(ErrorKind::InvalidMesh, "mesh has no faces");
  validate(mesh);
  Vec3 lo = mesh.vertices.front();
  Vec3 hi = lo;
  for (const auto& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Vec3 center = 0.5 * (lo + hi);
  double radius = 0.0;
  for (const auto& v : mesh.vertices) radius = std::max(radius, (v - center).norm());
  if (!(radius > 0.0)) fail(ErrorKind::DegenerateMesh, "all vertices coincide");

  TriangleMesh out = mesh;
  for (auto& v : out.vertices) v = (v - center) / radius;
  return out;
}

// ---------------------------------------------------------------------------

Vec3 CameraPose::pixel_ray(int row, int col) const {
  const double tan_half = std::tan(0.5 * vertical_fov);
  const double aspect = static_cast<double>(width) / height;
  const double ndc_x = (2.0 * (col + 0.5) / width - 1.0) * aspect;
  const double ndc_y = 1.0 - 2.0 * (row + 0.5) / height;
  return forward + ndc_x * tan_half * right + ndc_y * tan_half * up;
}

CameraPose look_at(const Vec3& position, int width, int height, double vertical_fov, int view_id) {
  CameraPose pose;
  pose.position = position;
  pose.forward = (-position).normalized();
  pose.right = pose.forward.cross(Vec3::UnitZ()).normalized();
  pose.up = pose.right.cross(pose.forward);
  pose.vertical_fov = vertical_fov;
  pose.width = width;
  pose.height = height;
  pose.view_id = view_id;
  return pose;
}

std::vector<CameraPose> camera_ring(int width, int height, double vertical_fov) {
  constexpr double kPi = 3.14159265358979323846;
  constexpr double kDeg = kPi / 180.0;
  struct Ring {
    double elevation;
    double azimuth_offset;
  };
  const Ring rings[] = {{0.0, 0.0}, {45.0, 45.0}, {-45.0, 45.0}};
  std::vector<CameraPose> poses;
  poses.reserve(kNumViews);
  int view = 0;
  for (const auto& ring : rings) {
    for (int k = 0; k < 4; ++k) {
      const double az = (ring.azimuth_offset + 90.0 * k) * kDeg;
      const double el = ring.elevation * kDeg;
      Vec3 p(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      // exact zeros keep the equator ring at z = 0 and axis-aligned positions exact
      for (int i = 0; i < 3; ++i) {
        if (std::abs(p[i]) < 1e-15) p[i] = 0.0;
      }
      poses.push_back(look_at(kCameraRadius * p, width, height, vertical_fov, view++));
    }
  }
  return poses;
}

// ---------------------------------------------------------------------------

namespace {

struct ProjectedVertex {
  double px;     // pixel-space x (column)
  double py;     // pixel-space y (row)
  double inv_z;  // 1 / camera-space depth
};

}  // namespace

RenderResult rasterize(const TriangleMesh& mesh, const CameraPose& pose) {
  if (pose.width <= 0 || pose.height <= 0) fail(ErrorKind::InvalidConfig, "zero-resolution image");
  validate(mesh);
  const int w = pose.width;
  const int h = pose.height;
  const std::size_t npix = static_cast<std::size_t>(w) * h;

  RenderResult out;
  out.depth.width = out.color.width = w;
  out.depth.height = out.color.height = h;
  out.depth.values.assign(npix, kBackground);
  out.color.rgb.assign(npix, Rgb{0.0, 0.0, 0.0});
  out.color.alpha.assign(npix, 0);
  // z-buffer holds camera-space depth; converted to ray distance at the end
  std::vector<double> zbuf(npix, kBackground);

  const double tan_half = std::tan(0.5 * pose.vertical_fov);
  const double aspect = static_cast<double>(w) / h;
  constexpr double kNear = 1e-3;

  std::vector<ProjectedVertex> proj(mesh.vertices.size());
  std::vector<bool> in_front(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3 rel = mesh.vertices[i] - pose.position;
    const double zc = rel.dot(pose.forward);
    in_front[i] = zc > kNear;
    if (!in_front[i]) continue;
    const double ndc_x = rel.dot(pose.right) / (zc * tan_half * aspect);
    const double ndc_y = rel.dot(pose.up) / (zc * tan_half);
    proj[i] = {(ndc_x + 1.0) * 0.5 * w, (1.0 - ndc_y) * 0.5 * h, 1.0 / zc};
  }

  for (const auto& face : mesh.faces) {
    if (!in_front[face[0]] || !in_front[face[1]] || !in_front[face[2]]) continue;
    const ProjectedVertex& a = proj[face[0]];
    const ProjectedVertex& b = proj[face[1]];
    const ProjectedVertex& c = proj[face[2]];
    const double area = (b.px - a.px) * (c.py - a.py) - (b.py - a.py) * (c.px - a.px);
    if (std::abs(area) < 1e-14) continue;

    const double min_x = std::min({a.px, b.px, c.px});
    const double max_x = std::max({a.px, b.px, c.px});
    const double min_y = std::min({a.py, b.py, c.py});
    const double max_y = std::max({a.py, b.py, c.py});
    const int col0 = std::max(0, static_cast<int>(std::floor(min_x - 0.5)));
    const int col1 = std::min(w - 1, static_cast<int>(std::ceil(max_x - 0.5)));
    const int row0 = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
    const int row1 = std::min(h - 1, static_cast<int>(std::ceil(max_y - 0.5)));
    // inclusive coverage so shared edges never leave cracks
    constexpr double kEdgeTol = -1e-9;

    for (int row = row0; row <= row1; ++row) {
      const double y = row + 0.5;
      for (int col = col0; col <= col1; ++col) {
        const double x = col + 0.5;
        const double w0 = (b.px - x) * (c.py - y) - (b.py - y) * (c.px - x);
        const double w1 = (c.px - x) * (a.py - y) - (c.py - y) * (a.px - x);
        const double w2 = (a.px - x) * (b.py - y) - (a.py - y) * (b.px - x);
        const double l0 = w0 / area;
        const double l1 = w1 / area;
        const double l2 = w2 / area;
        if (l0 < kEdgeTol || l1 < kEdgeTol || l2 < kEdgeTol) continue;
        const double inv_z = l0 * a.inv_z + l1 * b.inv_z + l2 * c.inv_z;
        if (!(inv_z > 0.0)) continue;
        const double zc = 1.0 / inv_z;
        const std::size_t idx = static_cast<std::size_t>(row) * w + col;
        if (zc >= zbuf[idx]) continue;
        zbuf[idx] = zc;
        out.color.alpha[idx] = 1;
        if (mesh.has_colors()) {
          Rgb rgb{};
          for (int ch = 0; ch < 3; ++ch) {
            rgb[ch] = zc * (l0 * a.inv_z * mesh.vertex_colors[face[0]][ch] +
                            l1 * b.inv_z * mesh.vertex_colors[face[1]][ch] +
                            l2 * c.inv_z * mesh.vertex_colors[face[2]][ch]);
          }
          out.color.rgb[idx] = rgb;
        } else {
          out.color.rgb[idx] = {kMidGray, kMidGray, kMidGray};
        }
      }
    }
  }

  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const std::size_t idx = static_cast<std::size_t>(row) * w + col;
      if (zbuf[idx] == kBackground) continue;
      out.depth.values[idx] = zbuf[idx] * pose.pixel_ray(row, col).norm();
    }
  }
  return out;
}

PartialPointCloud backproject(const DepthImage& depth, const ColorImage& color,
                              const CameraPose& pose) {
  if (depth.width != color.width || depth.height != color.height ||
      depth.width != pose.width || depth.height != pose.height) {
    fail(ErrorKind::InvalidInput, "depth, color and camera resolutions differ");
  }
  PartialPointCloud cloud;
  cloud.view_id = pose.view_id;
  for (int row = 0; row < depth.height; ++row) {
    for (int col = 0; col < depth.width; ++col) {
      const std::size_t idx = static_cast<std::size_t>(row) * depth.width + col;
      const double d = depth.values[idx];
      if (!std::isfinite(d)) continue;
      const Vec3 dir = pose.pixel_ray(row, col).normalized();
      cloud.points.push_back(pose.position + d * dir);
      cloud.colors.push_back(color.rgb[idx]);
    }
  }
  if (cloud.points.empty()) fail(ErrorKind::EmptyCloud, "depth image has no foreground pixels");
  return cloud;
}

PartialPointCloud sample_points(const PartialPointCloud& cloud, std::size_t n, std::uint64_t seed) {
  if (n == 0) fail(ErrorKind::InvalidConfig, "sample count must be positive");
  if (cloud.points.empty()) fail(ErrorKind::EmptyCloud, "cannot sample an empty cloud");
  Rng rng(seed);
  const std::size_t total = cloud.size();
  std::vector<std::size_t> picks;
  picks.reserve(n);
  if (total >= n) {
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // partial Fisher-Yates
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, total - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    picks.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    for (std::size_t i = 0; i < n; ++i) picks.push_back(pick(rng));
  }

  PartialPointCloud out;
  out.view_id = cloud.view_id;
  out.points.reserve(n);
  for (auto i : picks) out.points.push_back(cloud.points[i]);
  if (cloud.has_colors()) {
    out.colors.reserve(n);
    for (auto i : picks) out.colors.push_back(cloud.colors[i]);
  }
  return out;
}

std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t samples, Rng& rng) {
  std::vector<double> cumulative;
  cumulative.reserve(mesh.faces.size());
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    const Vec3& a = mesh.vertices[f[0]];
    total += 0.5 * (mesh.vertices[f[1]] - a).cross(mesh.vertices[f[2]] - a).norm();
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) fail(ErrorKind::DegenerateMesh, "mesh has zero surface area");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    const double target = unit(rng) * total;
    auto it = std::lower_bound(cumulative.begin(), cumulative.end(), target);
    if (it == cumulative.end()) --it;
    const auto& f = mesh.faces[static_cast<std::size_t>(it - cumulative.begin())];
    double u = unit(rng);
    double v = unit(rng);
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const Vec3& a = mesh.vertices[f[0]];
    out.push_back(a + u * (mesh.vertices[f[1]] - a) + v * (mesh.vertices[f[2]] - a));
  }
  return out;
}

double visible_fraction(const TriangleMesh& mesh, const CameraPose& pose, const DepthImage& depth,
                        std::size_t samples, std::uint64_t seed) {
  Rng rng(seed);
  const auto points = sample_surface(mesh, samples, rng);
  const double tan_half = std::tan(0.5 * pose.vertical_fov);
  const double aspect = static_cast<double>(pose.width) / pose.height;
  std::size_t visible = 0;
  for (const auto& p : points) {
    const Vec3 rel = p - pose.position;
    const double zc = rel.dot(pose.forward);
    if (zc <= 0.0) continue;
    const double ndc_x = rel.dot(pose.right) / (zc * tan_half * aspect);
    const double ndc_y = rel.dot(pose.up) / (zc * tan_half);
    const int col = static_cast<int>(std::floor((ndc_x + 1.0) * 0.5 * pose.width));
    const int row = static_cast<int>(std::floor((1.0 - ndc_y) * 0.5 * pose.height));
    if (col < 0 || col >= pose.width || row < 0 || row >= pose.height) continue;
    const double d = depth.at(row, col);
    if (!std::isfinite(d)) continue;
    // one-pixel slack for sloped surfaces
    if (rel.norm() <= d * 1.01 + 0.02) ++visible;
  }
  return static_cast<double>(visible) / static_cast<double>(points.size());
}

}  // namespace occtip::meshgen
