#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "occtip/tensor.hpp"

namespace occtip::meshgen {

using Rgb = std::array<double, 3>;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> faces;
  /// Empty, or one RGB triple in [0,1] per vertex.
  std::vector<Rgb> vertex_colors;

  bool has_colors() const { return !vertex_colors.empty(); }
};

/// Throws InvalidMesh when a face references a missing vertex or repeats an
/// index, or when colors do not match the vertex count.
void validate(const TriangleMesh& mesh);

/// Centers on the bounding-box center and scales so the farthest vertex has
/// norm 1.
TriangleMesh normalize_mesh(const TriangleMesh& mesh);

struct CameraPose {
  Vec3 position;
  Vec3 forward;  // unit, points at the origin
  Vec3 right;
  Vec3 up;
  double vertical_fov;  // radians
  int width;
  int height;
  int view_id;

  /// Unnormalized ray direction through pixel center (row, col), in world
  /// coordinates. Its component along `forward` is 1.
  Vec3 pixel_ray(int row, int col) const;
};

inline constexpr int kNumViews = 12;
inline constexpr double kCameraRadius = 2.0;
/// 2·asin(1/2): the unit sphere seen from distance 2 exactly fills the frame.
inline constexpr double kDefaultFov = 1.0471975511965976;

/// Look-at pose toward the origin with world up +z.
CameraPose look_at(const Vec3& position, int width, int height, double vertical_fov, int view_id);

/// Twelve cameras on the radius-2 sphere: indices 0..3 on the equator at
/// azimuths 0/90/180/270°, 4..7 at +45° elevation and 8..11 at −45°, both
/// offset 45° in azimuth from the equator ring.
std::vector<CameraPose> camera_ring(int width = 128, int height = 128,
                                    double vertical_fov = kDefaultFov);

inline constexpr double kBackground = std::numeric_limits<double>::infinity();

struct DepthImage {
  int width = 0;
  int height = 0;
  /// Row-major distance along the view ray; +inf marks background.
  std::vector<double> values;

  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
};

struct ColorImage {
  int width = 0;
  int height = 0;
  std::vector<Rgb> rgb;
  /// 1 where a triangle covered the pixel, 0 for the transparent background.
  std::vector<std::uint8_t> alpha;
};

struct RenderResult {
  DepthImage depth;
  ColorImage color;
};

inline constexpr double kMidGray = 0.5;

/// Perspective z-buffer rasterization with inclusive pixel-center coverage
/// and perspective-correct interpolation of depth and vertex color.
RenderResult rasterize(const TriangleMesh& mesh, const CameraPose& pose);

struct PartialPointCloud {
  std::vector<Vec3> points;
  std::vector<Rgb> colors;  // empty or one per point
  int view_id = 0;

  std::size_t size() const { return points.size(); }
  bool has_colors() const { return !colors.empty(); }
};

/// A partial view plus the frozen-encoder features that stand in for the
/// rendered image and the captions of its object.
struct TripletRecord {
  int object_id = 0;
  int view_id = 0;
  PartialPointCloud point_cloud;
  Vec image_feature;
  Mat text_features;  // one caption feature per row
};

/// One point per finite-depth pixel, unprojected through the pinhole model.
PartialPointCloud backproject(const DepthImage& depth, const ColorImage& color,
                              const CameraPose& pose);

/// Exactly n points: uniform without replacement when the cloud has at least
/// n points, with replacement otherwise.
PartialPointCloud sample_points(const PartialPointCloud& cloud, std::size_t n,
                                std::uint64_t seed);

/// Fraction of the mesh surface (area-weighted Monte Carlo) that is visible
/// in the given depth render.
double visible_fraction(const TriangleMesh& mesh, const CameraPose& pose, const DepthImage& depth,
                        std::size_t samples, std::uint64_t seed);

/// Area-uniform surface samples.
std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t samples, Rng& rng);

// ---------------------------------------------------------------------------
// OBJ input

/// Parses the OBJ subset: `v x y z [r g b]`, `f` with 1-based or negative
/// indices in any of the v, v/vt, v//vn, v/vt/vn forms; polygons are
/// fan-triangulated. Everything else is ignored.
TriangleMesh parse_obj(const std::string& text);
TriangleMesh read_obj(const std::string& path);
std::string to_obj(const TriangleMesh& mesh);

// ---------------------------------------------------------------------------
// Procedural shapes

TriangleMesh make_box(double sx, double sy, double sz);
TriangleMesh make_uv_sphere(int stacks, int slices);
TriangleMesh make_cylinder(double radius, double height, int slices);
TriangleMesh make_cone(double radius, double height, int slices);
TriangleMesh make_torus(double major, double minor, int rings, int sides);
TriangleMesh make_octahedron(double sx, double sy, double sz);
TriangleMesh make_pyramid(double base, double height);
TriangleMesh make_capsule(double radius, double half_length, int stacks, int slices);

struct NamedMesh {
  std::string name;   // e.g. "cone_1"
  std::string label;  // e.g. "cone"
  TriangleMesh mesh;
};

/// Eight shape classes (box, sphere, cylinder, cone, torus, octahedron,
/// pyramid, capsule) with `instances` proportion variants each.
std::vector<NamedMesh> toy_shapes(int instances = 2);

}  // namespace occtip::meshgen
