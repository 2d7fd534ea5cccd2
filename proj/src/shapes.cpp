#include <cmath>
#include <utility>

#include "occtip/error.hpp"
#include "occtip/meshgen.hpp"

namespace occtip::meshgen {

namespace {

constexpr double kPi = 3.14159265358979323846;

using Face = std::array<std::uint32_t, 3>;

/// Surface of revolution about z. Profile entries with r == 0 collapse to a
/// single pole vertex.
TriangleMesh revolve(const std::vector<std::pair<double, double>>& profile, int slices) {
  if (slices < 3) fail(ErrorKind::InvalidConfig, "revolve needs at least 3 slices");
  TriangleMesh mesh;
  struct Level {
    bool pole;
    std::uint32_t first;
  };
  std::vector<Level> levels;
  for (const auto& [r, z] : profile) {
    const auto first = static_cast<std::uint32_t>(mesh.vertices.size());
    if (r == 0.0) {
      mesh.vertices.emplace_back(0.0, 0.0, z);
      levels.push_back({true, first});
    } else {
      for (int s = 0; s < slices; ++s) {
        const double phi = 2.0 * kPi * s / slices;
        mesh.vertices.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
      }
      levels.push_back({false, first});
    }
  }
  auto ring = [slices](const Level& l, int s) {
    return l.first + static_cast<std::uint32_t>(((s % slices) + slices) % slices);
  };
  for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
    const Level& lo = levels[i];
    const Level& hi = levels[i + 1];
    for (int s = 0; s < slices; ++s) {
      if (lo.pole && hi.pole) break;
      if (lo.pole) {
        mesh.faces.push_back(Face{lo.first, ring(hi, s + 1), ring(hi, s)});
      } else if (hi.pole) {
        mesh.faces.push_back(Face{ring(lo, s), ring(lo, s + 1), hi.first});
      } else {
        mesh.faces.push_back(Face{ring(lo, s), ring(lo, s + 1), ring(hi, s + 1)});
        mesh.faces.push_back(Face{ring(lo, s), ring(hi, s + 1), ring(hi, s)});
      }
    }
  }
  return mesh;
}

}  // namespace

TriangleMesh make_box(double sx, double sy, double sz) {
  TriangleMesh mesh;
  for (int i = 0; i < 8; ++i) {
    mesh.vertices.emplace_back((i & 1 ? 0.5 : -0.5) * sx, (i & 2 ? 0.5 : -0.5) * sy,
                               (i & 4 ? 0.5 : -0.5) * sz);
  }
  // outward-facing quads, split along a diagonal
  const std::uint32_t quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                                     {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    mesh.faces.push_back(Face{q[0], q[1], q[2]});
    mesh.faces.push_back(Face{q[0], q[2], q[3]});
  }
  return mesh;
}

TriangleMesh make_uv_sphere(int stacks, int slices) {
  std::vector<std::pair<double, double>> profile;
  for (int i = 0; i <= stacks; ++i) {
    const double theta = kPi * i / stacks;
    const double r = i == 0 || i == stacks ? 0.0 : std::sin(theta);
    profile.emplace_back(r, -std::cos(theta));
  }
  return revolve(profile, slices);
}

TriangleMesh make_cylinder(double radius, double height, int slices) {
  const double h = 0.5 * height;
  return revolve({{0.0, -h}, {radius, -h}, {radius, h}, {0.0, h}}, slices);
}

TriangleMesh make_cone(double radius, double height, int slices) {
  const double h = 0.5 * height;
  return revolve({{0.0, -h}, {radius, -h}, {0.0, h}}, slices);
}

TriangleMesh make_capsule(double radius, double half_length, int stacks, int slices) {
  std::vector<std::pair<double, double>> profile;
  for (int i = 0; i <= stacks; ++i) {
    const double theta = 0.5 * kPi * i / stacks;
    profile.emplace_back(i == 0 ? 0.0 : radius * std::sin(theta),
                         -half_length - radius * std::cos(theta));
  }
  for (int i = stacks; i >= 0; --i) {
    const double theta = 0.5 * kPi * i / stacks;
    profile.emplace_back(i == 0 ? 0.0 : radius * std::sin(theta),
                         half_length + radius * std::cos(theta));
  }
  return revolve(profile, slices);
}

TriangleMesh make_torus(double major, double minor, int rings, int sides) {
  TriangleMesh mesh;
  for (int i = 0; i < rings; ++i) {
    const double u = 2.0 * kPi * i / rings;
    for (int j = 0; j < sides; ++j) {
      const double v = 2.0 * kPi * j / sides;
      const double r = major + minor * std::cos(v);
      mesh.vertices.emplace_back(r * std::cos(u), r * std::sin(u), minor * std::sin(v));
    }
  }
  auto id = [&](int i, int j) {
    return static_cast<std::uint32_t>(((i + rings) % rings) * sides + (j + sides) % sides);
  };
  for (int i = 0; i < rings; ++i) {
    for (int j = 0; j < sides; ++j) {
      mesh.faces.push_back(Face{id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      mesh.faces.push_back(Face{id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return mesh;
}

TriangleMesh make_octahedron(double sx, double sy, double sz) {
  TriangleMesh mesh;
  mesh.vertices = {Vec3(sx, 0, 0), Vec3(-sx, 0, 0), Vec3(0, sy, 0),
                   Vec3(0, -sy, 0), Vec3(0, 0, sz), Vec3(0, 0, -sz)};
  mesh.faces = {Face{0, 2, 4}, Face{2, 1, 4}, Face{1, 3, 4}, Face{3, 0, 4},
                Face{2, 0, 5}, Face{1, 2, 5}, Face{3, 1, 5}, Face{0, 3, 5}};
  return mesh;
}

TriangleMesh make_pyramid(double base, double height) {
  const double b = 0.5 * base;
  const double h = 0.5 * height;
  TriangleMesh mesh;
  mesh.vertices = {Vec3(-b, -b, -h), Vec3(b, -b, -h), Vec3(b, b, -h), Vec3(-b, b, -h),
                   Vec3(0, 0, h)};
  mesh.faces = {Face{0, 2, 1}, Face{0, 3, 2}, Face{0, 1, 4},
                Face{1, 2, 4}, Face{2, 3, 4}, Face{3, 0, 4}};
  return mesh;
}

std::vector<NamedMesh> toy_shapes(int instances) {
  if (instances < 1) fail(ErrorKind::InvalidConfig, "instances must be positive");
  std::vector<NamedMesh> out;
  auto add = [&](const std::string& label, int i, TriangleMesh mesh) {
    out.push_back({label + "_" + std::to_string(i), label, std::move(mesh)});
  };
  for (int i = 0; i < instances; ++i) {
    const double t = instances == 1 ? 0.0 : static_cast<double>(i) / (instances - 1);
    add("box", i, make_box(1.0, 0.7 + 0.3 * t, 0.5 + 0.3 * t));
    TriangleMesh ellipsoid = make_uv_sphere(24, 32);
    for (auto& v : ellipsoid.vertices) v.z() *= 1.0 - 0.3 * t;
    add("sphere", i, std::move(ellipsoid));
    add("cylinder", i, make_cylinder(0.5, 1.2 + 0.8 * t, 32));
    add("cone", i, make_cone(0.6, 1.0 + 0.8 * t, 32));
    add("torus", i, make_torus(1.0, 0.25 + 0.15 * t, 32, 16));
    add("octahedron", i, make_octahedron(1.0, 1.0, 1.0 + 0.5 * t));
    add("pyramid", i, make_pyramid(1.2, 0.8 + 0.6 * t));
    add("capsule", i, make_capsule(0.4, 0.4 + 0.4 * t, 8, 24));
  }
  return out;
}

}  // namespace occtip::meshgen
