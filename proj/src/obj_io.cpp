#include <fstream>
#include <iomanip>
#include <sstream>

#include "occtip/error.hpp"
#include "occtip/meshgen.hpp"

namespace occtip::meshgen {

namespace {

long parse_index(const std::string& token, std::size_t vertex_count, std::size_t line_no) {
  const auto slash = token.find('/');
  const std::string head = token.substr(0, slash);
  long idx = 0;
  try {
    std::size_t used = 0;
    idx = std::stol(head, &used);
    if (used != head.size()) throw std::invalid_argument(head);
  } catch (const std::exception&) {
    fail(ErrorKind::InvalidMesh, "line " + std::to_string(line_no) + ": bad face index '" + token + "'");
  }
  if (idx < 0) idx += static_cast<long>(vertex_count) + 1;
  if (idx < 1 || idx > static_cast<long>(vertex_count)) {
    fail(ErrorKind::InvalidMesh, "line " + std::to_string(line_no) + ": face index out of range");
  }
  return idx - 1;
}

}  // namespace

TriangleMesh parse_obj(const std::string& text) {
  TriangleMesh mesh;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool any_color = false;
  bool all_color = true;
  std::vector<Rgb> colors;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) {
        fail(ErrorKind::InvalidMesh, "line " + std::to_string(line_no) + ": malformed vertex");
      }
      mesh.vertices.emplace_back(x, y, z);
      double r, g, b;
      if (ls >> r >> g >> b) {
        any_color = true;
        colors.push_back({r, g, b});
      } else {
        all_color = false;
        colors.push_back({kMidGray, kMidGray, kMidGray});
      }
    } else if (tag == "f") {
      std::vector<long> poly;
      std::string tok;
      while (ls >> tok) poly.push_back(parse_index(tok, mesh.vertices.size(), line_no));
      if (poly.size() < 3) {
        fail(ErrorKind::InvalidMesh, "line " + std::to_string(line_no) + ": face with fewer than 3 vertices");
      }
      for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
        mesh.faces.push_back({static_cast<std::uint32_t>(poly[0]),
                              static_cast<std::uint32_t>(poly[i]),
                              static_cast<std::uint32_t>(poly[i + 1])});
      }
    }
  }
  if (any_color && all_color) mesh.vertex_colors = std::move(colors);
  return mesh;
}

TriangleMesh read_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::InvalidMesh, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_obj(buf.str());
}

std::string to_obj(const TriangleMesh& mesh) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto& v = mesh.vertices[i];
    out << "v " << v.x() << ' ' << v.y() << ' ' << v.z();
    if (mesh.has_colors()) {
      const auto& c = mesh.vertex_colors[i];
      out << ' ' << c[0] << ' ' << c[1] << ' ' << c[2];
    }
    out << '\n';
  }
  for (const auto& f : mesh.faces) {
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  }
  return out.str();
}

}  // namespace occtip::meshgen
